//! 8-bit image file IO: PNG plus binary PGM/PPM.
//!
//! PNG goes through the `image` crate (8-bit, non-interlaced output); the
//! netpbm formats are written by hand in a canonical form so that writing
//! the same pixels twice produces byte-identical files.

use std::io::Write;
use std::path::Path;

use crate::degrade::ImagePlane;
use crate::error::{Error, Result};

/// Read an 8-bit gray or RGB image; format chosen by extension.
pub fn image_read(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    match extension(path)?.as_str() {
        "png" => read_png(path),
        "pgm" | "ppm" | "pnm" => read_pnm(path),
        other => Err(Error::Image(format!("unsupported image extension '{other}'"))),
    }
}

/// Write an image (values rounded and clamped to 8 bits); format chosen by
/// extension. Gray images go to PGM, RGB to PPM, both to PNG.
pub fn image_write(path: impl AsRef<Path>, img: &ImagePlane) -> Result<()> {
    let path = path.as_ref();
    match extension(path)?.as_str() {
        "png" => write_png(path, img),
        "pgm" => {
            if img.channels() != 1 {
                return Err(Error::Image("pgm files hold a single channel".into()));
            }
            write_pnm(path, img)
        }
        "ppm" => {
            if img.channels() != 3 {
                return Err(Error::Image("ppm files hold three channels".into()));
            }
            write_pnm(path, img)
        }
        other => Err(Error::Image(format!("unsupported image extension '{other}'"))),
    }
}

fn extension(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| Error::Image(format!("no file extension on {}", path.display())))
}

fn read_png(path: &Path) -> Result<ImagePlane> {
    let dynimg = image::ImageReader::open(path)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
        .decode()
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    match dynimg {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            ImagePlane::from_interleaved_u8(1, h, w, img.as_raw())
        }
        image::DynamicImage::ImageRgb8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            ImagePlane::from_interleaved_u8(3, h, w, img.as_raw())
        }
        image::DynamicImage::ImageLuma16(_)
        | image::DynamicImage::ImageRgb16(_)
        | image::DynamicImage::ImageLumaA16(_)
        | image::DynamicImage::ImageRgba16(_) => Err(Error::Image(format!(
            "{}: 16-bit images are not supported; provide 8-bit input",
            path.display()
        ))),
        other => Err(Error::Image(format!(
            "{}: unsupported pixel layout {:?}; provide 8-bit gray or RGB",
            path.display(),
            other.color()
        ))),
    }
}

fn write_png(path: &Path, img: &ImagePlane) -> Result<()> {
    let raw = img.to_interleaved_u8();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let err = |e: image::ImageError| Error::Image(format!("{}: {e}", path.display()));
    match img.channels() {
        1 => image::GrayImage::from_raw(w, h, raw)
            .expect("buffer sized to dimensions")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(err),
        3 => image::RgbImage::from_raw(w, h, raw)
            .expect("buffer sized to dimensions")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(err),
        c => Err(Error::Image(format!("cannot write {c}-channel png"))),
    }
}

fn write_pnm(path: &Path, img: &ImagePlane) -> Result<()> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "{magic}\n{} {}\n255\n", img.width(), img.height())?;
    out.write_all(&img.to_interleaved_u8())?;
    Ok(())
}

fn read_pnm(path: &Path) -> Result<ImagePlane> {
    let raw = std::fs::read(path)?;
    let mut pos = 0usize;

    let mut next_token = |raw: &[u8]| -> Result<String> {
        // Skip whitespace and '#' comments between header fields.
        loop {
            while pos < raw.len() && raw[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < raw.len() && raw[pos] == b'#' {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Image(format!("{}: truncated header", path.display())));
        }
        Ok(String::from_utf8_lossy(&raw[start..pos]).into_owned())
    };

    let magic = next_token(&raw)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => {
            return Err(Error::Image(format!(
                "{}: unsupported netpbm magic '{other}' (binary P5/P6 only)",
                path.display()
            )))
        }
    };
    let parse = |tok: String| -> Result<usize> {
        tok.parse()
            .map_err(|_| Error::Image(format!("{}: bad header field '{tok}'", path.display())))
    };
    let w = parse(next_token(&raw)?)?;
    let h = parse(next_token(&raw)?)?;
    let maxval = parse(next_token(&raw)?)?;
    if maxval > 255 {
        return Err(Error::Image(format!(
            "{}: 16-bit images are not supported (maxval {maxval}); provide 8-bit input",
            path.display()
        )));
    }
    pos += 1; // single whitespace byte after maxval
    let need = channels * h * w;
    if raw.len() < pos + need {
        return Err(Error::Image(format!(
            "{}: pixel data truncated ({} of {need} bytes)",
            path.display(),
            raw.len().saturating_sub(pos)
        )));
    }
    ImagePlane::from_interleaved_u8(channels, h, w, &raw[pos..pos + need])
}
