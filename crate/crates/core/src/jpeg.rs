//! Baseline-JPEG-style degradation: what quantizing 8x8 DCT blocks does to
//! pixel values, nothing more.
//!
//! Entropy coding is lossless and irrelevant to the pixels, so there is no
//! bitstream. Three-channel images pass through full-range YCbCr with no
//! chroma subsampling; every channel is split into 8x8 blocks (edges
//! replicated), transformed, quantized with the IJG quality-scaled standard
//! tables, dequantized, and transformed back.

use crate::degrade::ImagePlane;
use crate::error::{Error, Result};

/// IJG standard luminance quantization table (row-major).
pub const BASE_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// IJG standard chrominance quantization table (row-major).
pub const BASE_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

fn scale_table(base: &[u16; 64], quality: u32) -> [u16; 64] {
    // IJG scaling: quality < 50 uses 5000/q, otherwise 200 - 2q.
    let scale = if quality < 50 { 5000 / quality } else { 200 - 2 * quality };
    let mut out = [0u16; 64];
    for (dst, &b) in out.iter_mut().zip(base.iter()) {
        let v = (u32::from(b) * scale + 50) / 100;
        *dst = v.clamp(1, 255) as u16;
    }
    out
}

/// Quality-scaled (luminance, chrominance) quantization tables.
/// Quality must be in `[1, 100]`; 0 means bypass and has no tables.
pub fn quant_tables(quality: u32) -> Result<([u16; 64], [u16; 64])> {
    if quality == 0 || quality > 100 {
        return Err(Error::InvalidArgument(format!(
            "quantization tables require quality in [1, 100], got {quality}"
        )));
    }
    Ok((scale_table(&BASE_LUMA, quality), scale_table(&BASE_CHROMA, quality)))
}

/// Orthonormal 8-point DCT-II basis; `BASIS[u][x] = c(u) cos((2x+1)u pi/16)`.
/// The 2-D transform `B f B^T` matches the JPEG DCT normalization.
fn dct_basis() -> [[f64; 8]; 8] {
    let mut m = [[0f64; 8]; 8];
    for (u, row) in m.iter_mut().enumerate() {
        let c = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (x, v) in row.iter_mut().enumerate() {
            *v = c * ((2.0 * x as f64 + 1.0) * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    m
}

/// Quantize one channel plane through the 8x8 DCT in place.
fn quantize_plane(plane: &mut [f64], h: usize, w: usize, table: &[u16; 64]) {
    let basis = dct_basis();
    let bh = h.div_ceil(8);
    let bw = w.div_ceil(8);
    let mut block = [0f64; 64];
    let mut tmp = [0f64; 64];
    let mut freq = [0f64; 64];
    for by in 0..bh {
        for bx in 0..bw {
            // Gather with replicate padding and the -128 level shift.
            for i in 0..8 {
                let sy = (by * 8 + i).min(h - 1);
                for j in 0..8 {
                    let sx = (bx * 8 + j).min(w - 1);
                    block[i * 8 + j] = plane[sy * w + sx] - 128.0;
                }
            }
            // freq = B block B^T
            for u in 0..8 {
                for j in 0..8 {
                    let mut acc = 0f64;
                    for x in 0..8 {
                        acc += basis[u][x] * block[x * 8 + j];
                    }
                    tmp[u * 8 + j] = acc;
                }
            }
            for u in 0..8 {
                for v in 0..8 {
                    let mut acc = 0f64;
                    for x in 0..8 {
                        acc += tmp[u * 8 + x] * basis[v][x];
                    }
                    let q = table[u * 8 + v] as f64;
                    freq[u * 8 + v] = (acc / q).round() * q;
                }
            }
            // block = B^T freq B
            for x in 0..8 {
                for v in 0..8 {
                    let mut acc = 0f64;
                    for u in 0..8 {
                        acc += basis[u][x] * freq[u * 8 + v];
                    }
                    tmp[x * 8 + v] = acc;
                }
            }
            for x in 0..8 {
                for y2 in 0..8 {
                    let mut acc = 0f64;
                    for v in 0..8 {
                        acc += tmp[x * 8 + v] * basis[v][y2];
                    }
                    block[x * 8 + y2] = acc + 128.0;
                }
            }
            // Scatter the in-bounds part back.
            for i in 0..8 {
                let sy = by * 8 + i;
                if sy >= h {
                    break;
                }
                for j in 0..8 {
                    let sx = bx * 8 + j;
                    if sx >= w {
                        break;
                    }
                    plane[sy * w + sx] = block[i * 8 + j];
                }
            }
        }
    }
}

/// JPEG-style quantization roundtrip at the given quality factor.
/// `quality = 0` bypasses compression and returns the image bit-identically.
pub fn jpeg_roundtrip(img: &ImagePlane, quality: u32) -> Result<ImagePlane> {
    if quality == 0 {
        return Ok(img.clone());
    }
    let (luma_tbl, chroma_tbl) = quant_tables(quality)?;
    let (h, w) = (img.height(), img.width());

    if img.channels() == 1 {
        let mut plane: Vec<f64> = img.plane(0).iter().map(|&v| v as f64).collect();
        quantize_plane(&mut plane, h, w, &luma_tbl);
        let data: Vec<f32> = plane.iter().map(|&v| v.clamp(0.0, 255.0) as f32).collect();
        return ImagePlane::from_vec(1, h, w, data);
    }

    // Full-range BT.601, no chroma subsampling.
    let n = h * w;
    let (rp, gp, bp) = (img.plane(0), img.plane(1), img.plane(2));
    let mut yy = vec![0f64; n];
    let mut cb = vec![0f64; n];
    let mut cr = vec![0f64; n];
    for i in 0..n {
        let (r, g, b) = (rp[i] as f64, gp[i] as f64, bp[i] as f64);
        yy[i] = 0.299 * r + 0.587 * g + 0.114 * b;
        cb[i] = -0.168_735_89 * r - 0.331_264_11 * g + 0.5 * b + 128.0;
        cr[i] = 0.5 * r - 0.418_687_59 * g - 0.081_312_41 * b + 128.0;
    }
    quantize_plane(&mut yy, h, w, &luma_tbl);
    quantize_plane(&mut cb, h, w, &chroma_tbl);
    quantize_plane(&mut cr, h, w, &chroma_tbl);

    let mut out = ImagePlane::new(3, h, w)?;
    for i in 0..n {
        let (y, u, v) = (yy[i], cb[i] - 128.0, cr[i] - 128.0);
        let r = y + 1.402 * v;
        let g = y - 0.344_136_29 * u - 0.714_136_29 * v;
        let b = y + 1.772 * u;
        out.plane_mut(0)[i] = r.clamp(0.0, 255.0) as f32;
        out.plane_mut(1)[i] = g.clamp(0.0, 255.0) as f32;
        out.plane_mut(2)[i] = b.clamp(0.0, 255.0) as f32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_zero_is_bitexact_bypass() {
        let img = ImagePlane::from_vec(1, 10, 10, (0..100).map(|i| i as f32).collect()).unwrap();
        let out = jpeg_roundtrip(&img, 0).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn quality_fifty_tables_equal_base_tables() {
        let (luma, chroma) = quant_tables(50).unwrap();
        assert_eq!(luma, BASE_LUMA);
        assert_eq!(chroma, BASE_CHROMA);
    }

    #[test]
    fn table_scaling_formula() {
        // quality < 50 scales by 5000/q, otherwise 200 - 2q, floor division,
        // clamped to [1, 255].
        let (luma, _) = quant_tables(10).unwrap();
        for (got, &base) in luma.iter().zip(BASE_LUMA.iter()) {
            let want = ((u32::from(base) * 500 + 50) / 100).clamp(1, 255) as u16;
            assert_eq!(*got, want);
        }
        let (luma, _) = quant_tables(90).unwrap();
        for (got, &base) in luma.iter().zip(BASE_LUMA.iter()) {
            let want = ((u32::from(base) * 20 + 50) / 100).clamp(1, 255) as u16;
            assert_eq!(*got, want);
        }
        let (luma, _) = quant_tables(100).unwrap();
        assert!(luma.iter().all(|&v| v == 1), "quality 100 floors at 1");
    }

    #[test]
    fn rejects_out_of_range_quality() {
        assert!(quant_tables(0).is_err());
        assert!(quant_tables(101).is_err());
        let img = ImagePlane::new(1, 8, 8).unwrap();
        assert!(jpeg_roundtrip(&img, 101).is_err());
    }

    #[test]
    fn constant_image_stays_constant() {
        // Only the DC coefficient is nonzero for a flat block; its
        // quantization moves the value by at most table[0]/16. At quality 50
        // the DC step is 16, so the bound is exactly 1.
        for &quality in &[50u32, 75, 90, 30] {
            let (luma, _) = quant_tables(quality).unwrap();
            let bound = luma[0] as f32 / 16.0 + 1e-3;
            for &value in &[37.5f32, 128.0, 200.25] {
                let img = ImagePlane::from_vec(1, 16, 24, vec![value; 16 * 24]).unwrap();
                let out = jpeg_roundtrip(&img, quality).unwrap();
                let first = out.data()[0];
                for &v in out.data() {
                    assert!((v - first).abs() < 1e-4, "output must stay flat");
                }
                assert!(
                    (first - value).abs() <= bound,
                    "quality {quality}, value {value}: got {first}, bound {bound}"
                );
            }
        }
    }

    #[test]
    fn constant_rgb_stays_near_constant() {
        let img = ImagePlane::from_vec(3, 16, 16, vec![90.0; 3 * 256]).unwrap();
        let out = jpeg_roundtrip(&img, 50).unwrap();
        for c in 0..3 {
            let first = out.plane(c)[0];
            for &v in out.plane(c) {
                assert!((v - first).abs() < 1e-4);
            }
            assert!((first - 90.0).abs() <= 2.0, "channel {c}: {first}");
        }
    }

    #[test]
    fn high_quality_beats_low_quality() {
        let mut img = ImagePlane::new(1, 24, 24).unwrap();
        for y in 0..24 {
            for x in 0..24 {
                img.set(0, y, x, ((x * 11 + y * 17) % 256) as f32);
            }
        }
        let err = |q: u32| {
            let out = jpeg_roundtrip(&img, q).unwrap();
            out.data()
                .iter()
                .zip(img.data())
                .map(|(&a, &b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
        };
        let (e90, e10) = (err(90), err(10));
        assert!(e90 < e10, "quality 90 mse {e90} must beat quality 10 mse {e10}");
    }

    #[test]
    fn non_multiple_of_eight_sizes_are_handled() {
        let mut img = ImagePlane::new(3, 13, 19).unwrap();
        for c in 0..3 {
            for y in 0..13 {
                for x in 0..19 {
                    img.set(c, y, x, ((x * 31 + y * 7 + c * 53) % 256) as f32);
                }
            }
        }
        let out = jpeg_roundtrip(&img, 40).unwrap();
        assert_eq!((out.channels(), out.height(), out.width()), (3, 13, 19));
        for &v in out.data() {
            assert!((0.0..=255.0).contains(&v));
        }
    }

    #[test]
    fn deterministic() {
        let img = ImagePlane::from_vec(1, 16, 16, (0..256).map(|i| i as f32).collect()).unwrap();
        let a = jpeg_roundtrip(&img, 25).unwrap();
        let b = jpeg_roundtrip(&img, 25).unwrap();
        assert_eq!(a, b);
    }
}
