//! Dense 4-D tensors and the convolution primitives built on them.
//!
//! Layout is `(n, c, h, w)`, row-major within each `(h, w)` plane and
//! channel-major within a sample. Values are `f32`; every reduction
//! (convolution accumulators, channel means) runs in `f64` with a fixed
//! summation order so results are bit-stable regardless of thread count.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dimensions of a [`Tensor`]: batch, channels, height, width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per `(h, w)` plane.
    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Dense `(n, c, h, w)` array of finite `f32` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: vec![0.0; shape.len()] }
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        assert!(value.is_finite(), "tensor values must be finite");
        Tensor { shape, data: vec![value; shape.len()] }
    }

    /// Build a tensor from raw data. Rejects length mismatches and
    /// non-finite entries.
    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tensor contains non-finite value {bad}"
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    fn plane_offset(&self, n: usize, c: usize) -> usize {
        (n * self.shape.c + c) * self.shape.plane_len()
    }

    /// Immutable view of one `(h, w)` plane.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let off = self.plane_offset(n, c);
        &self.data[off..off + self.shape.plane_len()]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let off = self.plane_offset(n, c);
        let len = self.shape.plane_len();
        &mut self.data[off..off + len]
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.plane_offset(n, c) + y * self.shape.w + x]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let idx = self.plane_offset(n, c) + y * self.shape.w + x;
        self.data[idx] = v;
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `a*self + b*other`.
    pub fn lin_comb(&self, a: f32, other: &Tensor, b: f32) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "lin_comb of {} with {}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Tensor::from_vec(self.shape, data)
    }

    pub fn scale(&self, a: f32) -> Tensor {
        let data = self.data.iter().map(|&x| a * x).collect();
        Tensor { shape: self.shape, data }
    }

    /// Write the flat binary format: four little-endian `u32` dims followed
    /// by little-endian `f32` values.
    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        for d in [self.shape.n, self.shape.c, self.shape.h, self.shape.w] {
            let dim = u32::try_from(d).map_err(|_| {
                Error::InvalidArgument(format!("dimension {d} exceeds u32 range"))
            })?;
            out.write_all(&dim.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    /// Read the flat binary format written by [`Tensor::write_to`].
    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; 16];
        input.read_exact(&mut header)?;
        let dim = |i: usize| {
            u32::from_le_bytes(header[4 * i..4 * i + 4].try_into().unwrap()) as usize
        };
        let shape = Shape::new(dim(0), dim(1), dim(2), dim(3));
        let mut raw = vec![0u8; shape.len() * 4];
        input.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Tensor::from_vec(shape, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Tensor::read_from(&mut file)
    }
}

/// Mean over the `(h, w)` entries of each `(n, c)` plane, `f64` accumulation.
///
/// Returned values are indexed `n * c + channel`.
pub fn channel_mean(x: &Tensor) -> Vec<f32> {
    let shape = x.shape();
    let norm = 1.0 / shape.plane_len() as f64;
    let mut means = Vec::with_capacity(shape.n * shape.c);
    for n in 0..shape.n {
        for c in 0..shape.c {
            let sum: f64 = x.plane(n, c).iter().map(|&v| v as f64).sum();
            means.push((sum * norm) as f32);
        }
    }
    means
}

/// Subtract the per-plane mean from every entry: `x - channel_mean(x)`.
pub fn subtract_channel_mean(x: &Tensor) -> Tensor {
    let shape = x.shape();
    let means = channel_mean(x);
    let mut out = x.clone();
    for n in 0..shape.n {
        for c in 0..shape.c {
            let mu = means[n * shape.c + c];
            for v in out.plane_mut(n, c) {
                *v -= mu;
            }
        }
    }
    out
}

fn check_conv_args(x: &Tensor, weights: &Tensor, stride: usize) -> Result<usize> {
    let ws = weights.shape();
    if ws.h != ws.w {
        return Err(Error::InvalidArgument(format!(
            "convolution kernel must be square, got {}x{}",
            ws.h, ws.w
        )));
    }
    if ws.h % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "convolution kernel size must be odd, got {}",
            ws.h
        )));
    }
    if x.shape().c != ws.c {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels but weights expect {}",
            x.shape().c,
            ws.c
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be >= 1".into()));
    }
    Ok(ws.h)
}

fn conv_output_extent(input: usize, k: usize, padding: usize, stride: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < k {
        return Err(Error::ShapeMismatch(format!(
            "input extent {input} with padding {padding} is smaller than kernel {k}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// 2-D cross-correlation with zero padding.
///
/// `x` is `(n, c_in, h, w)`, `weights` is `(c_out, c_in, k, k)` with odd `k`.
/// Output pixel `(u, v)` is the sum over input channels and kernel taps of
/// `x(u*stride + p - padding, v*stride + q - padding) * w(p, q)`, with zeros
/// outside the input bounds. Accumulation is `f64` in a fixed order.
pub fn conv2d(x: &Tensor, weights: &Tensor, padding: usize, stride: usize) -> Result<Tensor> {
    let k = check_conv_args(x, weights, stride)?;
    let xs = x.shape();
    let ws = weights.shape();
    let out_h = conv_output_extent(xs.h, k, padding, stride)?;
    let out_w = conv_output_extent(xs.w, k, padding, stride)?;
    let out_shape = Shape::new(xs.n, ws.n, out_h, out_w);

    let mut out = Tensor::zeros(out_shape);
    // Samples are independent; each worker owns the full per-sample slice.
    let per_sample = ws.n * out_h * out_w;
    out.data_mut()
        .par_chunks_mut(per_sample)
        .enumerate()
        .for_each(|(n, sample_out)| {
            let mut acc = vec![0f64; out_h * out_w];
            for o in 0..ws.n {
                acc.fill(0.0);
                for i in 0..xs.c {
                    let xp = x.plane(n, i);
                    let wp = weights.plane(o, i);
                    for p in 0..k {
                        for q in 0..k {
                            let wv = wp[p * k + q] as f64;
                            if wv == 0.0 {
                                continue;
                            }
                            accumulate_shifted(
                                &mut acc, xp, xs.h, xs.w, out_h, out_w, p, q, padding, stride, wv,
                            );
                        }
                    }
                }
                let dst = &mut sample_out[o * out_h * out_w..(o + 1) * out_h * out_w];
                for (d, &a) in dst.iter_mut().zip(acc.iter()) {
                    *d = a as f32;
                }
            }
        });
    Ok(out)
}

/// `acc(u, v) += wv * x(u*stride + p - padding, v*stride + q - padding)`
/// for all output pixels whose source lands inside the input plane.
#[allow(clippy::too_many_arguments)]
#[inline]
fn accumulate_shifted(
    acc: &mut [f64],
    xp: &[f32],
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    p: usize,
    q: usize,
    padding: usize,
    stride: usize,
    wv: f64,
) {
    // Valid u range: 0 <= u*stride + p - padding < in_h.
    let (u_lo, u_hi) = valid_range(out_h, in_h, p, padding, stride);
    let (v_lo, v_hi) = valid_range(out_w, in_w, q, padding, stride);
    if u_lo >= u_hi || v_lo >= v_hi {
        return;
    }
    for u in u_lo..u_hi {
        let y = u * stride + p - padding;
        let row = &xp[y * in_w..(y + 1) * in_w];
        let arow = &mut acc[u * out_w..u * out_w + out_w];
        if stride == 1 {
            // q - padding may be negative; v_lo already compensates.
            let src = &row[(v_lo + q - padding)..(v_hi - 1 + q - padding) + 1];
            for (a, &xv) in arow[v_lo..v_hi].iter_mut().zip(src.iter()) {
                *a += wv * xv as f64;
            }
        } else {
            for (v, a) in arow.iter_mut().enumerate().take(v_hi).skip(v_lo) {
                *a += wv * row[v * stride + q - padding] as f64;
            }
        }
    }
}

/// Output index range `[lo, hi)` for which `idx*stride + tap - padding`
/// stays within `[0, extent)`.
#[inline]
fn valid_range(out_extent: usize, extent: usize, tap: usize, padding: usize, stride: usize) -> (usize, usize) {
    let lo = padding.saturating_sub(tap).div_ceil(stride);
    // Largest idx with idx*stride <= extent - 1 + padding - tap.
    let limit = extent as isize - 1 + padding as isize - tap as isize;
    if limit < 0 {
        return (0, 0);
    }
    let hi = (limit as usize / stride + 1).min(out_extent);
    (lo.min(hi), hi)
}

/// Gradient of [`conv2d`] with respect to its input.
///
/// Scatters `grad_out` back through the kernel taps onto a tensor with the
/// given `input_shape`. Fixed accumulation order, `f64` accumulators.
pub fn conv2d_input_grad(
    grad_out: &Tensor,
    weights: &Tensor,
    padding: usize,
    stride: usize,
    input_shape: Shape,
) -> Result<Tensor> {
    let ws = weights.shape();
    let gs = grad_out.shape();
    let k = ws.h;
    if gs.c != ws.n {
        return Err(Error::ShapeMismatch(format!(
            "grad_out has {} channels but weights produce {}",
            gs.c, ws.n
        )));
    }
    if input_shape.c != ws.c || input_shape.n != gs.n {
        return Err(Error::ShapeMismatch(format!(
            "input shape {input_shape} incompatible with weights {ws} and grad {gs}",
        )));
    }

    let mut grad_in = Tensor::zeros(input_shape);
    let per_sample = input_shape.c * input_shape.plane_len();
    grad_in
        .data_mut()
        .par_chunks_mut(per_sample)
        .enumerate()
        .for_each(|(n, sample_grad)| {
            let mut acc = vec![0f64; input_shape.plane_len()];
            for i in 0..input_shape.c {
                acc.fill(0.0);
                for o in 0..ws.n {
                    let gp = grad_out.plane(n, o);
                    let wp = weights.plane(o, i);
                    for p in 0..k {
                        for q in 0..k {
                            let wv = wp[p * k + q] as f64;
                            if wv == 0.0 {
                                continue;
                            }
                            let (u_lo, u_hi) =
                                valid_range(gs.h, input_shape.h, p, padding, stride);
                            let (v_lo, v_hi) =
                                valid_range(gs.w, input_shape.w, q, padding, stride);
                            for u in u_lo..u_hi {
                                let y = u * stride + p - padding;
                                let grow = &gp[u * gs.w..u * gs.w + gs.w];
                                let arow = &mut acc[y * input_shape.w..(y + 1) * input_shape.w];
                                if stride == 1 {
                                    let off = v_lo + q - padding; // in-bounds by v_lo
                                    for (idx, &g) in grow[v_lo..v_hi].iter().enumerate() {
                                        arow[off + idx] += wv * g as f64;
                                    }
                                } else {
                                    for (v, &g) in
                                        grow.iter().enumerate().take(v_hi).skip(v_lo)
                                    {
                                        arow[v * stride + q - padding] += wv * g as f64;
                                    }
                                }
                            }
                        }
                    }
                }
                let dst = &mut sample_grad
                    [i * input_shape.plane_len()..(i + 1) * input_shape.plane_len()];
                for (d, &a) in dst.iter_mut().zip(acc.iter()) {
                    *d = a as f32;
                }
            }
        });
    Ok(grad_in)
}

/// Gradient of [`conv2d`] with respect to its weights.
///
/// `d_w(o, i, p, q) = sum over n, u, v of grad_out(n, o, u, v) *
/// x(n, i, u*stride + p - padding, v*stride + q - padding)`.
/// Per-sample partials are reduced in sample order so the result does not
/// depend on thread count.
pub fn conv2d_weight_grad(
    x: &Tensor,
    grad_out: &Tensor,
    padding: usize,
    stride: usize,
    kernel: usize,
) -> Result<Tensor> {
    let xs = x.shape();
    let gs = grad_out.shape();
    if xs.n != gs.n {
        return Err(Error::ShapeMismatch(format!(
            "input batch {} does not match grad batch {}",
            xs.n, gs.n
        )));
    }
    let wshape = Shape::new(gs.c, xs.c, kernel, kernel);

    let partials: Vec<Vec<f64>> = (0..xs.n)
        .into_par_iter()
        .map(|n| {
            let mut acc = vec![0f64; wshape.len()];
            for o in 0..gs.c {
                let gp = grad_out.plane(n, o);
                for i in 0..xs.c {
                    let xp = x.plane(n, i);
                    for p in 0..kernel {
                        for q in 0..kernel {
                            let (u_lo, u_hi) = valid_range(gs.h, xs.h, p, padding, stride);
                            let (v_lo, v_hi) = valid_range(gs.w, xs.w, q, padding, stride);
                            let mut sum = 0f64;
                            for u in u_lo..u_hi {
                                let y = u * stride + p - padding;
                                let grow = &gp[u * gs.w..u * gs.w + gs.w];
                                let xrow = &xp[y * xs.w..(y + 1) * xs.w];
                                if stride == 1 {
                                    let off = v_lo + q - padding;
                                    for (idx, &g) in grow[v_lo..v_hi].iter().enumerate() {
                                        sum += g as f64 * xrow[off + idx] as f64;
                                    }
                                } else {
                                    for (v, &g) in
                                        grow.iter().enumerate().take(v_hi).skip(v_lo)
                                    {
                                        sum += g as f64 * xrow[v * stride + q - padding] as f64;
                                    }
                                }
                            }
                            acc[((o * xs.c + i) * kernel + p) * kernel + q] += sum;
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = vec![0f64; wshape.len()];
    for part in &partials {
        for (t, &p) in total.iter_mut().zip(part.iter()) {
            *t += p;
        }
    }
    Tensor::from_vec(wshape, total.into_iter().map(|v| v as f32).collect())
}
