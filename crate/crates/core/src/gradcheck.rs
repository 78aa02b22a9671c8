//! Central finite-difference validation of the hand-written backward passes.
//!
//! The reference forward runs entirely in `f64` and is written naively
//! (window gather for the median, quadruple loop for the convolution), so it
//! shares no code with the production path it checks. Inputs are generated
//! tie-free with an order-statistic gap wider than the probe step, which
//! keeps the median selection stable under perturbation and makes the
//! subgradient the true local derivative.

use crate::mediconv::{kaiming_uniform, ConvLayer, MeDiConvLayer};
use crate::rng::RngStream;
use crate::tensor::{Shape, Tensor};

/// Central-difference step. The tie-free generator guarantees order
/// statistics at least 0.03 apart, so +-1e-3 never flips a selection.
const FD_STEP: f64 = 1e-3;

/// Result of one finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub layer: &'static str,
    pub target: &'static str,
    pub max_rel_error: f64,
}

/// Which layers to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerChoice {
    All,
    Std,
    Medi,
    Median,
}

/// Tensor whose values are a shuffled arithmetic progression with jitter:
/// all pairwise gaps are at least 0.03, so windows are tie-free and stay
/// tie-free under the probe step.
pub fn tie_free_tensor(shape: Shape, rng: &mut RngStream) -> Tensor {
    let len = shape.len();
    let mut order: Vec<usize> = (0..len).collect();
    rng.shuffle(&mut order);
    let mut data = vec![0f32; len];
    for (slot, rank) in order.into_iter().enumerate() {
        let jitter = rng.uniform(-0.01, 0.01) as f32;
        data[slot] = rank as f32 * 0.05 + jitter;
    }
    Tensor::from_vec(shape, data).expect("tie-free values are finite")
}

/// Naive f64 median filter with replicate borders (values only).
fn median_f64(src: &[f64], h: usize, w: usize, window: usize) -> Vec<f64> {
    if window == 1 {
        return src.to_vec();
    }
    let r = (window as isize - 1) / 2;
    let mut out = vec![0f64; h * w];
    let mut vals = Vec::with_capacity(window * window);
    for u in 0..h {
        for v in 0..w {
            vals.clear();
            for dy in -r..=r {
                let y = (u as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    let x = (v as isize + dx).clamp(0, w as isize - 1) as usize;
                    vals.push(src[y * w + x]);
                }
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out[u * w + v] = vals[(window * window - 1) / 2];
        }
    }
    out
}

/// f64 state for the reference forward: one flat buffer per (n, c) plane.
struct RefInput {
    shape: Shape,
    data: Vec<f64>,
}

impl RefInput {
    fn from_tensor(t: &Tensor) -> Self {
        RefInput {
            shape: t.shape(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    fn plane(&self, n: usize, c: usize) -> &[f64] {
        let len = self.shape.plane_len();
        let off = (n * self.shape.c + c) * len;
        &self.data[off..off + len]
    }
}

/// Reference loss: `sum(conv(x, w))` in f64, quadruple loop.
fn std_loss_f64(x: &RefInput, w: &RefInput, padding: usize, stride: usize) -> f64 {
    conv_sum_f64(&x.data, x.shape, &w.data, w.shape, padding, stride)
}

/// Reference loss: `sum(conv(median(x) - mu, w))` in f64.
fn medi_loss_f64(
    x: &RefInput,
    w: &RefInput,
    window: usize,
    padding: usize,
    stride: usize,
) -> f64 {
    let shape = x.shape;
    let plane_len = shape.plane_len();
    let mut centered = vec![0f64; x.data.len()];
    for n in 0..shape.n {
        for c in 0..shape.c {
            let med = median_f64(x.plane(n, c), shape.h, shape.w, window);
            let mu: f64 = med.iter().sum::<f64>() / plane_len as f64;
            let off = (n * shape.c + c) * plane_len;
            for (dst, m) in centered[off..off + plane_len].iter_mut().zip(med) {
                *dst = m - mu;
            }
        }
    }
    conv_sum_f64(&centered, shape, &w.data, w.shape, padding, stride)
}

fn conv_sum_f64(
    x: &[f64],
    xs: Shape,
    w: &[f64],
    ws: Shape,
    padding: usize,
    stride: usize,
) -> f64 {
    let k = ws.h;
    let out_h = (xs.h + 2 * padding - k) / stride + 1;
    let out_w = (xs.w + 2 * padding - k) / stride + 1;
    let mut total = 0f64;
    for n in 0..xs.n {
        for o in 0..ws.n {
            for u in 0..out_h {
                for v in 0..out_w {
                    let mut acc = 0f64;
                    for i in 0..xs.c {
                        for p in 0..k {
                            for q in 0..k {
                                let y = (u * stride + p) as isize - padding as isize;
                                let xc = (v * stride + q) as isize - padding as isize;
                                if y < 0 || y >= xs.h as isize || xc < 0 || xc >= xs.w as isize
                                {
                                    continue;
                                }
                                acc += x[(n * xs.c + i) * xs.h * xs.w
                                    + y as usize * xs.w
                                    + xc as usize]
                                    * w[(o * ws.c + i) * k * k + p * k + q];
                            }
                        }
                    }
                    total += acc;
                }
            }
        }
    }
    total
}

fn max_rel_error(analytic: &Tensor, fd: &[f64]) -> f64 {
    // Coordinates whose true gradient is exactly zero (for example the
    // center tap against a mean-centered map) carry only f32 rounding
    // residue; measure them against the gradient scale instead of
    // themselves.
    let scale = fd.iter().fold(0f64, |m, &v| m.max(v.abs()));
    let floor = (scale * 1e-2).max(1e-4);
    analytic
        .data()
        .iter()
        .zip(fd.iter())
        .map(|(&a, &f)| {
            let a = a as f64;
            let denom = a.abs().max(f.abs()).max(floor);
            (a - f).abs() / denom
        })
        .fold(0f64, f64::max)
}

fn central_differences(loss: impl Fn(&[f64]) -> f64, base: &[f64]) -> Vec<f64> {
    let mut probe = base.to_vec();
    let mut grads = Vec::with_capacity(base.len());
    for j in 0..base.len() {
        let orig = probe[j];
        probe[j] = orig + FD_STEP;
        let plus = loss(&probe);
        probe[j] = orig - FD_STEP;
        let minus = loss(&probe);
        probe[j] = orig;
        grads.push((plus - minus) / (2.0 * FD_STEP));
    }
    grads
}

/// Check the standard conv layer; returns (weight error, input error).
pub fn check_std_conv(seed: u64) -> (f64, f64) {
    let mut rng = RngStream::new(seed, 101);
    let x = tie_free_tensor(Shape::new(1, 2, 8, 8), &mut rng);
    let w = kaiming_uniform(3, 2, 3, &mut rng);
    let mut layer = ConvLayer::new(w.clone()).unwrap();
    let out = layer.forward(&x).unwrap();
    let grads = layer.backward(&Tensor::full(out.shape(), 1.0)).unwrap();

    let rx = RefInput::from_tensor(&x);
    let rw = RefInput::from_tensor(&w);
    let fd_w = central_differences(
        |wd| std_loss_f64(&rx, &RefInput { shape: rw.shape, data: wd.to_vec() }, 1, 1),
        &rw.data,
    );
    let fd_x = central_differences(
        |xd| std_loss_f64(&RefInput { shape: rx.shape, data: xd.to_vec() }, &rw, 1, 1),
        &rx.data,
    );
    (max_rel_error(&grads.d_weights, &fd_w), max_rel_error(&grads.d_input, &fd_x))
}

/// Check the median layer; returns (weight error, input error).
pub fn check_medi_conv(seed: u64) -> (f64, f64) {
    let window = 3;
    let mut rng = RngStream::new(seed, 202);
    let x = tie_free_tensor(Shape::new(1, 2, 8, 8), &mut rng);
    let w = kaiming_uniform(3, 2, 3, &mut rng);
    let mut layer = MeDiConvLayer::new(w.clone(), window).unwrap();
    let out = layer.forward(&x).unwrap();
    let grads = layer.backward(&Tensor::full(out.shape(), 1.0)).unwrap();

    let rx = RefInput::from_tensor(&x);
    let rw = RefInput::from_tensor(&w);
    let fd_w = central_differences(
        |wd| medi_loss_f64(&rx, &RefInput { shape: rw.shape, data: wd.to_vec() }, window, 1, 1),
        &rw.data,
    );
    let fd_x = central_differences(
        |xd| medi_loss_f64(&RefInput { shape: rx.shape, data: xd.to_vec() }, &rw, window, 1, 1),
        &rx.data,
    );
    (max_rel_error(&grads.d_weights, &fd_w), max_rel_error(&grads.d_input, &fd_x))
}

/// Check argmedian gradient routing on `sum(median_filter(x))`.
pub fn check_median_routing(seed: u64) -> f64 {
    use crate::median::{median_backward, median_filter, MedianConfig};

    let window = 3;
    let mut rng = RngStream::new(seed, 303);
    let x = tie_free_tensor(Shape::new(1, 1, 9, 9), &mut rng);
    let cfg = MedianConfig::new(window).unwrap();
    let (out, argmap) = median_filter(&x, &cfg).unwrap();
    let analytic = median_backward(&Tensor::full(out.shape(), 1.0), &argmap).unwrap();

    let rx = RefInput::from_tensor(&x);
    let shape = x.shape();
    let fd = central_differences(
        |xd| median_f64(xd, shape.h, shape.w, window).iter().sum(),
        &rx.data,
    );
    max_rel_error(&analytic, &fd)
}

/// Run `trials` seeded checks per selected layer and aggregate the worst
/// relative error per (layer, target).
pub fn run(choice: LayerChoice, seed: u64, trials: usize) -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let want = |c: LayerChoice| choice == LayerChoice::All || choice == c;

    if want(LayerChoice::Std) {
        let (mut w_err, mut x_err) = (0f64, 0f64);
        for t in 0..trials {
            let (we, xe) = check_std_conv(seed.wrapping_add(t as u64));
            w_err = w_err.max(we);
            x_err = x_err.max(xe);
        }
        reports.push(GradCheckReport { layer: "std", target: "weights", max_rel_error: w_err });
        reports.push(GradCheckReport { layer: "std", target: "input", max_rel_error: x_err });
    }
    if want(LayerChoice::Medi) {
        let (mut w_err, mut x_err) = (0f64, 0f64);
        for t in 0..trials {
            let (we, xe) = check_medi_conv(seed.wrapping_add(t as u64));
            w_err = w_err.max(we);
            x_err = x_err.max(xe);
        }
        reports.push(GradCheckReport { layer: "medi", target: "weights", max_rel_error: w_err });
        reports.push(GradCheckReport { layer: "medi", target: "input", max_rel_error: x_err });
    }
    if want(LayerChoice::Median) {
        let mut err = 0f64;
        for t in 0..trials {
            err = err.max(check_median_routing(seed.wrapping_add(t as u64)));
        }
        reports.push(GradCheckReport { layer: "median", target: "input", max_rel_error: err });
    }
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_conv_gradients_match_finite_differences() {
        for seed in 0..5 {
            let (w_err, x_err) = check_std_conv(seed);
            assert!(w_err < 1e-3, "seed {seed}: weight error {w_err}");
            assert!(x_err < 1e-3, "seed {seed}: input error {x_err}");
        }
    }

    #[test]
    fn medi_conv_gradients_match_finite_differences() {
        for seed in 0..5 {
            let (w_err, x_err) = check_medi_conv(seed);
            assert!(w_err < 1e-3, "seed {seed}: weight error {w_err}");
            assert!(x_err < 1e-3, "seed {seed}: input error {x_err}");
        }
    }

    #[test]
    fn median_routing_matches_finite_differences() {
        for seed in 0..5 {
            let err = check_median_routing(seed);
            assert!(err < 1e-3, "seed {seed}: routing error {err}");
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let a = run(LayerChoice::All, 9, 2);
        let b = run(LayerChoice::All, 9, 2);
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.max_rel_error, rb.max_rel_error);
        }
    }
}
