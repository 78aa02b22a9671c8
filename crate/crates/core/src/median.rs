//! Sliding-window 2-D median filtering.
//!
//! Two deliberately independent algorithms are maintained: a sort-based path
//! over general reals that records which window element was selected (the
//! argmedian, which defines the subgradient route for backpropagation), and
//! a histogram path for 8-bit planes whose per-pixel cost is independent of
//! the window size. Both use replicate borders and must agree bit-exactly on
//! quantized data.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{channel_mean, Shape, Tensor};

/// Border handling for windowed operations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Border {
    /// Edge pixels extend outward.
    #[default]
    Replicate,
}

/// Tie resolution when several window elements equal the median value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    /// First match in a row-major scan of the window.
    #[default]
    FirstInRowMajorScan,
}

/// Parameters of the median filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MedianConfig {
    pub window: usize,
    pub border: Border,
    pub tie_break: TieBreak,
}

impl Default for MedianConfig {
    fn default() -> Self {
        MedianConfig { window: 3, border: Border::default(), tie_break: TieBreak::default() }
    }
}

impl MedianConfig {
    /// Window must be odd; `window = 1` makes the filter an identity.
    pub fn new(window: usize) -> Result<Self> {
        check_window(window)?;
        Ok(MedianConfig { window, ..MedianConfig::default() })
    }

    pub fn radius(&self) -> usize {
        (self.window - 1) / 2
    }
}

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "median window must be odd and >= 1, got {window}"
        )));
    }
    Ok(())
}

/// Per-output-pixel window offset of the element selected as median.
///
/// Offsets are relative to the window center; with replicate borders the
/// source pixel of entry `(u, v)` is `(clamp(u + dy), clamp(v + dx))`.
#[derive(Clone, Debug)]
pub struct ArgMedianMap {
    shape: Shape,
    window: usize,
    offsets: Vec<(i8, i8)>,
}

impl ArgMedianMap {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn window(&self) -> usize {
        self.window
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, u: usize, v: usize) -> (isize, isize) {
        let idx = ((n * self.shape.c + c) * self.shape.h + u) * self.shape.w + v;
        let (dy, dx) = self.offsets[idx];
        (dy as isize, dx as isize)
    }

    /// Source pixel coordinates for output `(u, v)` under replicate borders.
    #[inline]
    pub fn source(&self, n: usize, c: usize, u: usize, v: usize) -> (usize, usize) {
        let (dy, dx) = self.get(n, c, u, v);
        let y = (u as isize + dy).clamp(0, self.shape.h as isize - 1) as usize;
        let x = (v as isize + dx).clamp(0, self.shape.w as isize - 1) as usize;
        (y, x)
    }
}

#[inline]
fn clamp_idx(i: isize, hi: usize) -> usize {
    i.clamp(0, hi as isize - 1) as usize
}

/// Median filter with exact replicate-border semantics.
///
/// Every output pixel is the median of the `window x window` multiset around
/// it (the middle order statistic; windows are odd so it is unique). The
/// returned map records, for each output pixel, the first window element in
/// row-major scan order whose value equals the median.
pub fn median_filter(x: &Tensor, cfg: &MedianConfig) -> Result<(Tensor, ArgMedianMap)> {
    check_window(cfg.window)?;
    let shape = x.shape();
    let r = cfg.radius() as isize;
    let window = cfg.window;

    let mut out = Tensor::zeros(shape);
    let mut offsets = vec![(0i8, 0i8); shape.len()];

    if window == 1 {
        return Ok((x.clone(), ArgMedianMap { shape, window, offsets }));
    }

    let plane_len = shape.plane_len();
    let planes: Vec<(usize, usize)> = (0..shape.n)
        .flat_map(|n| (0..shape.c).map(move |c| (n, c)))
        .collect();

    out.data_mut()
        .par_chunks_mut(plane_len)
        .zip(offsets.par_chunks_mut(plane_len))
        .zip(planes.par_iter())
        .for_each(|((out_plane, off_plane), &(n, c))| {
            let src = x.plane(n, c);
            let (h, w) = (shape.h, shape.w);
            let mut vals: Vec<f32> = Vec::with_capacity(window * window);
            let mut scratch: Vec<f32> = Vec::with_capacity(window * window);
            let rank = (window * window - 1) / 2;
            for u in 0..h {
                for v in 0..w {
                    vals.clear();
                    for dy in -r..=r {
                        let y = clamp_idx(u as isize + dy, h);
                        let row = &src[y * w..(y + 1) * w];
                        for dx in -r..=r {
                            vals.push(row[clamp_idx(v as isize + dx, w)]);
                        }
                    }
                    scratch.clear();
                    scratch.extend_from_slice(&vals);
                    let (_, med, _) =
                        scratch.select_nth_unstable_by(rank, |a, b| a.total_cmp(b));
                    let med = *med;
                    // First row-major element equal to the median value.
                    let pos = vals
                        .iter()
                        .position(|&t| t == med)
                        .expect("median value present in window");
                    let dy = (pos / window) as i8 - r as i8;
                    let dx = (pos % window) as i8 - r as i8;
                    out_plane[u * w + v] = med;
                    off_plane[u * w + v] = (dy, dx);
                }
            }
        });

    Ok((out, ArgMedianMap { shape, window, offsets }))
}

/// Histogram-based median filter for one 8-bit plane.
///
/// Bit-identical to [`median_filter`] on the same quantized data. Column
/// histograms are updated once per row and the kernel histogram once per
/// pixel, so per-pixel cost does not grow with the window size. A coarse
/// 16-bucket level keeps the median scan short.
pub fn median_filter_hist_u8(src: &[u8], h: usize, w: usize, window: usize) -> Result<Vec<u8>> {
    check_window(window)?;
    if src.len() != h * w {
        return Err(Error::ShapeMismatch(format!(
            "plane length {} does not match {h}x{w}",
            src.len()
        )));
    }
    if h == 0 || w == 0 {
        return Ok(Vec::new());
    }
    if window == 1 {
        return Ok(src.to_vec());
    }
    if window > 255 {
        return Err(Error::InvalidArgument(format!(
            "histogram median supports windows up to 255, got {window}"
        )));
    }

    let r = ((window - 1) / 2) as isize;
    let target = (window * window).div_ceil(2) as u32; // rank of the middle element, 1-based

    let mut col_fine = vec![[0u16; 256]; w];
    let mut col_coarse = vec![[0u16; 16]; w];

    let clamp_row = |i: isize| clamp_idx(i, h);
    let clamp_col = |i: isize| clamp_idx(i, w);

    // Seed column histograms with the window rows around row 0; replicate
    // border counts row 0 with multiplicity r + 1.
    for x in 0..w {
        for dy in -r..=r {
            let v = src[clamp_row(dy) * w + x] as usize;
            col_fine[x][v] += 1;
            col_coarse[x][v >> 4] += 1;
        }
    }

    let mut out = vec![0u8; h * w];
    let mut fine = [0u32; 256];
    let mut coarse = [0u32; 16];

    for y in 0..h {
        if y > 0 {
            // Slide every column down one row.
            let leave = clamp_row(y as isize - 1 - r);
            let enter = clamp_row(y as isize + r);
            for x in 0..w {
                let lv = src[leave * w + x] as usize;
                let ev = src[enter * w + x] as usize;
                col_fine[x][lv] -= 1;
                col_coarse[x][lv >> 4] -= 1;
                col_fine[x][ev] += 1;
                col_coarse[x][ev >> 4] += 1;
            }
        }

        // Kernel histogram for x = 0: columns -r..=r clamp to the left edge.
        fine.fill(0);
        coarse.fill(0);
        for dx in -r..=r {
            let cx = clamp_col(dx);
            add_hist(&mut fine, &col_fine[cx]);
            add_hist16(&mut coarse, &col_coarse[cx]);
        }
        out[y * w] = hist_median(&fine, &coarse, target);

        for x in 1..w {
            let leave = clamp_col(x as isize - 1 - r);
            let enter = clamp_col(x as isize + r);
            if leave != enter {
                sub_hist(&mut fine, &col_fine[leave]);
                sub_hist16(&mut coarse, &col_coarse[leave]);
                add_hist(&mut fine, &col_fine[enter]);
                add_hist16(&mut coarse, &col_coarse[enter]);
            }
            out[y * w + x] = hist_median(&fine, &coarse, target);
        }
    }
    Ok(out)
}

#[inline]
fn add_hist(dst: &mut [u32; 256], src: &[u16; 256]) {
    for (d, &s) in dst.iter_mut().zip(src.iter()) {
        *d += s as u32;
    }
}

#[inline]
fn sub_hist(dst: &mut [u32; 256], src: &[u16; 256]) {
    for (d, &s) in dst.iter_mut().zip(src.iter()) {
        *d -= s as u32;
    }
}

#[inline]
fn add_hist16(dst: &mut [u32; 16], src: &[u16; 16]) {
    for (d, &s) in dst.iter_mut().zip(src.iter()) {
        *d += s as u32;
    }
}

#[inline]
fn sub_hist16(dst: &mut [u32; 16], src: &[u16; 16]) {
    for (d, &s) in dst.iter_mut().zip(src.iter()) {
        *d -= s as u32;
    }
}

/// Smallest value whose cumulative count reaches `target`.
#[inline]
fn hist_median(fine: &[u32; 256], coarse: &[u32; 16], target: u32) -> u8 {
    let mut cum = 0u32;
    for (bucket, &count) in coarse.iter().enumerate() {
        if cum + count >= target {
            let base = bucket << 4;
            for v in base..base + 16 {
                cum += fine[v];
                if cum >= target {
                    return v as u8;
                }
            }
            unreachable!("coarse bucket guaranteed to contain the rank");
        }
        cum += count;
    }
    unreachable!("histogram total always reaches the target rank");
}

/// Route output gradients back to the source pixels chosen by the forward
/// median (subgradient of the median selection).
///
/// Scatter-add: one source pixel may be the median of several windows.
/// Accumulation is sequential within each plane, so results do not depend on
/// thread count.
pub fn median_backward(grad_out: &Tensor, argmap: &ArgMedianMap) -> Result<Tensor> {
    let shape = grad_out.shape();
    if shape != argmap.shape() {
        return Err(Error::ShapeMismatch(format!(
            "grad shape {} does not match argmedian shape {}",
            shape,
            argmap.shape()
        )));
    }
    let mut grad_in = Tensor::zeros(shape);
    let plane_len = shape.plane_len();
    let planes: Vec<(usize, usize)> = (0..shape.n)
        .flat_map(|n| (0..shape.c).map(move |c| (n, c)))
        .collect();
    grad_in
        .data_mut()
        .par_chunks_mut(plane_len)
        .zip(planes.par_iter())
        .for_each(|(gin, &(n, c))| {
            let gout = grad_out.plane(n, c);
            for u in 0..shape.h {
                for v in 0..shape.w {
                    let (y, x) = argmap.source(n, c, u, v);
                    gin[y * shape.w + x] += gout[u * shape.w + v];
                }
            }
        });
    Ok(grad_in)
}

/// Center-intensity median-robust binary descriptor.
///
/// Each plane is median filtered, then thresholded against the plane-wide
/// mean of the median map: `out = 1` where `median >= mean`, else `0`.
/// The sign convention maps an exactly-zero difference to 1.
pub fn mrelbp_ci(x: &Tensor, cfg: &MedianConfig) -> Result<Tensor> {
    let (med, _) = median_filter(x, cfg)?;
    let shape = med.shape();
    let means = channel_mean(&med);
    let mut out = Tensor::zeros(shape);
    for n in 0..shape.n {
        for c in 0..shape.c {
            let mu = means[n * shape.c + c];
            let src = med.plane(n, c);
            let dst = out.plane_mut(n, c);
            for (d, &m) in dst.iter_mut().zip(src.iter()) {
                *d = if m >= mu { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn plane_tensor(h: usize, w: usize, data: Vec<f32>) -> Tensor {
        Tensor::from_vec(Shape::new(1, 1, h, w), data).unwrap()
    }

    /// Brute-force median of the replicate-padded window; independent of the
    /// production gather order.
    fn median_oracle(src: &Tensor, n: usize, c: usize, u: usize, v: usize, window: usize) -> f32 {
        let shape = src.shape();
        let r = (window as isize - 1) / 2;
        let mut vals = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let y = clamp_idx(u as isize + dy, shape.h);
                let x = clamp_idx(v as isize + dx, shape.w);
                vals.push(src.get(n, c, y, x));
            }
        }
        vals.sort_by(|a, b| a.total_cmp(b));
        vals[(window * window - 1) / 2]
    }

    #[test]
    fn constant_plane_is_fixed_point() {
        let t = Tensor::full(Shape::new(1, 2, 5, 5), 3.25);
        for window in [1, 3, 5] {
            let cfg = MedianConfig::new(window).unwrap();
            let (out, _) = median_filter(&t, &cfg).unwrap();
            assert_eq!(out.data(), t.data());
        }
    }

    #[test]
    fn single_outlier_is_suppressed() {
        let mut t = Tensor::zeros(Shape::new(1, 1, 5, 5));
        t.set(0, 0, 2, 2, 255.0);
        let cfg = MedianConfig::new(3).unwrap();
        let (out, _) = median_filter(&t, &cfg).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0), "outlier must vanish");
    }

    #[test]
    fn replicate_border_window_multiset() {
        // 2x2 plane [[1,2],[3,4]], window 3: at (0,0) the padded window is
        // {1,1,1,1,2,2,3,3,4} and its median is 2.
        let t = plane_tensor(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let cfg = MedianConfig::new(3).unwrap();
        let (out, _) = median_filter(&t, &cfg).unwrap();
        assert_eq!(out.get(0, 0, 0, 0), 2.0);
    }

    #[test]
    fn window_one_is_identity() {
        let mut rng = RngStream::new(1, 0);
        let t = rng.uniform_tensor(Shape::new(2, 2, 6, 6), -5.0, 5.0);
        let cfg = MedianConfig::new(1).unwrap();
        let (out, argmap) = median_filter(&t, &cfg).unwrap();
        assert_eq!(out.data(), t.data());
        assert_eq!(argmap.get(1, 1, 3, 3), (0, 0));
    }

    #[test]
    fn even_window_rejected() {
        assert!(MedianConfig::new(4).is_err());
        assert!(MedianConfig::new(0).is_err());
        assert!(median_filter_hist_u8(&[0; 16], 4, 4, 2).is_err());
    }

    #[test]
    fn matches_bruteforce_oracle() {
        let mut rng = RngStream::new(7, 0);
        let t = rng.uniform_tensor(Shape::new(2, 2, 9, 7), -10.0, 10.0);
        for window in [3usize, 5, 7] {
            let cfg = MedianConfig::new(window).unwrap();
            let (out, _) = median_filter(&t, &cfg).unwrap();
            for n in 0..2 {
                for c in 0..2 {
                    for u in 0..9 {
                        for v in 0..7 {
                            assert_eq!(
                                out.get(n, c, u, v),
                                median_oracle(&t, n, c, u, v, window),
                                "window {window} at ({n},{c},{u},{v})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn argmedian_reproduces_values_and_stays_in_window() {
        let mut rng = RngStream::new(8, 0);
        // Quantized values force ties; the map must still reproduce values.
        let t = rng.uniform_tensor(Shape::new(1, 2, 8, 8), 0.0, 4.0);
        let t = Tensor::from_vec(
            t.shape(),
            t.data().iter().map(|v| v.round()).collect(),
        )
        .unwrap();
        let cfg = MedianConfig::new(5).unwrap();
        let (out, argmap) = median_filter(&t, &cfg).unwrap();
        let r = cfg.radius() as isize;
        for c in 0..2 {
            for u in 0..8 {
                for v in 0..8 {
                    let (dy, dx) = argmap.get(0, c, u, v);
                    assert!(dy.abs() <= r && dx.abs() <= r);
                    let (y, x) = argmap.source(0, c, u, v);
                    assert_eq!(t.get(0, c, y, x), out.get(0, c, u, v));
                }
            }
        }
    }

    #[test]
    fn tie_break_takes_first_in_row_major_scan() {
        // All-equal window: the selected offset must be the top-left element.
        let t = Tensor::full(Shape::new(1, 1, 5, 5), 2.0);
        let cfg = MedianConfig::new(3).unwrap();
        let (_, argmap) = median_filter(&t, &cfg).unwrap();
        assert_eq!(argmap.get(0, 0, 2, 2), (-1, -1));
        // At the corner the first scan position clamps to the corner itself.
        assert_eq!(argmap.source(0, 0, 0, 0), (0, 0));
    }

    #[test]
    fn monotone_over_random_pairs() {
        let mut rng = RngStream::new(9, 0);
        let cfg = MedianConfig::new(3).unwrap();
        for trial in 0..100 {
            let x = rng.uniform_tensor(Shape::new(1, 1, 7, 7), 0.0, 10.0);
            let bump = rng.uniform_tensor(Shape::new(1, 1, 7, 7), 0.0, 3.0);
            let y = x.lin_comb(1.0, &bump, 1.0).unwrap();
            let (fx, _) = median_filter(&x, &cfg).unwrap();
            let (fy, _) = median_filter(&y, &cfg).unwrap();
            for (a, b) in fx.data().iter().zip(fy.data()) {
                assert!(a <= b, "monotonicity violated on trial {trial}: {a} > {b}");
            }
        }
    }

    #[test]
    fn hist_matches_sort_path() {
        let mut rng = RngStream::new(10, 0);
        for window in [3usize, 5, 7, 15] {
            for trial in 0..25 {
                let (h, w) = (5 + rng.next_below(28), 5 + rng.next_below(28));
                let plane: Vec<u8> =
                    (0..h * w).map(|_| rng.next_below(256) as u8).collect();
                let by_hist = median_filter_hist_u8(&plane, h, w, window).unwrap();

                let as_f32: Vec<f32> = plane.iter().map(|&b| b as f32).collect();
                let t = Tensor::from_vec(Shape::new(1, 1, h, w), as_f32).unwrap();
                let cfg = MedianConfig::new(window).unwrap();
                let (sorted, _) = median_filter(&t, &cfg).unwrap();
                let by_sort: Vec<u8> = sorted.data().iter().map(|&v| v as u8).collect();
                assert_eq!(by_hist, by_sort, "window {window}, trial {trial}, {h}x{w}");
            }
        }
    }

    #[test]
    fn hist_constant_plane() {
        let plane = vec![77u8; 12 * 9];
        let out = median_filter_hist_u8(&plane, 12, 9, 5).unwrap();
        assert_eq!(out, plane);
    }

    #[test]
    fn backward_window_one_is_identity() {
        let mut rng = RngStream::new(12, 0);
        let x = rng.uniform_tensor(Shape::new(1, 1, 4, 4), -1.0, 1.0);
        let cfg = MedianConfig::new(1).unwrap();
        let (_, argmap) = median_filter(&x, &cfg).unwrap();
        let g = rng.uniform_tensor(Shape::new(1, 1, 4, 4), -1.0, 1.0);
        let gin = median_backward(&g, &argmap).unwrap();
        assert_eq!(gin.data(), g.data());
    }

    #[test]
    fn backward_counts_windows_per_source() {
        // Strictly increasing plane: no ties, each window's median source is
        // unambiguous. With an all-ones upstream gradient, the routed
        // gradient at a pixel equals the number of windows whose median it
        // provides, which we count by brute force.
        let shape = Shape::new(1, 1, 6, 6);
        let data: Vec<f32> = (0..36).map(|i| i as f32 * 3.0 + (i % 7) as f32).collect();
        let mut uniq = data.clone();
        uniq.sort_by(f32::total_cmp);
        uniq.dedup();
        assert_eq!(uniq.len(), 36, "plane must be tie-free");

        let t = Tensor::from_vec(shape, data).unwrap();
        let cfg = MedianConfig::new(3).unwrap();
        let (_, argmap) = median_filter(&t, &cfg).unwrap();
        let g = Tensor::full(shape, 1.0);
        let gin = median_backward(&g, &argmap).unwrap();

        let mut counts = vec![0f32; 36];
        for u in 0..6 {
            for v in 0..6 {
                let med = median_oracle(&t, 0, 0, u, v, 3);
                let pos = t.data().iter().position(|&x| x == med).unwrap();
                counts[pos] += 1.0;
            }
        }
        assert_eq!(gin.data(), &counts[..]);
    }

    #[test]
    fn backward_conserves_gradient_mass() {
        let mut rng = RngStream::new(13, 0);
        for _ in 0..20 {
            let x = rng.uniform_tensor(Shape::new(2, 2, 7, 7), 0.0, 9.0);
            let cfg = MedianConfig::new(3).unwrap();
            let (_, argmap) = median_filter(&x, &cfg).unwrap();
            let g = rng.uniform_tensor(Shape::new(2, 2, 7, 7), -1.0, 1.0);
            let gin = median_backward(&g, &argmap).unwrap();
            for n in 0..2 {
                for c in 0..2 {
                    let a: f64 = g.plane(n, c).iter().map(|&v| v as f64).sum();
                    let b: f64 = gin.plane(n, c).iter().map(|&v| v as f64).sum();
                    assert!((a - b).abs() < 1e-4, "mass {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn backward_rejects_shape_mismatch() {
        let x = Tensor::zeros(Shape::new(1, 1, 4, 4));
        let cfg = MedianConfig::new(3).unwrap();
        let (_, argmap) = median_filter(&x, &cfg).unwrap();
        let g = Tensor::zeros(Shape::new(1, 1, 3, 3));
        assert!(median_backward(&g, &argmap).is_err());
    }

    #[test]
    fn mrelbp_ci_constant_plane_is_all_ones() {
        let t = Tensor::full(Shape::new(1, 1, 6, 6), 5.0);
        let cfg = MedianConfig::new(3).unwrap();
        let out = mrelbp_ci(&t, &cfg).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mrelbp_ci_step_plane() {
        // Left half 0, right half 100: medians stay 0 on the left and 100 on
        // the right of the step (the boundary column follows its median), so
        // the descriptor reproduces the halves.
        let (h, w) = (6, 8);
        let mut data = vec![0.0f32; h * w];
        for row in data.chunks_mut(w) {
            for v in row.iter_mut().skip(w / 2) {
                *v = 100.0;
            }
        }
        let t = plane_tensor(h, w, data);
        let cfg = MedianConfig::new(3).unwrap();
        let out = mrelbp_ci(&t, &cfg).unwrap();
        for u in 0..h {
            for v in 0..w {
                let expect = if v >= w / 2 { 1.0 } else { 0.0 };
                assert_eq!(out.get(0, 0, u, v), expect, "at ({u},{v})");
            }
        }
    }

    #[test]
    fn mrelbp_ci_matches_two_pass_oracle() {
        let mut rng = RngStream::new(15, 0);
        let t = rng.uniform_tensor(Shape::new(1, 1, 11, 13), 0.0, 255.0);
        let cfg = MedianConfig::new(3).unwrap();
        let got = mrelbp_ci(&t, &cfg).unwrap();

        // Oracle: explicit median pass then explicit mean/threshold pass.
        let shape = t.shape();
        let mut med = Tensor::zeros(shape);
        for u in 0..shape.h {
            for v in 0..shape.w {
                med.set(0, 0, u, v, median_oracle(&t, 0, 0, u, v, 3));
            }
        }
        let mu: f64 =
            med.data().iter().map(|&v| v as f64).sum::<f64>() / med.data().len() as f64;
        for u in 0..shape.h {
            for v in 0..shape.w {
                let want = if med.get(0, 0, u, v) as f64 >= mu { 1.0 } else { 0.0 };
                assert_eq!(got.get(0, 0, u, v), want, "at ({u},{v})");
            }
        }
    }
}
