//! Convolution layers: the median pixel difference layer and its standard
//! counterpart.
//!
//! The median layer computes `conv(median_filter(x) - mu, W)` where `mu` is
//! the per-sample, per-channel mean of the median map. It adds no learnable
//! parameters over a standard convolution; the median stage is a fixed
//! nonlinear preprocessing of the receptive field. Backward passes are
//! hand-written: the convolution gradients are exact, the mean subtraction
//! is a linear projector, and the median routes its subgradient through the
//! argmedian recorded during forward.

use crate::error::{Error, Result};
use crate::median::{median_backward, median_filter, ArgMedianMap, MedianConfig};
use crate::rng::RngStream;
use crate::tensor::{channel_mean, conv2d, conv2d_input_grad, conv2d_weight_grad, Shape, Tensor};

/// Gradients returned by a layer backward pass.
#[derive(Clone, Debug)]
pub struct LayerGradients {
    pub d_weights: Tensor,
    pub d_input: Tensor,
}

/// Kaiming-uniform fan-in initialization for a `(c_out, c_in, k, k)` kernel.
pub fn kaiming_uniform(c_out: usize, c_in: usize, k: usize, rng: &mut RngStream) -> Tensor {
    let fan_in = (c_in * k * k) as f64;
    let bound = (6.0 / fan_in).sqrt() as f32;
    rng.uniform_tensor(Shape::new(c_out, c_in, k, k), -bound, bound)
}

fn check_weights(weights: &Tensor) -> Result<(usize, usize)> {
    let ws = weights.shape();
    if ws.h != ws.w || ws.h % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel must be square with odd size, got {}x{}",
            ws.h, ws.w
        )));
    }
    Ok((ws.h, (ws.h - 1) / 2))
}

struct MediCache {
    argmap: ArgMedianMap,
    /// Median map of the input.
    median: Tensor,
    /// Per `(n, c)` means of the median map.
    mu: Vec<f32>,
    /// `median - mu`, the tensor the convolution actually sees.
    centered: Tensor,
}

/// Median pixel difference convolution layer.
pub struct MeDiConvLayer {
    weights: Tensor,
    median_cfg: MedianConfig,
    padding: usize,
    stride: usize,
    /// Treat `mu` as a constant in backward instead of a differentiable mean.
    pub mu_stop_gradient: bool,
    cache: Option<MediCache>,
}

impl MeDiConvLayer {
    /// Stride-1 layer with "same" padding.
    pub fn new(weights: Tensor, median_window: usize) -> Result<Self> {
        Self::with_stride(weights, median_window, 1)
    }

    pub fn with_stride(weights: Tensor, median_window: usize, stride: usize) -> Result<Self> {
        let (_, padding) = check_weights(&weights)?;
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        Ok(MeDiConvLayer {
            weights,
            median_cfg: MedianConfig::new(median_window)?,
            padding,
            stride,
            mu_stop_gradient: false,
            cache: None,
        })
    }

    /// Kaiming-initialized layer.
    pub fn init(
        c_out: usize,
        c_in: usize,
        k: usize,
        median_window: usize,
        stride: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        Self::with_stride(kaiming_uniform(c_out, c_in, k, rng), median_window, stride)
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor {
        &mut self.weights
    }

    pub fn set_weights(&mut self, weights: Tensor) -> Result<()> {
        if weights.shape() != self.weights.shape() {
            return Err(Error::ShapeMismatch(format!(
                "weight shape {} does not match layer shape {}",
                weights.shape(),
                self.weights.shape()
            )));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn median_window(&self) -> usize {
        self.median_cfg.window
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    fn run_forward(&self, x: &Tensor) -> Result<(Tensor, MediCache)> {
        let (median, argmap) = median_filter(x, &self.median_cfg)?;
        let mu = channel_mean(&median);
        let shape = median.shape();
        let mut centered = median.clone();
        for n in 0..shape.n {
            for c in 0..shape.c {
                let m = mu[n * shape.c + c];
                for v in centered.plane_mut(n, c) {
                    *v -= m;
                }
            }
        }
        let out = conv2d(&centered, &self.weights, self.padding, self.stride)?;
        Ok((out, MediCache { argmap, median, mu, centered }))
    }

    /// Forward pass that caches state for [`MeDiConvLayer::backward`].
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (out, cache) = self.run_forward(x)?;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Forward pass without touching the backward cache.
    pub fn forward_inference(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.run_forward(x)?.0)
    }

    /// Median map and per-plane means from the cached forward, if any.
    pub fn cached_median(&self) -> Option<(&Tensor, &[f32])> {
        self.cache.as_ref().map(|c| (&c.median, c.mu.as_slice()))
    }

    /// Recompute the output from the cached median map; used to check cache
    /// consistency.
    pub fn replay_from_cache(&self) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::MissingForward("mediconv replay"))?;
        let shape = cache.median.shape();
        let mut centered = cache.median.clone();
        for n in 0..shape.n {
            for c in 0..shape.c {
                let m = cache.mu[n * shape.c + c];
                for v in centered.plane_mut(n, c) {
                    *v -= m;
                }
            }
        }
        conv2d(&centered, &self.weights, self.padding, self.stride)
    }

    /// Backward pass; consumes the cached forward state.
    ///
    /// The input gradient chains through the convolution, then the mean
    /// subtraction (`g - mean(g)` per plane unless `mu_stop_gradient`), then
    /// the argmedian routing.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<LayerGradients> {
        let cache = self
            .cache
            .take()
            .ok_or(Error::MissingForward("mediconv backward"))?;
        let k = self.weights.shape().h;
        let d_weights =
            conv2d_weight_grad(&cache.centered, grad_out, self.padding, self.stride, k)?;
        let d_centered = conv2d_input_grad(
            grad_out,
            &self.weights,
            self.padding,
            self.stride,
            cache.centered.shape(),
        )?;
        let d_median = if self.mu_stop_gradient {
            d_centered
        } else {
            // d/d_median of (median - mean(median)) is the centering
            // projector, which is symmetric: g - mean(g).
            let shape = d_centered.shape();
            let means = channel_mean(&d_centered);
            let mut g = d_centered;
            for n in 0..shape.n {
                for c in 0..shape.c {
                    let m = means[n * shape.c + c];
                    for v in g.plane_mut(n, c) {
                        *v -= m;
                    }
                }
            }
            g
        };
        let d_input = median_backward(&d_median, &cache.argmap)?;
        Ok(LayerGradients { d_weights, d_input })
    }
}

struct ConvCache {
    input: Tensor,
}

/// Standard convolution layer with the same contracts minus the median and
/// mean-subtraction stages.
pub struct ConvLayer {
    weights: Tensor,
    padding: usize,
    stride: usize,
    cache: Option<ConvCache>,
}

impl ConvLayer {
    pub fn new(weights: Tensor) -> Result<Self> {
        Self::with_stride(weights, 1)
    }

    pub fn with_stride(weights: Tensor, stride: usize) -> Result<Self> {
        let (_, padding) = check_weights(&weights)?;
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        Ok(ConvLayer { weights, padding, stride, cache: None })
    }

    pub fn init(
        c_out: usize,
        c_in: usize,
        k: usize,
        stride: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        Self::with_stride(kaiming_uniform(c_out, c_in, k, rng), stride)
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor {
        &mut self.weights
    }

    pub fn set_weights(&mut self, weights: Tensor) -> Result<()> {
        if weights.shape() != self.weights.shape() {
            return Err(Error::ShapeMismatch(format!(
                "weight shape {} does not match layer shape {}",
                weights.shape(),
                self.weights.shape()
            )));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = conv2d(x, &self.weights, self.padding, self.stride)?;
        self.cache = Some(ConvCache { input: x.clone() });
        Ok(out)
    }

    pub fn forward_inference(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.weights, self.padding, self.stride)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<LayerGradients> {
        let cache = self
            .cache
            .take()
            .ok_or(Error::MissingForward("conv backward"))?;
        let k = self.weights.shape().h;
        let d_weights =
            conv2d_weight_grad(&cache.input, grad_out, self.padding, self.stride, k)?;
        let d_input = conv2d_input_grad(
            grad_out,
            &self.weights,
            self.padding,
            self.stride,
            cache.input.shape(),
        )?;
        Ok(LayerGradients { d_weights, d_input })
    }
}
