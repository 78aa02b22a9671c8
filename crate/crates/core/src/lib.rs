//! Noise-robust convolution built on local median representations.
//!
//! The centerpiece is the median pixel difference convolution layer: each
//! receptive-field pixel is replaced by the median of its local window minus
//! the per-channel mean of that median map, and only then weighted by a
//! learnable kernel. Around it the crate provides a small dense tensor type
//! with exact forward/backward convolution primitives, sliding-window median
//! filters (a general sort-based path that tracks argmedians for
//! backpropagation and a histogram fast path for 8-bit planes), a seeded and
//! bit-reproducible image degradation pipeline (blur, rescaling, several
//! noise families, JPEG-style quantization), and a desk-scale training and
//! evaluation harness for comparing standard and median-based networks under
//! corruption.

pub mod dataset;
pub mod degrade;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod imgio;
pub mod jpeg;
pub mod median;
pub mod mediconv;
pub mod net;
pub mod plot;
pub mod rng;
pub mod tensor;
pub mod train;

pub use degrade::{degrade, Blur, DegradationConfig, ImagePlane, Noise};
pub use error::{Error, Result};
pub use median::{median_backward, median_filter, median_filter_hist_u8, mrelbp_ci, ArgMedianMap, MedianConfig};
pub use mediconv::{ConvLayer, LayerGradients, MeDiConvLayer};
pub use rng::RngStream;
pub use tensor::{channel_mean, conv2d, subtract_channel_mean, Shape, Tensor};
