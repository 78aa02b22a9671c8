//! Declarative small CNN builder with a `medi_layers` ablation knob.
//!
//! A network is a stack of 3x3 conv blocks (standard or median
//! convolution, chosen per layer index by `medi_layers`), each followed by
//! an activation, then a linear classifier head. Replacing a conv block
//! with a median block never changes the parameter count: the median stage
//! has no weights.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mediconv::{kaiming_uniform, ConvLayer, LayerGradients, MeDiConvLayer};
use crate::rng::RngStream;
use crate::tensor::{Shape, Tensor};

/// Activation applied after every conv block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    PRelu,
    Relu,
}

/// One conv block of the stack.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Declarative network description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input shape `(channels, height, width)`.
    pub input: (usize, usize, usize),
    pub convs: Vec<ConvSpec>,
    pub activation: Activation,
    pub classes: usize,
    /// The first `medi_layers` conv blocks use median convolution.
    pub medi_layers: usize,
    pub median_window: usize,
}

impl NetworkSpec {
    /// The toy stack: six 3x3 conv layers, channels 16-32-32-64-64-128,
    /// stride 2 at layers 2, 4 and 6, PReLU, linear head.
    pub fn toy(in_channels: usize, classes: usize, medi_layers: usize) -> Self {
        let channels = [16, 32, 32, 64, 64, 128];
        let convs = channels
            .iter()
            .enumerate()
            .map(|(i, &c)| ConvSpec { out_channels: c, kernel: 3, stride: if i % 2 == 1 { 2 } else { 1 } })
            .collect();
        NetworkSpec {
            input: (in_channels, 32, 32),
            convs,
            activation: Activation::PRelu,
            classes,
            medi_layers,
            median_window: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.convs.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one conv block".into()));
        }
        if self.medi_layers > self.convs.len() {
            return Err(Error::InvalidArgument(format!(
                "medi_layers {} exceeds the {} conv blocks",
                self.medi_layers,
                self.convs.len()
            )));
        }
        if self.classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if self.median_window % 2 == 0 || self.median_window == 0 {
            return Err(Error::InvalidArgument("median window must be odd".into()));
        }
        self.feature_len()?;
        Ok(())
    }

    /// Flattened feature length after the conv stack; errors if a stride
    /// collapses the spatial extent.
    pub fn feature_len(&self) -> Result<usize> {
        let (mut c, mut h, mut w) = self.input;
        for (i, conv) in self.convs.iter().enumerate() {
            if conv.kernel % 2 == 0 || conv.kernel == 0 {
                return Err(Error::InvalidArgument(format!(
                    "conv {i}: kernel must be odd, got {}",
                    conv.kernel
                )));
            }
            if conv.stride == 0 {
                return Err(Error::InvalidArgument(format!("conv {i}: stride must be >= 1")));
            }
            let pad = (conv.kernel - 1) / 2;
            let step = |extent: usize| (extent + 2 * pad - conv.kernel) / conv.stride + 1;
            if h + 2 * pad < conv.kernel || w + 2 * pad < conv.kernel {
                return Err(Error::InvalidArgument(format!(
                    "conv {i}: spatial extent {h}x{w} too small for kernel {}",
                    conv.kernel
                )));
            }
            h = step(h);
            w = step(w);
            c = conv.out_channels;
            if h == 0 || w == 0 {
                return Err(Error::InvalidArgument(format!(
                    "conv {i}: stride {} collapses the feature map",
                    conv.stride
                )));
            }
        }
        Ok(c * h * w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: NetworkSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Per-channel parametric ReLU; slopes stored as a `(1,1,1,c)` tensor.
pub struct PReluLayer {
    slopes: Tensor,
    cache: Option<Tensor>,
}

impl PReluLayer {
    fn new(channels: usize) -> Self {
        PReluLayer { slopes: Tensor::full(Shape::new(1, 1, 1, channels), 0.25), cache: None }
    }

    fn apply(&self, x: &Tensor) -> Tensor {
        let shape = x.shape();
        let mut out = x.clone();
        for n in 0..shape.n {
            for c in 0..shape.c {
                let a = self.slopes.data()[c];
                for v in out.plane_mut(n, c) {
                    if *v < 0.0 {
                        *v *= a;
                    }
                }
            }
        }
        out
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        let out = self.apply(x);
        self.cache = Some(x.clone());
        out
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
        let x = self.cache.take().ok_or(Error::MissingForward("prelu backward"))?;
        let shape = x.shape();
        let mut d_input = grad_out.clone();
        let mut d_slopes = vec![0f64; shape.c];
        for n in 0..shape.n {
            for c in 0..shape.c {
                let a = self.slopes.data()[c];
                let xp = x.plane(n, c);
                let gp = d_input.plane_mut(n, c);
                let mut acc = 0f64;
                for (g, &xv) in gp.iter_mut().zip(xp.iter()) {
                    if xv < 0.0 {
                        acc += *g as f64 * xv as f64;
                        *g *= a;
                    }
                }
                d_slopes[c] += acc;
            }
        }
        let d_slopes = Tensor::from_vec(
            self.slopes.shape(),
            d_slopes.into_iter().map(|v| v as f32).collect(),
        )?;
        Ok((d_slopes, d_input))
    }
}

enum ActState {
    PRelu(PReluLayer),
    Relu { cache: Option<Tensor> },
}

impl ActState {
    fn forward(&mut self, x: &Tensor) -> Tensor {
        match self {
            ActState::PRelu(p) => p.forward(x),
            ActState::Relu { cache } => {
                let mut out = x.clone();
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                *cache = Some(x.clone());
                out
            }
        }
    }

    fn forward_inference(&self, x: &Tensor) -> Tensor {
        match self {
            ActState::PRelu(p) => p.apply(x),
            ActState::Relu { .. } => {
                let mut out = x.clone();
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                out
            }
        }
    }

    /// Returns (optional slope gradient, input gradient).
    fn backward(&mut self, grad_out: &Tensor) -> Result<(Option<Tensor>, Tensor)> {
        match self {
            ActState::PRelu(p) => {
                let (ds, dx) = p.backward(grad_out)?;
                Ok((Some(ds), dx))
            }
            ActState::Relu { cache } => {
                let x = cache.take().ok_or(Error::MissingForward("relu backward"))?;
                let mut d = grad_out.clone();
                for (g, &xv) in d.data_mut().iter_mut().zip(x.data()) {
                    if xv < 0.0 {
                        *g = 0.0;
                    }
                }
                Ok((None, d))
            }
        }
    }
}

/// Fully connected classifier head on flattened conv features.
pub struct LinearLayer {
    /// `(1, 1, classes, features)`.
    weights: Tensor,
    /// `(1, 1, 1, classes)`.
    bias: Tensor,
    cache: Option<Tensor>,
}

impl LinearLayer {
    fn new(features: usize, classes: usize, rng: &mut RngStream) -> Self {
        let bound = (6.0 / features as f64).sqrt() as f32;
        LinearLayer {
            weights: rng.uniform_tensor(Shape::new(1, 1, classes, features), -bound, bound),
            bias: Tensor::zeros(Shape::new(1, 1, 1, classes)),
            cache: None,
        }
    }

    fn classes(&self) -> usize {
        self.weights.shape().h
    }

    fn features(&self) -> usize {
        self.weights.shape().w
    }

    /// `x` is any tensor with `n` samples whose per-sample length equals
    /// `features`; output is `(n, classes, 1, 1)`.
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let n = x.shape().n;
        let feat = self.features();
        if x.shape().len() != n * feat {
            return Err(Error::ShapeMismatch(format!(
                "expected {feat} features per sample, got {}",
                x.shape().len() / n.max(1)
            )));
        }
        let classes = self.classes();
        let mut out = Tensor::zeros(Shape::new(n, classes, 1, 1));
        let wdata = self.weights.data();
        let bdata = self.bias.data();
        for s in 0..n {
            let xrow = &x.data()[s * feat..(s + 1) * feat];
            for k in 0..classes {
                let wrow = &wdata[k * feat..(k + 1) * feat];
                let mut acc = bdata[k] as f64;
                for (&wv, &xv) in wrow.iter().zip(xrow.iter()) {
                    acc += wv as f64 * xv as f64;
                }
                out.data_mut()[s * classes + k] = acc as f32;
            }
        }
        Ok(out)
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = self.apply(x)?;
        self.cache = Some(x.clone());
        Ok(out)
    }

    /// Returns (d_weights, d_bias, d_input).
    fn backward(&mut self, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let x = self.cache.take().ok_or(Error::MissingForward("linear backward"))?;
        let n = x.shape().n;
        let feat = self.features();
        let classes = self.classes();
        let mut d_w = vec![0f64; classes * feat];
        let mut d_b = vec![0f64; classes];
        let mut d_x = Tensor::zeros(x.shape());
        for s in 0..n {
            let xrow = &x.data()[s * feat..(s + 1) * feat];
            let grow = &grad_out.data()[s * classes..(s + 1) * classes];
            for k in 0..classes {
                let g = grow[k] as f64;
                d_b[k] += g;
                let wrow = &self.weights.data()[k * feat..(k + 1) * feat];
                let dwrow = &mut d_w[k * feat..(k + 1) * feat];
                let dxrow = &mut d_x.data_mut()[s * feat..(s + 1) * feat];
                for i in 0..feat {
                    dwrow[i] += g * xrow[i] as f64;
                    dxrow[i] += (g * wrow[i] as f64) as f32;
                }
            }
        }
        Ok((
            Tensor::from_vec(self.weights.shape(), d_w.into_iter().map(|v| v as f32).collect())?,
            Tensor::from_vec(self.bias.shape(), d_b.into_iter().map(|v| v as f32).collect())?,
            d_x,
        ))
    }
}

enum ConvKind {
    Std(ConvLayer),
    Medi(MeDiConvLayer),
}

impl ConvKind {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            ConvKind::Std(l) => l.forward(x),
            ConvKind::Medi(l) => l.forward(x),
        }
    }

    fn forward_inference(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            ConvKind::Std(l) => l.forward_inference(x),
            ConvKind::Medi(l) => l.forward_inference(x),
        }
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<LayerGradients> {
        match self {
            ConvKind::Std(l) => l.backward(grad_out),
            ConvKind::Medi(l) => l.backward(grad_out),
        }
    }

    fn weights(&self) -> &Tensor {
        match self {
            ConvKind::Std(l) => l.weights(),
            ConvKind::Medi(l) => l.weights(),
        }
    }

    fn weights_mut(&mut self) -> &mut Tensor {
        match self {
            ConvKind::Std(l) => l.weights_mut(),
            ConvKind::Medi(l) => l.weights_mut(),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            ConvKind::Std(_) => "std",
            ConvKind::Medi(_) => "medi",
        }
    }
}

struct Block {
    conv: ConvKind,
    act: ActState,
}

/// A built network: conv blocks plus the linear head.
pub struct Model {
    pub spec: NetworkSpec,
    blocks: Vec<Block>,
    head: LinearLayer,
}

/// Build a model from its spec; weight initialization is fully determined by
/// `seed` and identical for every `medi_layers` setting.
pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let mut rng = RngStream::new(seed, 7_000);
    let mut blocks = Vec::with_capacity(spec.convs.len());
    let mut in_c = spec.input.0;
    for (i, conv) in spec.convs.iter().enumerate() {
        let weights = kaiming_uniform(conv.out_channels, in_c, conv.kernel, &mut rng);
        let kind = if i < spec.medi_layers {
            ConvKind::Medi(MeDiConvLayer::with_stride(weights, spec.median_window, conv.stride)?)
        } else {
            ConvKind::Std(ConvLayer::with_stride(weights, conv.stride)?)
        };
        let act = match spec.activation {
            Activation::PRelu => ActState::PRelu(PReluLayer::new(conv.out_channels)),
            Activation::Relu => ActState::Relu { cache: None },
        };
        blocks.push(Block { conv: kind, act });
        in_c = conv.out_channels;
    }
    let head = LinearLayer::new(spec.feature_len()?, spec.classes, &mut rng);
    Ok(Model { spec: spec.clone(), blocks, head })
}

impl Model {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Total learnable parameter count.
    pub fn param_count(&self) -> usize {
        self.param_refs().iter().map(|t| t.shape().len()).sum()
    }

    fn param_refs(&self) -> Vec<&Tensor> {
        let mut params = Vec::new();
        for b in &self.blocks {
            params.push(b.conv.weights());
            if let ActState::PRelu(p) = &b.act {
                params.push(&p.slopes);
            }
        }
        params.push(&self.head.weights);
        params.push(&self.head.bias);
        params
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut params: Vec<&mut Tensor> = Vec::new();
        for b in &mut self.blocks {
            params.push(b.conv.weights_mut());
            if let ActState::PRelu(p) = &mut b.act {
                params.push(&mut p.slopes);
            }
        }
        params.push(&mut self.head.weights);
        params.push(&mut self.head.bias);
        params
    }

    pub fn param_shapes(&self) -> Vec<Shape> {
        self.param_refs().iter().map(|t| t.shape()).collect()
    }

    /// Snapshot of all parameters, in the fixed parameter order.
    pub fn param_clones(&self) -> Vec<Tensor> {
        self.param_refs().into_iter().cloned().collect()
    }

    /// Training forward: every layer caches state for backward.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for b in &mut self.blocks {
            cur = b.act.forward(&b.conv.forward(&cur)?);
        }
        self.head.forward(&cur)
    }

    /// Inference forward; no caches are touched.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for b in &self.blocks {
            cur = b.act.forward_inference(&b.conv.forward_inference(&cur)?);
        }
        self.head.apply(&cur)
    }

    /// Conv output (pre-activation) of block `layer_index` for one input.
    pub fn layer_activations(&self, x: &Tensor, layer_index: usize) -> Result<Tensor> {
        if layer_index >= self.blocks.len() {
            return Err(Error::InvalidArgument(format!(
                "layer index {layer_index} out of range ({} blocks)",
                self.blocks.len()
            )));
        }
        let mut cur = x.clone();
        for (i, b) in self.blocks.iter().enumerate() {
            let pre = b.conv.forward_inference(&cur)?;
            if i == layer_index {
                return Ok(pre);
            }
            cur = b.act.forward_inference(&pre);
        }
        unreachable!("loop returns at layer_index");
    }

    /// Backward from the head gradient; returns parameter gradients in the
    /// same order as [`Model::params_mut`].
    pub fn backward(&mut self, d_logits: &Tensor) -> Result<Vec<Tensor>> {
        let (d_head_w, d_head_b, mut grad) = self.head.backward(d_logits)?;
        let mut rev: Vec<Tensor> = vec![d_head_b, d_head_w];
        for b in self.blocks.iter_mut().rev() {
            let (d_slopes, d_act_in) = b.act.backward(&grad)?;
            let lg = b.conv.backward(&d_act_in)?;
            if let Some(ds) = d_slopes {
                rev.push(ds);
            }
            rev.push(lg.d_weights);
            grad = lg.d_input;
        }
        rev.reverse();
        Ok(rev)
    }

    /// Checkpoint: one tensor file per parameter plus a JSON manifest
    /// describing each layer (kind, kernel, window, padding, stride).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        let mut file_index = 0usize;
        let mut save_tensor = |t: &Tensor, name: String, kind: &str, extra: serde_json::Value| -> Result<serde_json::Value> {
            let file = format!("p{file_index:03}.bin");
            file_index += 1;
            t.save(dir.join(&file))?;
            let mut obj = serde_json::json!({ "name": name, "kind": kind, "file": file });
            if let Some(map) = extra.as_object() {
                for (k, v) in map {
                    obj[k] = v.clone();
                }
            }
            Ok(obj)
        };
        for (i, b) in self.blocks.iter().enumerate() {
            let w = b.conv.weights();
            let (window, stride) = match &b.conv {
                ConvKind::Std(l) => (serde_json::Value::Null, l.stride()),
                ConvKind::Medi(l) => (serde_json::json!(l.median_window()), l.stride()),
            };
            entries.push(save_tensor(
                w,
                format!("conv{i}"),
                b.conv.kind_name(),
                serde_json::json!({
                    "k": w.shape().h,
                    "window": window,
                    "padding": (w.shape().h - 1) / 2,
                    "stride": stride,
                }),
            )?);
            if let ActState::PRelu(p) = &b.act {
                entries.push(save_tensor(&p.slopes, format!("prelu{i}"), "prelu", serde_json::json!({}))?);
            }
        }
        entries.push(save_tensor(&self.head.weights, "head_weights".into(), "linear", serde_json::json!({}))?);
        entries.push(save_tensor(&self.head.bias, "head_bias".into(), "linear_bias", serde_json::json!({}))?);

        let manifest = serde_json::json!({
            "spec": self.spec,
            "layers": entries,
        });
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Load a checkpoint written by [`Model::save`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Model> {
        let dir = dir.as_ref();
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let spec: NetworkSpec = serde_json::from_value(
            manifest
                .get("spec")
                .cloned()
                .ok_or_else(|| Error::Config("manifest missing 'spec'".into()))?,
        )?;
        let mut model = build(&spec, 0)?;
        let layers = manifest
            .get("layers")
            .and_then(|l| l.as_array())
            .ok_or_else(|| Error::Config("manifest missing 'layers'".into()))?;
        let mut params = model.params_mut();
        if layers.len() != params.len() {
            return Err(Error::Config(format!(
                "manifest lists {} parameters, model has {}",
                layers.len(),
                params.len()
            )));
        }
        for (entry, param) in layers.iter().zip(params.iter_mut()) {
            let file = entry
                .get("file")
                .and_then(|f| f.as_str())
                .ok_or_else(|| Error::Config("layer entry missing 'file'".into()))?;
            let t = Tensor::load(dir.join(file))?;
            if t.shape() != param.shape() {
                return Err(Error::Config(format!(
                    "parameter {} has shape {}, expected {}",
                    file,
                    t.shape(),
                    param.shape()
                )));
            }
            **param = t;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medi_k_keeps_parameter_count() {
        let counts: Vec<usize> = (0..=6)
            .map(|k| build(&NetworkSpec::toy(1, 10, k), 1).unwrap().param_count())
            .collect();
        for c in &counts[1..] {
            assert_eq!(*c, counts[0]);
        }
    }

    #[test]
    fn all_layers_medi_when_k_equals_depth() {
        let model = build(&NetworkSpec::toy(1, 10, 6), 1).unwrap();
        for b in &model.blocks {
            assert_eq!(b.conv.kind_name(), "medi");
        }
        let model = build(&NetworkSpec::toy(1, 10, 0), 1).unwrap();
        for b in &model.blocks {
            assert_eq!(b.conv.kind_name(), "std");
        }
    }

    #[test]
    fn identical_seed_gives_identical_weights_across_k() {
        let a = build(&NetworkSpec::toy(1, 10, 0), 5).unwrap();
        let b = build(&NetworkSpec::toy(1, 10, 3), 5).unwrap();
        for (pa, pb) in a.param_refs().iter().zip(b.param_refs().iter()) {
            assert_eq!(pa.data(), pb.data());
        }
    }

    #[test]
    fn spec_json_roundtrip_rebuilds_same_model() {
        let spec = NetworkSpec::toy(3, 10, 2);
        let json = spec.to_json();
        let back = NetworkSpec::from_json(&json).unwrap();
        assert_eq!(back, spec);
        let a = build(&spec, 11).unwrap();
        let b = build(&back, 11).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        for (pa, pb) in a.param_refs().iter().zip(b.param_refs().iter()) {
            assert_eq!(pa.data(), pb.data());
        }
    }

    #[test]
    fn spec_validation_catches_bad_configs() {
        let mut spec = NetworkSpec::toy(1, 10, 0);
        spec.medi_layers = 7;
        assert!(spec.validate().is_err());

        let mut spec = NetworkSpec::toy(1, 10, 0);
        spec.convs[0].kernel = 4;
        assert!(spec.validate().is_err());

        let mut spec = NetworkSpec::toy(1, 10, 0);
        spec.classes = 1;
        assert!(spec.validate().is_err());

        let mut spec = NetworkSpec::toy(1, 10, 0);
        spec.median_window = 4;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let spec = NetworkSpec::toy(1, 10, 1);
        let mut model = build(&spec, 3).unwrap();
        let mut rng = RngStream::new(8, 0);
        let x = rng.uniform_tensor(Shape::new(2, 1, 32, 32), 0.0, 1.0);
        let logits = model.forward_train(&x).unwrap();
        assert_eq!(logits.shape(), Shape::new(2, 10, 1, 1));
        let again = model.forward(&x).unwrap();
        assert_eq!(logits.data(), again.data());
    }

    #[test]
    fn backward_returns_gradient_per_parameter() {
        let spec = NetworkSpec::toy(1, 10, 1);
        let mut model = build(&spec, 3).unwrap();
        let mut rng = RngStream::new(9, 0);
        let x = rng.uniform_tensor(Shape::new(2, 1, 32, 32), 0.0, 1.0);
        let logits = model.forward_train(&x).unwrap();
        let grads = model.backward(&Tensor::full(logits.shape(), 0.1)).unwrap();
        let shapes = model.param_shapes();
        assert_eq!(grads.len(), shapes.len());
        for (g, s) in grads.iter().zip(shapes) {
            assert_eq!(g.shape(), s);
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let spec = NetworkSpec::toy(1, 10, 2);
        let model = build(&spec, 21).unwrap();
        model.save(dir.path()).unwrap();
        let loaded = Model::load(dir.path()).unwrap();
        assert_eq!(loaded.spec, spec);

        let mut rng = RngStream::new(10, 0);
        let x = rng.uniform_tensor(Shape::new(1, 1, 32, 32), 0.0, 1.0);
        let a = model.forward(&x).unwrap();
        let b = loaded.forward(&x).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn layer_activations_match_inference_path() {
        let spec = NetworkSpec::toy(1, 10, 1);
        let model = build(&spec, 4).unwrap();
        let mut rng = RngStream::new(11, 0);
        let x = rng.uniform_tensor(Shape::new(1, 1, 32, 32), 0.0, 1.0);
        let act0 = model.layer_activations(&x, 0).unwrap();
        assert_eq!(act0.shape(), Shape::new(1, 16, 32, 32));
        assert!(model.layer_activations(&x, 6).is_err());
    }
}
