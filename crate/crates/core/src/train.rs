//! SGD training loop with momentum and a step learning-rate schedule.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::net::Model;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Multiplier applied at each epoch listed in `decay_epochs` (1-based).
    pub lr_decay: f32,
    pub decay_epochs: Vec<usize>,
    pub momentum: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            lr: 1e-2,
            lr_decay: 0.1,
            decay_epochs: vec![7, 9],
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be non-negative, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) && self.momentum != 0.0 {
            return Err(Error::InvalidArgument(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch index under the step schedule.
    pub fn epoch_lr(&self, epoch: usize) -> f32 {
        let decays = self.decay_epochs.iter().filter(|&&e| epoch + 1 >= e).count();
        self.lr * self.lr_decay.powi(decays as i32)
    }
}

/// Per-epoch training statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Index of the first maximal entry.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean softmax cross-entropy over the batch.
///
/// Returns the loss, the logit gradient `(softmax - onehot) / n`, and the
/// number of correct argmax predictions.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor, usize)> {
    let shape = logits.shape();
    let n = shape.n;
    let classes = shape.c * shape.h * shape.w;
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    let mut d_logits = Tensor::zeros(shape);
    let mut loss = 0f64;
    let mut correct = 0usize;
    for s in 0..n {
        let row = &logits.data()[s * classes..(s + 1) * classes];
        let label = labels[s];
        if label >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let max = row.iter().cloned().fold(f32::MIN, f32::max) as f64;
        let mut denom = 0f64;
        for &v in row {
            denom += ((v as f64) - max).exp();
        }
        loss += denom.ln() + max - row[label] as f64;
        if argmax(row) == label {
            correct += 1;
        }
        let drow = &mut d_logits.data_mut()[s * classes..(s + 1) * classes];
        for (k, d) in drow.iter_mut().enumerate() {
            let p = (((row[k] as f64) - max).exp() / denom) as f32;
            *d = (p - if k == label { 1.0 } else { 0.0 }) / n as f32;
        }
    }
    Ok((loss / n as f64, d_logits, correct))
}

/// Momentum-SGD trainer; owns the velocity buffers so training can be
/// checkpointed and resumed with bit-identical behavior.
pub struct Trainer {
    pub cfg: TrainConfig,
    velocity: Vec<Tensor>,
    pub epochs_done: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, model: &Model) -> Result<Self> {
        cfg.validate()?;
        let velocity = model.param_shapes().into_iter().map(Tensor::zeros).collect();
        Ok(Trainer { cfg, velocity, epochs_done: 0 })
    }

    /// Train until `cfg.epochs` total epochs are done (continuing from
    /// `epochs_done` when resumed). Returns stats for the epochs run now.
    pub fn run(&mut self, model: &mut Model, data: &Dataset) -> Result<Vec<EpochStats>> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
        }
        let mut stats = Vec::new();
        for epoch in self.epochs_done..self.cfg.epochs {
            let lr = self.cfg.epoch_lr(epoch);
            // Shuffle order depends only on (seed, epoch) so a resumed run
            // sees the same batches.
            let mut order: Vec<usize> = (0..data.len()).collect();
            RngStream::new(self.cfg.seed, 10_000 + epoch as u64).shuffle(&mut order);

            let mut epoch_loss = 0f64;
            let mut epoch_correct = 0usize;
            let mut batches = 0usize;
            for chunk in order.chunks(self.cfg.batch_size) {
                let (x, labels) = data.batch(chunk)?;
                let logits = model.forward_train(&x)?;
                let (loss, d_logits, correct) = softmax_cross_entropy(&logits, &labels)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite loss {loss} at epoch {} batch {batches}",
                        epoch + 1
                    )));
                }
                let grads = model.backward(&d_logits)?;
                self.apply(model, &grads, lr);
                epoch_loss += loss * chunk.len() as f64;
                epoch_correct += correct;
                batches += 1;
            }
            let stat = EpochStats {
                epoch: epoch + 1,
                loss: epoch_loss / data.len() as f64,
                accuracy: epoch_correct as f64 / data.len() as f64,
            };
            stats.push(stat);
            self.epochs_done = epoch + 1;
        }
        Ok(stats)
    }

    /// One optimizer step: `v = momentum*v - lr*g; p += v`.
    fn apply(&mut self, model: &mut Model, grads: &[Tensor], lr: f32) {
        let momentum = self.cfg.momentum;
        let mut params = model.params_mut();
        debug_assert_eq!(params.len(), grads.len());
        for ((param, grad), vel) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            for ((p, &g), v) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(vel.data_mut().iter_mut())
            {
                *v = momentum * *v - lr * g;
                *p += *v;
            }
        }
    }

    /// Persist optimizer state next to a model checkpoint.
    pub fn save_state(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (i, v) in self.velocity.iter().enumerate() {
            let file = format!("v{i:03}.bin");
            v.save(dir.join(&file))?;
            files.push(file);
        }
        let state = serde_json::json!({
            "config": self.cfg,
            "epochs_done": self.epochs_done,
            "velocity": files,
        });
        std::fs::write(dir.join("trainer.json"), serde_json::to_string_pretty(&state)?)?;
        Ok(())
    }

    /// Restore optimizer state written by [`Trainer::save_state`].
    pub fn load_state(dir: impl AsRef<Path>, model: &Model) -> Result<Self> {
        let dir = dir.as_ref();
        let raw: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("trainer.json"))?)?;
        let cfg: TrainConfig = serde_json::from_value(
            raw.get("config")
                .cloned()
                .ok_or_else(|| Error::Config("trainer.json missing 'config'".into()))?,
        )?;
        let epochs_done = raw
            .get("epochs_done")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Config("trainer.json missing 'epochs_done'".into()))?
            as usize;
        let files = raw
            .get("velocity")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::Config("trainer.json missing 'velocity'".into()))?;
        let mut velocity = Vec::with_capacity(files.len());
        for f in files {
            let name = f
                .as_str()
                .ok_or_else(|| Error::Config("velocity entry is not a string".into()))?;
            velocity.push(Tensor::load(dir.join(name))?);
        }
        let shapes = model.param_shapes();
        if velocity.len() != shapes.len()
            || velocity.iter().zip(&shapes).any(|(v, s)| v.shape() != *s)
        {
            return Err(Error::Config("optimizer state does not match the model".into()));
        }
        Ok(Trainer { cfg, velocity, epochs_done })
    }
}

/// Write per-epoch stats as CSV (columns: epoch, loss, accuracy).
pub fn save_loss_curve(path: impl AsRef<Path>, stats: &[EpochStats]) -> Result<()> {
    let mut out = String::from("epoch,loss,accuracy\n");
    for s in stats {
        out.push_str(&format!("{},{},{}\n", s.epoch, s.loss, s.accuracy));
    }
    std::fs::write(path, out)?;
    Ok(())
}
