//! Noise-robustness evaluation: accuracy under per-image seeded
//! degradations, cross-product reports, and feature-map visualization.

use std::path::Path;
use std::time::Instant;

use crate::dataset::Dataset;
use crate::degrade::{degrade_with_stream, DegradationConfig, ImagePlane};
use crate::error::{Error, Result};
use crate::net::Model;
use crate::rng::splitmix64;
use crate::tensor::Tensor;

const EVAL_BATCH: usize = 64;

/// Top-1 accuracy on the dataset, optionally degrading every test image
/// first. Image `i` uses the stream id derived from its index, so results
/// do not depend on evaluation order or thread count.
pub fn evaluate(
    model: &Model,
    data: &Dataset,
    degradation: Option<&DegradationConfig>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty dataset".into()));
    }
    if let Some(cfg) = degradation {
        cfg.validate()?;
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, labels) = match degradation {
            None => data.batch(chunk)?,
            Some(cfg) => data.batch_with(chunk, |i, img| {
                degrade_with_stream(img, cfg, splitmix64(i as u64 + 1))
            })?,
        };
        let logits = model.forward(&x)?;
        let classes = logits.shape().c;
        for (s, &label) in labels.iter().enumerate() {
            let row = &logits.data()[s * classes..(s + 1) * classes];
            if crate::train::argmax(row) == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// One cell of the robustness matrix.
#[derive(Clone, Debug)]
pub struct EvalRow {
    pub model: String,
    pub degradation: String,
    pub param_json: String,
    pub accuracy: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Accuracy matrix over (model, degradation) cells.
#[derive(Clone, Debug, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub wall_time_secs: f64,
}

impl EvalReport {
    pub fn accuracy(&self, model: &str, degradation: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.degradation == degradation)
            .map(|r| r.accuracy)
    }

    /// CSV with the fixed column order
    /// `model,degradation,param_json,accuracy,n_samples,seed`.
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["model", "degradation", "param_json", "accuracy", "n_samples", "seed"])
            .map_err(|e| Error::Config(e.to_string()))?;
        for r in &self.rows {
            wtr.write_record([
                r.model.as_str(),
                r.degradation.as_str(),
                r.param_json.as_str(),
                &format!("{:.6}", r.accuracy),
                &r.n_samples.to_string(),
                &r.seed.to_string(),
            ])
            .map_err(|e| Error::Config(e.to_string()))?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// Evaluate every model against every degradation (`None` = clean).
pub fn robustness_matrix(
    models: &[(String, &Model)],
    degradations: &[(String, Option<DegradationConfig>)],
    data: &Dataset,
) -> Result<EvalReport> {
    let start = Instant::now();
    let mut rows = Vec::with_capacity(models.len() * degradations.len());
    for (model_name, model) in models {
        for (deg_name, cfg) in degradations {
            let accuracy = evaluate(model, data, cfg.as_ref())?;
            rows.push(EvalRow {
                model: model_name.clone(),
                degradation: deg_name.clone(),
                param_json: cfg.as_ref().map(|c| c.to_json()).unwrap_or_else(|| "{}".into()),
                accuracy,
                n_samples: data.len(),
                seed: cfg.as_ref().map(|c| c.seed).unwrap_or(0),
            });
        }
    }
    Ok(EvalReport { rows, wall_time_secs: start.elapsed().as_secs_f64() })
}

/// Tiled per-channel activation planes, each min-max normalized to
/// `[0, 255]`.
pub struct FeatureMapGrid {
    pub image: ImagePlane,
    pub tiles: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Render the pre-activation feature maps of conv block `layer_index` for a
/// single input image.
pub fn dump_feature_maps(
    model: &Model,
    input: &Tensor,
    layer_index: usize,
) -> Result<FeatureMapGrid> {
    if input.shape().n != 1 {
        return Err(Error::InvalidArgument("feature maps are dumped for one image at a time".into()));
    }
    let act = model.layer_activations(input, layer_index)?;
    let shape = act.shape();
    let (channels, h, w) = (shape.c, shape.h, shape.w);
    let cols = (channels as f64).sqrt().ceil() as usize;
    let rows = channels.div_ceil(cols);
    let mut grid = ImagePlane::new(1, rows * h, cols * w)?;
    for c in 0..channels {
        let plane = act.plane(0, c);
        let lo = plane.iter().cloned().fold(f32::MAX, f32::min);
        let hi = plane.iter().cloned().fold(f32::MIN, f32::max);
        let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
        let (ty, tx) = (c / cols, c % cols);
        for y in 0..h {
            for x in 0..w {
                let v = (plane[y * w + x] - lo) * scale;
                grid.set(0, ty * h + y, tx * w + x, v);
            }
        }
    }
    Ok(FeatureMapGrid { image: grid, tiles: channels, rows, cols })
}

/// Spatial total variation: sum of absolute horizontal and vertical
/// neighbor differences over all planes.
pub fn total_variation(t: &Tensor) -> f64 {
    let shape = t.shape();
    let mut tv = 0f64;
    for n in 0..shape.n {
        for c in 0..shape.c {
            let p = t.plane(n, c);
            for y in 0..shape.h {
                for x in 0..shape.w {
                    let v = p[y * shape.w + x] as f64;
                    if x + 1 < shape.w {
                        tv += (p[y * shape.w + x + 1] as f64 - v).abs();
                    }
                    if y + 1 < shape.h {
                        tv += (p[(y + 1) * shape.w + x] as f64 - v).abs();
                    }
                }
            }
        }
    }
    tv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic;
    use crate::degrade::{Blur, Noise};
    use crate::net::{build, NetworkSpec};
    use crate::rng::RngStream;
    use crate::tensor::Shape;

    #[test]
    fn random_model_scores_near_chance() {
        let model = build(&NetworkSpec::toy(1, 10, 0), 42).unwrap();
        let data = synthetic(1000, 13, false);
        let acc = evaluate(&model, &data, None).unwrap();
        assert!(
            (acc - 0.10).abs() <= 0.03,
            "random 10-class model should sit near chance, got {acc}"
        );
    }

    #[test]
    fn evaluation_is_reproducible() {
        let model = build(&NetworkSpec::toy(1, 10, 1), 1).unwrap();
        let data = synthetic(64, 3, false);
        let cfg = DegradationConfig {
            noise: Noise::SaltPepper { rho: 0.10 },
            seed: 5,
            ..Default::default()
        };
        let a = evaluate(&model, &data, Some(&cfg)).unwrap();
        let b = evaluate(&model, &data, Some(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_cell_matrix_equals_evaluate() {
        let model = build(&NetworkSpec::toy(1, 10, 0), 2).unwrap();
        let data = synthetic(50, 4, false);
        let cfg = DegradationConfig {
            blur: Blur::Gaussian { sigma: 1.0, ksize: 5 },
            seed: 9,
            ..Default::default()
        };
        let report = robustness_matrix(
            &[("base".into(), &model)],
            &[("gb1".into(), Some(cfg.clone()))],
            &data,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 1);
        let direct = evaluate(&model, &data, Some(&cfg)).unwrap();
        assert_eq!(report.rows[0].accuracy, direct);
        assert_eq!(report.rows[0].n_samples, 50);
        assert_eq!(report.rows[0].seed, 9);
    }

    #[test]
    fn csv_has_header_and_stable_columns() {
        let report = EvalReport {
            rows: vec![EvalRow {
                model: "base".into(),
                degradation: "sp:0.10".into(),
                param_json: "{\"a\":1}".into(),
                accuracy: 0.5,
                n_samples: 10,
                seed: 3,
            }],
            wall_time_secs: 0.0,
        };
        let csv = report.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "model,degradation,param_json,accuracy,n_samples,seed"
        );
        // The JSON cell contains commas and must be quoted.
        assert!(lines.next().unwrap().contains("\"{\"\"a\"\":1}\""));
    }

    #[test]
    fn feature_grid_covers_every_channel() {
        let model = build(&NetworkSpec::toy(1, 10, 1), 3).unwrap();
        let mut rng = RngStream::new(1, 0);
        let x = rng.uniform_tensor(Shape::new(1, 1, 32, 32), 0.0, 1.0);
        let grid = dump_feature_maps(&model, &x, 0).unwrap();
        assert_eq!(grid.tiles, 16);
        assert_eq!(grid.rows * grid.cols >= grid.tiles, true);
        assert_eq!(grid.image.height(), grid.rows * 32);
        assert_eq!(grid.image.width(), grid.cols * 32);
    }

    #[test]
    fn zero_input_gives_uniform_tiles() {
        let model = build(&NetworkSpec::toy(1, 10, 0), 3).unwrap();
        let x = Tensor::zeros(Shape::new(1, 1, 32, 32));
        let grid = dump_feature_maps(&model, &x, 0).unwrap();
        // Zero input through a bias-free conv is zero; every tile collapses
        // to a single value.
        for &v in grid.image.data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn total_variation_of_checkerboard_exceeds_flat() {
        let flat = Tensor::full(Shape::new(1, 1, 8, 8), 3.0);
        assert_eq!(total_variation(&flat), 0.0);
        let mut board = Tensor::zeros(Shape::new(1, 1, 8, 8));
        for y in 0..8 {
            for x in 0..8 {
                board.set(0, 0, y, x, ((x + y) % 2) as f32);
            }
        }
        assert!(total_variation(&board) > 100.0);
    }
}
