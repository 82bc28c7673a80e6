use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{MlpModel, Trace};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::experiment::auc;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Clamped to the labelled-set size.
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 200,
            batch_size: 64,
            patience: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "max_epochs and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training cross-entropy per epoch, measured with dropout active.
    pub loss_history: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_auc: Option<f64>,
    pub warnings: Vec<String>,
}

/// Numerically stable `BCE(sigmoid(z), y)`.
pub fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

struct LayerGrad {
    w: Vec<f64>,
    b: Vec<f64>,
}

struct Adam {
    step: i32,
    m: Vec<LayerGrad>,
    v: Vec<LayerGrad>,
}

fn zeros_like(model: &MlpModel) -> Vec<LayerGrad> {
    model
        .layers()
        .iter()
        .map(|l| LayerGrad {
            w: vec![0.0; l.weights.as_slice().len()],
            b: vec![0.0; l.bias.as_ref().map_or(0, Vec::len)],
        })
        .collect()
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        Adam {
            step: 0,
            m: zeros_like(model),
            v: zeros_like(model),
        }
    }

    fn update(&mut self, model: &mut MlpModel, grads: &[LayerGrad], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
            }
        };
        for (l, layer) in model.layers_mut().iter_mut().enumerate() {
            let (m, v) = (&mut self.m[l], &mut self.v[l]);
            let rows = layer.weights.rows();
            let cols = layer.weights.cols();
            // weights are stored row-major; update through row slices
            for r in 0..rows {
                let span = r * cols..(r + 1) * cols;
                apply(
                    layer.weights.row_mut(r),
                    &grads[l].w[span.clone()],
                    &mut m.w[span.clone()],
                    &mut v.w[span],
                );
            }
            if let Some(b) = &mut layer.bias {
                apply(b, &grads[l].b, &mut m.b, &mut v.b);
            }
        }
    }
}

fn accumulate(model: &MlpModel, trace: &Trace, dz: f64, grads: &mut [LayerGrad]) {
    let layers = model.layers();
    model.backward(trace, dz, |l, a, delta| {
        let cols = layers[l].fan_out();
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (g, d) in grads[l].w[i * cols..(i + 1) * cols].iter_mut().zip(delta) {
                *g += ai * d;
            }
        }
        for (g, d) in grads[l].b.iter_mut().zip(delta) {
            *g += d;
        }
    });
}

/// Validation summary used for model selection: AUC when both classes are
/// present, cross-entropy otherwise and as the tie-breaker.
fn evaluate(model: &MlpModel, val: &Dataset) -> Result<(Option<f64>, f64)> {
    let logits = model.forward_logits(&val.features, super::ForwardMode::Deterministic)?;
    let loss = logits
        .iter()
        .zip(&val.labels)
        .map(|(&z, &y)| bce_with_logits(z, f64::from(y)))
        .sum::<f64>()
        / val.len() as f64;
    let score = if val.has_both_classes() {
        Some(auc(&logits, &val.labels)?)
    } else {
        None
    };
    Ok((score, loss))
}

fn improves(candidate: (Option<f64>, f64), best: (Option<f64>, f64)) -> bool {
    match (candidate.0, best.0) {
        (Some(a), Some(b)) if a != b => a > b,
        _ => candidate.1 < best.1,
    }
}

/// Mini-batch Adam on mean binary cross-entropy with dropout active.
///
/// Returns the parameters of the epoch with the best validation AUC (ties
/// broken by lower validation loss). Shuffling and dropout streams are keyed
/// by `tc.seed` and the epoch index.
pub fn train(
    model: &MlpModel,
    labeled: &Dataset,
    val: &Dataset,
    tc: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    tc.validate()?;
    if labeled.is_empty() {
        return Err(Error::Training("labelled set is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Training("validation set is empty".into()));
    }
    model.check_input(&labeled.features)?;
    model.check_input(&val.features)?;

    let mut warnings = Vec::new();
    if !labeled.has_both_classes() {
        warnings.push(format!(
            "labelled set has a single class ({} samples)",
            labeled.len()
        ));
    }
    if !val.has_both_classes() {
        warnings.push("validation set has a single class; selecting on validation loss".into());
    }

    let n = labeled.len();
    let batch = tc.batch_size.min(n);
    let mut current = model.clone();
    let mut adam = Adam::new(model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_history = Vec::with_capacity(tc.max_epochs);

    let mut best_model = current.clone();
    let mut best_score = (None, f64::INFINITY);
    let mut best_epoch = 0;
    let mut since_best = 0;

    for epoch in 0..tc.max_epochs {
        order.shuffle(&mut seed::derived_rng(tc.seed, "shuffle", epoch as u64));
        let mut dropout_rng = seed::derived_rng(tc.seed, "train-dropout", epoch as u64);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = zeros_like(&current);
            for &i in chunk {
                let trace = current.forward_row(labeled.features.row(i), Some(&mut dropout_rng));
                let y = f64::from(labeled.labels[i]);
                epoch_loss += bce_with_logits(trace.logit, y);
                let dz = (super::sigmoid(trace.logit) - y) / chunk.len() as f64;
                accumulate(&current, &trace, dz, &mut grads);
            }
            adam.update(&mut current, &grads, tc.learning_rate);
        }
        let mean_loss = epoch_loss / n as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training loss diverged at epoch {epoch}"
            )));
        }
        loss_history.push(mean_loss);

        let score = evaluate(&current, val)?;
        if epoch == 0 || improves(score, best_score) {
            best_score = score;
            best_model = current.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if tc.patience > 0 && since_best >= tc.patience {
                break;
            }
        }
    }

    Ok((
        best_model,
        TrainReport {
            loss_history,
            best_epoch,
            best_val_auc: best_score.0,
            warnings,
        },
    ))
}
