//! Fully connected ReLU network with a single logit output.
//!
//! Weights are stored `(fan_in x fan_out)` per layer, so a `9 -> (16, 8) -> 1`
//! network has weight shapes `9x16`, `16x8` and `8x1`. Hidden layers apply
//! ReLU followed by inverted dropout; the output layer is linear.

mod interpret;
mod train;

pub use interpret::{
    badge_embedding, badge_embeddings, egl_score, egl_scores, input_gradients,
    last_layer_embedding, mc_dropout_probs, mc_dropout_probs_batch, InterpretationMatrix,
};
pub use train::{bce_with_logits, train, TrainConfig, TrainReport};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// Probability of zeroing a hidden unit while training or sampling.
    pub drop_prob: f64,
}

impl MlpConfig {
    pub const DEFAULT_HIDDEN: [usize; 2] = [16, 8];
    pub const DEFAULT_DROP_PROB: f64 = 0.8;

    pub fn new(input_dim: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden_dims: Self::DEFAULT_HIDDEN.to_vec(),
            drop_prob: Self::DEFAULT_DROP_PROB,
        }
    }

    pub fn with_hidden(mut self, hidden_dims: Vec<usize>) -> Self {
        self.hidden_dims = hidden_dims;
        self
    }

    pub fn with_drop_prob(mut self, drop_prob: f64) -> Self {
        self.drop_prob = drop_prob;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::Config(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!(
                "hidden layer widths must be positive, got {:?}",
                self.hidden_dims
            )));
        }
        check_drop_prob(self.drop_prob)
    }
}

fn check_drop_prob(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!(
            "drop_prob must lie in [0, 1), got {p}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in x fan_out`.
    pub weights: Matrix,
    /// `None` for a layer without a trainable bias.
    pub bias: Option<Vec<f64>>,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Self {
        Layer {
            weights,
            bias: Some(bias),
        }
    }

    pub fn without_bias(weights: Matrix) -> Self {
        Layer {
            weights,
            bias: None,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    /// `out = W^T a + b`.
    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match &self.bias {
            Some(b) => out.extend_from_slice(b),
            None => out.resize(self.fan_out(), 0.0),
        }
        for (i, &a) in input.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.weights.row(i)) {
                *o += a * w;
            }
        }
    }
}

/// Parameters of the network `f(x | theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    config: MlpConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Deterministic,
    /// Inverted dropout on every hidden unit. Row `r` draws its mask from a
    /// stream keyed by `(seed, r)`, so any row block reproduces the full pass.
    Dropout {
        seed: u64,
    },
}

/// Per-row record of a forward pass, enough to backpropagate.
#[derive(Debug, Clone, Default)]
pub(crate) struct Trace {
    /// Activation entering each layer; `inputs[0]` is the sample itself.
    pub inputs: Vec<Vec<f64>>,
    /// d(activation)/d(pre-activation) per hidden layer, dropout scale included.
    pub gates: Vec<Vec<f64>>,
    pub logit: f64,
}

/// He-style initialisation: `N(0, 2 / fan_in)` weights, zero biases.
pub fn build_model(config: &MlpConfig, seed: u64) -> Result<MlpModel> {
    config.validate()?;
    let mut rng = seed::rng(seed);
    let mut dims = Vec::with_capacity(config.hidden_dims.len() + 2);
    dims.push(config.input_dim);
    dims.extend_from_slice(&config.hidden_dims);
    dims.push(1);

    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                })
                .collect();
            Layer::new(
                Matrix::from_vec(fan_in, fan_out, data).expect("shape computed above"),
                vec![0.0; fan_out],
            )
        })
        .collect();
    Ok(MlpModel {
        layers,
        config: config.clone(),
    })
}

impl MlpModel {
    /// Assembles a model from explicit layers. Unlike [`build_model`] this
    /// accepts a single output layer with no hidden layers and bias-free layers,
    /// which is how hand-built reference networks are expressed.
    pub fn from_layers(layers: Vec<Layer>, drop_prob: f64) -> Result<Self> {
        check_drop_prob(drop_prob)?;
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("a model needs at least one layer".into()))?;
        if first.fan_in() == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Dimension {
                    expected: pair[0].fan_out(),
                    got: pair[1].fan_in(),
                });
            }
        }
        for layer in &layers {
            if let Some(b) = &layer.bias {
                if b.len() != layer.fan_out() {
                    return Err(Error::Dimension {
                        expected: layer.fan_out(),
                        got: b.len(),
                    });
                }
            }
            let finite_bias = layer.bias.iter().flatten().all(|v| v.is_finite());
            if !layer.weights.is_finite() || !finite_bias {
                return Err(Error::Numeric("model parameters must be finite".into()));
            }
        }
        let last = layers.last().expect("non-empty");
        if last.fan_out() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                got: last.fan_out(),
            });
        }
        let config = MlpConfig {
            input_dim: first.fan_in(),
            hidden_dims: layers[..layers.len() - 1]
                .iter()
                .map(Layer::fan_out)
                .collect(),
            drop_prob,
        };
        Ok(MlpModel { layers, config })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    /// Width of the activations feeding the output unit.
    pub fn embedding_dim(&self) -> usize {
        self.output_layer().fan_in()
    }

    pub fn output_layer(&self) -> &Layer {
        self.layers.last().expect("model has at least one layer")
    }

    /// Output weight vector `w_out`, length [`Self::embedding_dim`].
    pub fn output_weights(&self) -> Vec<f64> {
        self.output_layer().weights.column(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Multiplies the output layer (weights and bias) by `c`, scaling every logit by `c`.
    pub fn scale_output(&mut self, c: f64) {
        let out = self.layers.last_mut().expect("non-empty");
        out.weights.scale(c);
        if let Some(b) = &mut out.bias {
            b.iter_mut().for_each(|v| *v *= c);
        }
    }

    pub(crate) fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        if !x.is_finite() {
            return Err(Error::Data("input contains non-finite values".into()));
        }
        Ok(())
    }

    /// Forward pass on one row. `dropout` supplies the mask stream; `None`
    /// means deterministic mode.
    pub(crate) fn forward_row(&self, x: &[f64], mut dropout: Option<&mut seed::Rng>) -> Trace {
        let p = self.config.drop_prob;
        let keep_scale = 1.0 / (1.0 - p);
        let n_hidden = self.layers.len() - 1;
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.layers.len()),
            gates: Vec::with_capacity(n_hidden),
            logit: 0.0,
        };
        let mut act = x.to_vec();
        let mut pre = Vec::new();
        for layer in &self.layers[..n_hidden] {
            layer.affine(&act, &mut pre);
            let mut gate = Vec::with_capacity(pre.len());
            for v in pre.iter_mut() {
                let mut g = if *v > 0.0 { 1.0 } else { 0.0 };
                if let Some(rng) = dropout.as_deref_mut() {
                    let u: f64 = rng.random();
                    g = if u < p { 0.0 } else { g * keep_scale };
                }
                *v *= g;
                gate.push(g);
            }
            trace.inputs.push(std::mem::replace(&mut act, pre.clone()));
            trace.gates.push(gate);
        }
        let out = self.output_layer();
        trace.logit = dot(&act, out.weights.as_slice()) + out.bias.as_ref().map_or(0.0, |b| b[0]);
        trace.inputs.push(act);
        trace
    }

    /// Backpropagates `d loss / d logit = upstream` through a recorded pass.
    /// `visit(l, a, delta)` sees each layer from the output down, with `a` the
    /// activation entering layer `l` and `delta` the gradient at its output,
    /// so `dW[i][j] = a[i] * delta[j]` and `db = delta`. Returns the gradient
    /// with respect to the input.
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        upstream: f64,
        mut visit: impl FnMut(usize, &[f64], &[f64]),
    ) -> Vec<f64> {
        let mut delta = vec![upstream];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            visit(l, &trace.inputs[l], &delta);
            let w = &layer.weights;
            let mut grad_in: Vec<f64> = (0..w.rows()).map(|i| dot(w.row(i), &delta)).collect();
            if l > 0 {
                for (d, g) in grad_in.iter_mut().zip(&trace.gates[l - 1]) {
                    *d *= g;
                }
            }
            delta = grad_in;
        }
        delta
    }

    pub(crate) fn row_rng(seed: u64, row: usize) -> seed::Rng {
        seed::derived_rng(seed, "dropout-row", row as u64)
    }

    pub fn forward_logits(&self, x: &Matrix, mode: ForwardMode) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let logits = (0..x.rows())
            .map(|r| match mode {
                ForwardMode::Deterministic => self.forward_row(x.row(r), None).logit,
                ForwardMode::Dropout { seed } => {
                    let mut rng = Self::row_rng(seed, r);
                    self.forward_row(x.row(r), Some(&mut rng)).logit
                }
            })
            .collect::<Vec<_>>();
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numeric(
                "forward pass produced a non-finite logit".into(),
            ));
        }
        Ok(logits)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .forward_logits(x, ForwardMode::Deterministic)?
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    /// ReLU on/off pattern of every hidden unit for one input.
    pub fn activation_pattern(&self, x: &[f64]) -> Vec<bool> {
        self.forward_row(x, None)
            .gates
            .iter()
            .flatten()
            .map(|&g| g > 0.0)
            .collect()
    }

    /// Smallest absolute hidden pre-activation for one input; the distance
    /// (in pre-activation units) to the nearest ReLU kink.
    pub fn min_preactivation_margin(&self, x: &[f64]) -> f64 {
        let trace = self.forward_row(x, None);
        let mut margin = f64::INFINITY;
        let mut pre = Vec::new();
        for (layer, input) in self
            .layers
            .iter()
            .zip(&trace.inputs)
            .take(trace.gates.len())
        {
            layer.affine(input, &mut pre);
            margin = pre.iter().fold(margin, |m, v| m.min(v.abs()));
        }
        margin
    }
}

/// Logistic function, clamped into the open interval `(0, 1)`.
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_model(w: &[f64], b: f64) -> MlpModel {
        let weights = Matrix::from_vec(w.len(), 1, w.to_vec()).unwrap();
        MlpModel::from_layers(vec![Layer::new(weights, vec![b])], 0.0).unwrap()
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let cfg = MlpConfig::new(2);
        assert_eq!(build_model(&cfg, 7).unwrap(), build_model(&cfg, 7).unwrap());
        assert_ne!(build_model(&cfg, 7).unwrap(), build_model(&cfg, 8).unwrap());
    }

    #[test]
    fn build_rejects_degenerate_configs() {
        assert!(matches!(
            build_model(&MlpConfig::new(0), 1),
            Err(Error::Config(_))
        ));
        let empty = MlpConfig::new(3).with_hidden(vec![]);
        assert!(matches!(build_model(&empty, 1), Err(Error::Config(_))));
        let zero_width = MlpConfig::new(3).with_hidden(vec![4, 0]);
        assert!(build_model(&zero_width, 1).is_err());
        assert!(build_model(&MlpConfig::new(3).with_drop_prob(1.0), 1).is_err());
    }

    #[test]
    fn weight_shapes_chain() {
        let m = build_model(&MlpConfig::new(9), 0).unwrap();
        let shapes: Vec<_> = m.layers().iter().map(|l| l.weights.shape()).collect();
        assert_eq!(shapes, vec![(9, 16), (16, 8), (8, 1)]);
        assert!(m
            .layers()
            .iter()
            .all(|l| l.bias.as_ref().unwrap().iter().all(|&b| b == 0.0)));
        assert_eq!(m.embedding_dim(), 8);
    }

    #[test]
    fn init_scale_matches_fan_in() {
        let m = build_model(&MlpConfig::new(200).with_hidden(vec![100]), 3).unwrap();
        let w = m.layers()[0].weights.as_slice();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        // 20k draws, expected variance 2/200
        assert_close!(var, 0.01, 0.0005);
    }

    #[test]
    fn linear_layer_logit() {
        let m = linear_model(&[1.0, 2.0], 0.0);
        let x = Matrix::from_rows(&[[3.0, 1.0]]).unwrap();
        assert_eq!(
            m.forward_logits(&x, ForwardMode::Deterministic).unwrap(),
            vec![5.0]
        );
    }

    #[test]
    fn dropout_with_zero_probability_is_identity() {
        let m = build_model(&MlpConfig::new(3).with_drop_prob(0.0), 11).unwrap();
        let x = Matrix::from_rows(&[[0.3, -1.0, 2.0], [1.5, 0.2, -0.7]]).unwrap();
        let det = m.forward_logits(&x, ForwardMode::Deterministic).unwrap();
        let drop = m
            .forward_logits(&x, ForwardMode::Dropout { seed: 5 })
            .unwrap();
        assert_eq!(det, drop);
    }

    #[test]
    fn dropout_is_reproducible_and_row_local() {
        let m = build_model(&MlpConfig::new(3).with_drop_prob(0.5), 11).unwrap();
        let x = Matrix::from_rows(&[[0.3, -1.0, 2.0], [1.5, 0.2, -0.7], [0.1, 0.1, 0.1]]).unwrap();
        let a = m
            .forward_logits(&x, ForwardMode::Dropout { seed: 9 })
            .unwrap();
        let b = m
            .forward_logits(&x, ForwardMode::Dropout { seed: 9 })
            .unwrap();
        assert_eq!(a, b);
        let first_two = m
            .forward_logits(&x.select_rows(&[0, 1]), ForwardMode::Dropout { seed: 9 })
            .unwrap();
        assert_eq!(&a[..2], &first_two[..]);
    }

    #[test]
    fn forward_validates_input() {
        let m = linear_model(&[1.0, 2.0], 0.0);
        let wrong = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            m.forward_logits(&wrong, ForwardMode::Deterministic),
            Err(Error::Dimension {
                expected: 2,
                got: 3
            })
        ));
        let nan = Matrix::from_rows(&[[1.0, f64::NAN]]).unwrap();
        assert!(matches!(m.predict_proba(&nan), Err(Error::Data(_))));
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_close!(sigmoid(6.0), 0.997_527_376_843_365_6, 1e-12);
        assert_close!(sigmoid(-6.0), 0.002_472_623_156_634_775, 1e-12);
        for z in [-500.0, 500.0] {
            let p = sigmoid(z);
            assert!(p > 0.0 && p < 1.0, "{p}");
        }
    }

    #[test]
    fn predict_proba_maps_logits() {
        let m = linear_model(&[1.0], 0.0);
        let x = Matrix::from_rows(&[[0.0], [6.0], [-6.0]]).unwrap();
        let p = m.predict_proba(&x).unwrap();
        assert_eq!(p[0], 0.5);
        assert_close!(p[1] + p[2], 1.0, 1e-15);
    }

    #[test]
    fn from_layers_checks_chaining() {
        let l1 = Layer::new(Matrix::zeros(2, 3), vec![0.0; 3]);
        let l2 = Layer::new(Matrix::zeros(4, 1), vec![0.0]);
        assert!(matches!(
            MlpModel::from_layers(vec![l1.clone(), l2], 0.0),
            Err(Error::Dimension {
                expected: 3,
                got: 4
            })
        ));
        let two_out = Layer::new(Matrix::zeros(3, 2), vec![0.0; 2]);
        assert!(MlpModel::from_layers(vec![l1, two_out], 0.0).is_err());
    }
}
