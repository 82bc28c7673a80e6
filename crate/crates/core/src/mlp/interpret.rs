//! Per-sample quantities derived from a trained network: input gradients
//! (local linear classifiers), penultimate embeddings, BADGE gradient
//! embeddings, expected gradient length and MC-dropout samples.

use super::{sigmoid, ForwardMode, MlpModel, Trace};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::seed;

/// Local linear classifier of every sample: `logit(x_i) = weights[i] . x_i + offsets[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpretationMatrix {
    /// Row `i` is `d logit / d x` at sample `i`.
    pub weights: Matrix,
    pub offsets: Vec<f64>,
}

impl InterpretationMatrix {
    /// Evaluates the local linear map of row `i` at an arbitrary point.
    pub fn evaluate(&self, i: usize, x: &[f64]) -> f64 {
        dot(self.weights.row(i), x) + self.offsets[i]
    }
}

fn check_row(model: &MlpModel, x: &[f64]) -> Result<()> {
    if x.len() != model.input_dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("input contains non-finite values".into()));
    }
    Ok(())
}

/// Intercept of the affine map selected by a trace's activation pattern:
/// the logit the same pattern would produce at `x = 0`.
fn region_offset(model: &MlpModel, trace: &Trace) -> f64 {
    let layers = model.layers();
    let n_hidden = layers.len() - 1;
    let mut h = vec![0.0; model.input_dim()];
    let mut pre = Vec::new();
    for (layer, gate) in layers[..n_hidden].iter().zip(&trace.gates) {
        layer.affine(&h, &mut pre);
        for (v, g) in pre.iter_mut().zip(gate) {
            *v *= g;
        }
        std::mem::swap(&mut h, &mut pre);
    }
    let out = &layers[n_hidden];
    dot(&h, out.weights.as_slice()) + out.bias.as_ref().map_or(0.0, |b| b[0])
}

/// Gradient of the pre-sigmoid logit with respect to each input row, plus
/// the intercept of the linear region the row falls in.
pub fn input_gradients(model: &MlpModel, x: &Matrix) -> Result<InterpretationMatrix> {
    model.check_input(x)?;
    let mut weights = Matrix::zeros(x.rows(), x.cols());
    let mut offsets = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let trace = model.forward_row(x.row(r), None);
        let grad = model.backward(&trace, 1.0, |_, _, _| {});
        weights.row_mut(r).copy_from_slice(&grad);
        offsets.push(region_offset(model, &trace));
    }
    if !weights.is_finite() || offsets.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numeric("non-finite input gradient".into()));
    }
    Ok(InterpretationMatrix { weights, offsets })
}

/// Activations feeding the output unit, one row per sample.
pub fn last_layer_embedding(model: &MlpModel, x: &Matrix) -> Result<Matrix> {
    model.check_input(x)?;
    let mut out = Matrix::zeros(x.rows(), model.embedding_dim());
    for r in 0..x.rows() {
        let trace = model.forward_row(x.row(r), None);
        out.row_mut(r)
            .copy_from_slice(trace.inputs.last().expect("output layer input"));
    }
    Ok(out)
}

/// `(p - y_hat) * w_out`, the cross-entropy gradient with respect to the
/// penultimate activations under the model's own hard label. `p = 0.5`
/// counts as `y_hat = 1`.
pub fn badge_embedding(model: &MlpModel, x: &[f64]) -> Result<Vec<f64>> {
    check_row(model, x)?;
    let z = model.forward_row(x, None).logit;
    Ok(badge_from_logit(model, z))
}

fn badge_from_logit(model: &MlpModel, z: f64) -> Vec<f64> {
    let p = sigmoid(z);
    let y_hat = if p >= 0.5 { 1.0 } else { 0.0 };
    model
        .output_weights()
        .into_iter()
        .map(|w| (p - y_hat) * w)
        .collect()
}

pub fn badge_embeddings(model: &MlpModel, x: &Matrix) -> Result<Matrix> {
    let logits = model.forward_logits(x, ForwardMode::Deterministic)?;
    let mut out = Matrix::zeros(x.rows(), model.embedding_dim());
    for (r, z) in logits.into_iter().enumerate() {
        out.row_mut(r).copy_from_slice(&badge_from_logit(model, z));
    }
    Ok(out)
}

/// Expected gradient length: `sum_y p(y|x) * ||grad_theta BCE(f(x), y)||`.
///
/// Since `grad_theta BCE = (p - y) grad_theta z`, this reduces to
/// `2 p (1 - p) ||grad_theta z||`; the norm runs over every weight and bias.
pub fn egl_score(model: &MlpModel, x: &[f64]) -> Result<f64> {
    check_row(model, x)?;
    let trace = model.forward_row(x, None);
    let mut sq = 0.0;
    let layers = model.layers();
    model.backward(&trace, 1.0, |l, a, delta| {
        let delta_sq: f64 = delta.iter().map(|d| d * d).sum();
        let a_sq: f64 = a.iter().map(|v| v * v).sum();
        sq += a_sq * delta_sq;
        if layers[l].bias.is_some() {
            sq += delta_sq;
        }
    });
    let p = sigmoid(trace.logit);
    let grad_norm = sq.sqrt();
    let score = p * (1.0 - p) * grad_norm + (1.0 - p) * p * grad_norm;
    if !score.is_finite() {
        return Err(Error::Numeric(format!("non-finite EGL score ({score})")));
    }
    Ok(score)
}

pub fn egl_scores(model: &MlpModel, x: &Matrix) -> Result<Vec<f64>> {
    model.check_input(x)?;
    x.iter_rows().map(|row| egl_score(model, row)).collect()
}

/// `passes` stochastic forward passes per row; column `t` of the result is
/// pass `t`.
pub fn mc_dropout_probs_batch(
    model: &MlpModel,
    x: &Matrix,
    passes: usize,
    seed: u64,
) -> Result<Matrix> {
    if passes == 0 {
        return Err(Error::Config(
            "number of MC-dropout passes must be positive".into(),
        ));
    }
    let mut out = Matrix::zeros(x.rows(), passes);
    for t in 0..passes {
        let pass_seed = seed::derive(seed, "mc-pass", t as u64);
        let logits = model.forward_logits(x, ForwardMode::Dropout { seed: pass_seed })?;
        for (r, z) in logits.into_iter().enumerate() {
            out.set(r, t, sigmoid(z));
        }
    }
    Ok(out)
}

pub fn mc_dropout_probs(model: &MlpModel, x: &[f64], passes: usize, seed: u64) -> Result<Vec<f64>> {
    check_row(model, x)?;
    let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
    Ok(mc_dropout_probs_batch(model, &m, passes, seed)?
        .row(0)
        .to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{build_model, Layer, MlpConfig};

    fn linear(w: &[f64], b: Option<f64>) -> MlpModel {
        let weights = Matrix::from_vec(w.len(), 1, w.to_vec()).unwrap();
        let layer = match b {
            Some(b) => Layer::new(weights, vec![b]),
            None => Layer::without_bias(weights),
        };
        MlpModel::from_layers(vec![layer], 0.0).unwrap()
    }

    /// 2-2-1 network with hand-set weights.
    fn two_two_one() -> MlpModel {
        let w1 = Matrix::from_rows(&[[1.0, -0.5], [0.5, 2.0]]).unwrap();
        let w2 = Matrix::from_rows(&[[1.5], [-1.0]]).unwrap();
        MlpModel::from_layers(
            vec![Layer::new(w1, vec![0.1, 0.2]), Layer::new(w2, vec![0.3])],
            0.0,
        )
        .unwrap()
    }

    fn central_difference(model: &MlpModel, x: &[f64], j: usize, h: f64) -> f64 {
        let eval = |v: &[f64]| {
            let m = Matrix::from_vec(1, v.len(), v.to_vec()).unwrap();
            model
                .forward_logits(&m, ForwardMode::Deterministic)
                .unwrap()[0]
        };
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[j] += h;
        minus[j] -= h;
        (eval(&plus) - eval(&minus)) / (2.0 * h)
    }

    #[test]
    fn linear_model_gradient_is_its_weights() {
        let m = linear(&[1.0, 2.0], Some(0.5));
        let x = Matrix::from_rows(&[[3.0, 1.0], [-7.0, 0.25], [0.0, 0.0]]).unwrap();
        let interp = input_gradients(&m, &x).unwrap();
        for r in 0..3 {
            assert_eq!(interp.weights.row(r), &[1.0, 2.0]);
            assert_eq!(interp.offsets[r], 0.5);
        }
    }

    #[test]
    fn all_active_region_matches_composition_and_finite_differences() {
        let m = two_two_one();
        // pre-activations at (1, 1): 1.6 and 1.7, both active
        let x = [1.0, 1.0];
        let interp = input_gradients(&m, &Matrix::from_rows(&[x]).unwrap()).unwrap();
        // W1 . w2 with both units on
        let expected = [1.0 * 1.5 + -0.5 * -1.0, 0.5 * 1.5 + 2.0 * -1.0];
        assert_eq!(interp.weights.row(0), &expected);
        for j in 0..2 {
            let fd = central_difference(&m, &x, j, 1e-5);
            let rel = (fd - expected[j]).abs() / expected[j].abs();
            assert!(rel <= 1e-6, "feature {j}: fd {fd} vs {}", expected[j]);
        }
    }

    #[test]
    fn scaling_output_scales_gradients() {
        let m = build_model(&MlpConfig::new(3), 4).unwrap();
        let mut scaled = m.clone();
        scaled.scale_output(3.0);
        let x = Matrix::from_rows(&[[0.2, -1.0, 0.7], [1.1, 0.4, -0.3]]).unwrap();
        let a = input_gradients(&m, &x).unwrap();
        let b = input_gradients(&scaled, &x).unwrap();
        for (u, v) in a.weights.as_slice().iter().zip(b.weights.as_slice()) {
            assert_close!(3.0 * u, *v, 1e-12);
        }
    }

    #[test]
    fn offsets_reconstruct_logits() {
        let m = build_model(&MlpConfig::new(4), 21).unwrap();
        let x = Matrix::from_rows(&[[0.5, -0.2, 1.3, 0.0], [-2.0, 1.0, 0.1, 0.9]]).unwrap();
        let z = m.forward_logits(&x, ForwardMode::Deterministic).unwrap();
        let interp = input_gradients(&m, &x).unwrap();
        for r in 0..2 {
            assert_close!(interp.evaluate(r, x.row(r)), z[r], 1e-12);
        }
    }

    #[test]
    fn embedding_shape_and_dead_region() {
        let m = build_model(&MlpConfig::new(3), 2).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3]]).unwrap();
        assert_eq!(last_layer_embedding(&m, &x).unwrap().shape(), (1, 8));

        // first layer weights all +1 with zero bias: x = -1 everywhere kills every unit
        let w1 = Matrix::from_vec(2, 3, vec![1.0; 6]).unwrap();
        let w2 = Matrix::from_vec(3, 1, vec![0.4, -0.2, 0.9]).unwrap();
        let dead = MlpModel::from_layers(
            vec![Layer::new(w1, vec![0.0; 3]), Layer::new(w2, vec![0.25])],
            0.0,
        )
        .unwrap();
        let h = last_layer_embedding(&dead, &Matrix::from_rows(&[[-1.0, -1.0]]).unwrap()).unwrap();
        assert_eq!(h.row(0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn logit_is_output_layer_of_embedding() {
        let m = build_model(&MlpConfig::new(3), 8).unwrap();
        let x = Matrix::from_rows(&[[0.1, -0.2, 0.3], [1.0, 2.0, -1.0]]).unwrap();
        let h = last_layer_embedding(&m, &x).unwrap();
        let z = m.forward_logits(&x, ForwardMode::Deterministic).unwrap();
        let w = m.output_weights();
        let b = m.output_layer().bias.as_ref().unwrap()[0];
        for r in 0..2 {
            assert_close!(dot(&w, h.row(r)) + b, z[r], 1e-12);
        }
    }

    #[test]
    fn egl_single_weight_logistic() {
        // p = 0.5, |dBCE/dw| = 0.5 for either label
        let m = linear(&[0.0], None);
        assert_close!(egl_score(&m, &[1.0]).unwrap(), 0.5, 1e-15);
    }

    #[test]
    fn egl_zero_input_one_layer() {
        let m = linear(&[0.7, -1.2], None);
        assert_eq!(egl_score(&m, &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn egl_is_per_sample() {
        let m = build_model(&MlpConfig::new(2), 5).unwrap();
        let single = egl_scores(&m, &Matrix::from_rows(&[[0.3, 0.4]]).unwrap()).unwrap();
        let pool = Matrix::from_rows(&[[0.3, 0.4], [0.3, 0.4], [-1.0, 2.0]]).unwrap();
        let many = egl_scores(&m, &pool).unwrap();
        assert_eq!(single[0], many[0]);
        assert_eq!(many[0], many[1]);
    }

    #[test]
    fn badge_closed_form() {
        // single linear unit: w_out = (2, -1); choose x so the logit hits ln 9 (p = 0.9)
        let m = linear(&[2.0, -1.0], Some(0.0));
        let z = 9f64.ln();
        let g = badge_embedding(&m, &[z / 2.0, 0.0]).unwrap();
        assert_close!(g[0], -0.1 * 2.0, 1e-12);
        assert_close!(g[1], -0.1 * -1.0, 1e-12);

        let tie = badge_embedding(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(tie, vec![-1.0, 0.5]);

        let confident = badge_embedding(&m, &[20.0, 0.0]).unwrap();
        assert!(confident.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn mc_dropout_without_dropout_is_deterministic_p() {
        let m = build_model(&MlpConfig::new(2).with_drop_prob(0.0), 3).unwrap();
        let x = [0.4, -0.9];
        let p = m.predict_proba(&Matrix::from_rows(&[x]).unwrap()).unwrap()[0];
        let draws = mc_dropout_probs(&m, &x, 7, 1).unwrap();
        assert!(draws.iter().all(|&d| d == p));
    }

    #[test]
    fn mc_dropout_reproducible_and_spread() {
        // hidden layer: identity-like units on a positive input, so every
        // dropped unit changes the logit
        let w1 = Matrix::from_rows(&[[1.0, 0.5, 2.0, -0.3]]).unwrap();
        let w2 = Matrix::from_rows(&[[1.0], [2.0], [-1.0], [0.5]]).unwrap();
        let m = MlpModel::from_layers(
            vec![Layer::new(w1, vec![0.1; 4]), Layer::new(w2, vec![0.0])],
            0.5,
        )
        .unwrap();
        let a = mc_dropout_probs(&m, &[1.0], 20, 42).unwrap();
        assert_eq!(a, mc_dropout_probs(&m, &[1.0], 20, 42).unwrap());
        let mean = a.iter().sum::<f64>() / 20.0;
        let var = a.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / 19.0;
        assert!(var > 0.0);
        assert!(matches!(
            mc_dropout_probs(&m, &[1.0], 0, 42),
            Err(Error::Config(_))
        ));
    }
}
