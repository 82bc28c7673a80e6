//! Synthetic two-feature data with `P(y = 1 | x) = sigmoid(x1 * x2)`.
//!
//! The label flips across both axes. Cutting the square along its diagonals
//! gives four triangles; inside each one the classes are split by a single
//! axis line, so each triangle is linearly separable on its own.

use rand::Rng as _;

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mlp::sigmoid;
use crate::seed;

pub fn sigmoid_label_probability(x1: f64, x2: f64) -> f64 {
    sigmoid(x1 * x2)
}

/// Quadrant id: 0 = (+,+), 1 = (-,+), 2 = (-,-), 3 = (+,-). Zero counts as positive.
pub fn quadrant_of(x1: f64, x2: f64) -> u8 {
    match (x1 >= 0.0, x2 >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

/// Triangle id of the diagonal partition: 0 = right (|x1| > |x2|, x1 > 0),
/// 1 = top, 2 = left, 3 = bottom. Points on a diagonal go to the side triangle.
pub fn triangle_of(x1: f64, x2: f64) -> u8 {
    if x1.abs() >= x2.abs() {
        if x1 >= 0.0 {
            0
        } else {
            2
        }
    } else if x2 >= 0.0 {
        1
    } else {
        3
    }
}

/// `n` samples with features uniform on `[-5, 5]^2` and Bernoulli labels.
pub fn make_sigmoid_dataset(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("sigmoid dataset needs n >= 1".into()));
    }
    let mut rng = seed::rng(seed);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut quadrants = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.random_range(-5.0..=5.0);
        let x2: f64 = rng.random_range(-5.0..=5.0);
        let u: f64 = rng.random();
        labels.push(u8::from(u < sigmoid_label_probability(x1, x2)));
        quadrants.push(quadrant_of(x1, x2));
        data.extend([x1, x2]);
    }
    let mut ds = Dataset::new(
        "sigmoid",
        Matrix::from_vec(n, 2, data)?,
        labels,
        vec!["x1".into(), "x2".into()],
    )?;
    ds.quadrants = Some(quadrants);
    Ok(ds)
}
