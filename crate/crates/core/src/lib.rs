//! Pool-based active learning on tabular data.
//!
//! The crate bundles a small from-scratch ReLU multilayer perceptron, six
//! query strategies (random, expected gradient length, MC-dropout BALD,
//! CORESET, BADGE and interpretation-driven K-Center selection), and the
//! experiment loop that trains, selects, labels and retrains until a label
//! budget is spent.
//!
//! Interpretation-driven selection rests on one fact about ReLU networks:
//! the logit is piecewise linear in the input, so the input gradient of the
//! logit is the weight vector of the local linear classifier that governs a
//! sample's activation region. Running farthest-first K-Center on those
//! weight vectors spreads the label budget across linear regions.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}

pub mod data;
pub mod error;
pub mod experiment;
pub mod fsutil;
pub mod matrix;
pub mod mlp;
pub mod seed;
pub mod strategies;

pub use error::{Error, Result};
pub use matrix::Matrix;
