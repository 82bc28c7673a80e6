//! Query strategies and the clustering primitives behind them.

mod kcenter;
mod kmeans;

pub use kcenter::{covering_radius, k_center_greedy};
pub use kmeans::{k_means, k_means_pp_select, k_means_restarts, KMeansResult, PlusPlusSelection};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::PoolState;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::matrix::Matrix;
use crate::mlp::{self, MlpModel};
use crate::seed;

pub const DEFAULT_BALD_PASSES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Uniform random sampling.
    Rnd,
    /// Expected gradient length over all parameters.
    Egl,
    /// MC-dropout mutual information with `passes` stochastic forward passes.
    Bald { passes: usize },
    /// K-Center over penultimate activations.
    Coreset,
    /// k-means++ draw over last-layer loss gradients.
    Badge,
    /// K-Center over input gradients of the logit.
    Dami,
}

impl StrategyKind {
    pub const NAMES: [&'static str; 6] = ["rnd", "egl", "bald", "coreset", "badge", "dami"];

    pub fn all() -> [StrategyKind; 6] {
        [
            StrategyKind::Rnd,
            StrategyKind::Egl,
            StrategyKind::Bald {
                passes: DEFAULT_BALD_PASSES,
            },
            StrategyKind::Coreset,
            StrategyKind::Badge,
            StrategyKind::Dami,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Rnd => "rnd",
            StrategyKind::Egl => "egl",
            StrategyKind::Bald { .. } => "bald",
            StrategyKind::Coreset => "coreset",
            StrategyKind::Badge => "badge",
            StrategyKind::Dami => "dami",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StrategyKind::Bald { passes: 0 } => {
                Err(Error::Config("BALD needs at least one forward pass".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        StrategyKind::all()
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy `{s}`; expected one of {}",
                    StrategyKind::NAMES.join(", ")
                ))
            })
    }
}

/// Per-sample payload behind a selection, aligned with `rows`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub rows: Vec<usize>,
    pub scores: Option<Vec<f64>>,
    pub representations: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub strategy: StrategyKind,
    /// Distinct unlabelled rows in pick order.
    pub chosen: Vec<usize>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

/// Binary entropy in nats.
fn entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// `H(mean_t p_t) - mean_t H(p_t)`, clamped to `[0, ln 2]`. Exactly zero
/// when every draw agrees.
pub fn bald_score(probs: &[f64]) -> f64 {
    let (lo, hi) = probs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
            (lo.min(p), hi.max(p))
        });
    if probs.is_empty() || lo == hi {
        return 0.0;
    }
    let t = probs.len() as f64;
    let mean = probs.iter().sum::<f64>() / t;
    let expected = probs.iter().map(|&p| entropy(p)).sum::<f64>() / t;
    (entropy(mean) - expected).clamp(0.0, std::f64::consts::LN_2)
}

/// Indices of the `k` largest scores; ties go to the lower row.
fn top_k(rows: &[usize], scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite strategy score {bad}")));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(rows[a].cmp(&rows[b])));
    Ok(order.into_iter().take(k).map(|i| rows[i]).collect())
}

/// Chooses up to `k` rows of `U` for labelling.
///
/// `features` holds every row of the training pool; `pool` says which rows
/// are labelled. The result depends only on the arguments.
pub fn select(
    kind: StrategyKind,
    model: &MlpModel,
    pool: &PoolState,
    features: &Matrix,
    k: usize,
    seed: u64,
) -> Result<SelectionResult> {
    kind.validate()?;
    if features.rows() != pool.size() {
        return Err(Error::Dimension {
            expected: pool.size(),
            got: features.rows(),
        });
    }
    let unlabeled = pool.unlabeled_vec();
    if unlabeled.is_empty() {
        return Err(Error::Selection("unlabelled pool is empty".into()));
    }
    if k == 0 {
        return Err(Error::Selection("k must be at least 1".into()));
    }
    let mut warnings = Vec::new();
    let k = if k > unlabeled.len() {
        warnings.push(format!(
            "requested {k} samples but only {} are unlabelled; clamping",
            unlabeled.len()
        ));
        unlabeled.len()
    } else {
        k
    };
    let labeled = pool.labeled_vec();
    let u_features = features.select_rows(&unlabeled);

    let (chosen, diagnostics) = match kind {
        StrategyKind::Rnd => {
            let picks = index::sample(&mut seed::rng(seed), unlabeled.len(), k);
            let chosen = picks.iter().map(|i| unlabeled[i]).collect();
            (chosen, Diagnostics::default())
        }
        StrategyKind::Egl => {
            let scores = mlp::egl_scores(model, &u_features)?;
            let chosen = top_k(&unlabeled, &scores, k)?;
            (chosen, scored(unlabeled, scores))
        }
        StrategyKind::Bald { passes } => {
            let draws = mlp::mc_dropout_probs_batch(model, &u_features, passes, seed)?;
            let scores: Vec<f64> = draws.iter_rows().map(bald_score).collect();
            let chosen = top_k(&unlabeled, &scores, k)?;
            (chosen, scored(unlabeled, scores))
        }
        StrategyKind::Coreset => {
            let reps = mlp::last_layer_embedding(model, features)?;
            k_center_selection(&reps, &labeled, unlabeled, k)?
        }
        StrategyKind::Dami => {
            let reps = mlp::input_gradients(model, features)?.weights;
            k_center_selection(&reps, &labeled, unlabeled, k)?
        }
        StrategyKind::Badge => {
            let reps = mlp::badge_embeddings(model, &u_features)?;
            let draw = k_means_pp_select(&reps, k, seed)?;
            if draw.uniform_fallback {
                warnings
                    .push("BADGE embeddings collapsed to zero; fell back to uniform draws".into());
            }
            let chosen = draw.chosen.iter().map(|&i| unlabeled[i]).collect();
            (
                chosen,
                Diagnostics {
                    rows: unlabeled,
                    scores: None,
                    representations: Some(reps),
                },
            )
        }
    };

    Ok(SelectionResult {
        strategy: kind,
        chosen,
        diagnostics,
        warnings,
    })
}

fn scored(rows: Vec<usize>, scores: Vec<f64>) -> Diagnostics {
    Diagnostics {
        rows,
        scores: Some(scores),
        representations: None,
    }
}

fn k_center_selection(
    reps: &Matrix,
    labeled: &[usize],
    unlabeled: Vec<usize>,
    k: usize,
) -> Result<(Vec<usize>, Diagnostics)> {
    let chosen = k_center_greedy(reps, labeled, &unlabeled, k)?;
    let diagnostics = Diagnostics {
        representations: Some(reps.select_rows(&unlabeled)),
        rows: unlabeled,
        scores: None,
    };
    Ok((chosen, diagnostics))
}

/// Writes one row per diagnosed sample: `row,chosen[,score][,rep_0,...]`.
pub fn write_diagnostics_csv(result: &SelectionResult, path: &Path) -> Result<()> {
    let d = &result.diagnostics;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string(), "chosen".to_string()];
    if d.scores.is_some() {
        header.push("score".into());
    }
    if let Some(reps) = &d.representations {
        header.extend((0..reps.cols()).map(|c| format!("rep_{c}")));
    }
    w.write_record(&header)?;
    for (i, &row) in d.rows.iter().enumerate() {
        let mut rec = vec![
            row.to_string(),
            u8::from(result.chosen.contains(&row)).to_string(),
        ];
        if let Some(s) = &d.scores {
            rec.push(format!("{:.16e}", s[i]));
        }
        if let Some(reps) = &d.representations {
            rec.extend(reps.row(i).iter().map(|v| format!("{v:.16e}")));
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    write_atomic(path, &bytes)
}
