//! Cluster-purity comparison of sample representations on Sigmoid data.
//!
//! The Sigmoid square splits along its diagonals into four triangles, each
//! linearly separable on its own. A ReLU network fitted to the labels places
//! one linear piece on each, so clustering input gradients recovers the
//! triangles, while penultimate activations group by class (i.e. quadrant)
//! and BADGE embeddings by distance to the decision boundary.

use std::fmt;

use super::run::{fit_round, prepare, ExperimentConfig};
use crate::data::{make_sigmoid_dataset, triangle_of, zscore_fit_transform};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mlp::{self, MlpModel};
use crate::seed;
use crate::strategies::k_means_restarts;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// Input gradients of the logit.
    InputGradient,
    /// Penultimate activations (CORESET).
    LastLayerEmbedding,
    /// Last-layer loss gradients under the predicted label (BADGE).
    BadgeEmbedding,
}

impl Representation {
    pub const ALL: [Representation; 3] = [
        Representation::InputGradient,
        Representation::LastLayerEmbedding,
        Representation::BadgeEmbedding,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Representation::InputGradient => "gradient",
            Representation::LastLayerEmbedding => "embedding",
            Representation::BadgeEmbedding => "badge",
        }
    }

    fn compute(&self, model: &MlpModel, x: &Matrix) -> Result<Matrix> {
        match self {
            Representation::InputGradient => Ok(mlp::input_gradients(model, x)?.weights),
            Representation::LastLayerEmbedding => mlp::last_layer_embedding(model, x),
            Representation::BadgeEmbedding => mlp::badge_embeddings(model, x),
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct ToyDemoConfig {
    pub n: usize,
    pub seeds: Vec<u64>,
    pub clusters: usize,
    /// k-means restarts per representation; the lowest-cost run is scored.
    pub restarts: usize,
    /// Network and optimiser settings; the schedule fields are unused.
    /// Dropout is off by default: heavy dropout blurs the linear pieces the
    /// demo is meant to expose.
    pub experiment: ExperimentConfig,
}

impl Default for ToyDemoConfig {
    fn default() -> Self {
        ToyDemoConfig {
            n: 2000,
            seeds: (0..5).collect(),
            clusters: 4,
            restarts: 10,
            experiment: ExperimentConfig {
                drop_prob: 0.0,
                ..ExperimentConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurityRow {
    pub representation: Representation,
    /// Purity against the diagonal triangles, one value per seed.
    pub per_seed: Vec<f64>,
    /// Lower median over seeds.
    pub median: f64,
    /// Same, scored against sign quadrants instead.
    pub quadrant_per_seed: Vec<f64>,
    pub quadrant_median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurityReport {
    pub rows: Vec<PurityRow>,
}

impl PurityReport {
    pub fn median(&self, rep: Representation) -> f64 {
        self.rows
            .iter()
            .find(|r| r.representation == rep)
            .map_or(f64::NAN, |r| r.median)
    }

    /// True when input gradients cluster strictly purer than penultimate embeddings.
    pub fn gradient_beats_embedding(&self) -> bool {
        self.median(Representation::InputGradient) > self.median(Representation::LastLayerEmbedding)
    }
}

/// Fraction of points whose cluster's majority ground-truth class matches their own.
pub fn purity(assignments: &[usize], truth: &[u8]) -> f64 {
    use std::collections::BTreeMap;
    let mut counts: BTreeMap<usize, BTreeMap<u8, usize>> = BTreeMap::new();
    for (&a, &t) in assignments.iter().zip(truth) {
        *counts.entry(a).or_default().entry(t).or_default() += 1;
    }
    let majority: usize = counts
        .values()
        .map(|c| c.values().copied().max().unwrap_or(0))
        .sum();
    majority as f64 / assignments.len() as f64
}

fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Per seed: generate `n` Sigmoid samples, train a network on the labelled
/// training split, then k-means every representation of all `n` samples and
/// score the clusters against the triangles (and, for reference, quadrants).
pub fn toy_region_demo(cfg: &ToyDemoConfig) -> Result<PurityReport> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("toy demo needs at least one seed".into()));
    }
    if cfg.clusters == 0 || cfg.clusters > cfg.n {
        return Err(Error::Config(format!(
            "cannot form {} clusters from {} samples",
            cfg.clusters, cfg.n
        )));
    }
    let mut per_rep: Vec<(Vec<f64>, Vec<f64>)> =
        vec![Default::default(); Representation::ALL.len()];
    for &s in &cfg.seeds {
        let ds = make_sigmoid_dataset(cfg.n, seed::derive(s, "toy-data", 0))?;
        let quadrants = ds.quadrants.clone().expect("generator records quadrants");
        let triangles: Vec<u8> = ds
            .features
            .iter_rows()
            .map(|x| triangle_of(x[0], x[1]))
            .collect();
        let data = prepare(&ds, &cfg.experiment, s)?;
        let all_rows: Vec<usize> = (0..data.train.len()).collect();
        let (model, _) = fit_round(&cfg.experiment, &data, &all_rows, s, 0)?;

        // the prepared split is standardised with training statistics; refit on
        // the whole set so every sample is represented
        let (full, _) = zscore_fit_transform(&ds)?;
        for (slot, rep) in per_rep.iter_mut().zip(Representation::ALL) {
            let x = rep.compute(&model, &full.features)?;
            let km = k_means_restarts(
                &x,
                cfg.clusters,
                seed::derive(s, "toy-kmeans", 0),
                100,
                cfg.restarts,
            )?;
            slot.0.push(purity(&km.assignments, &triangles));
            slot.1.push(purity(&km.assignments, &quadrants));
        }
    }
    let rows = Representation::ALL
        .into_iter()
        .zip(per_rep)
        .map(
            |(representation, (per_seed, quadrant_per_seed))| PurityRow {
                representation,
                median: lower_median(&per_seed),
                per_seed,
                quadrant_median: lower_median(&quadrant_per_seed),
                quadrant_per_seed,
            },
        )
        .collect();
    Ok(PurityReport { rows })
}
