use rayon::prelude::*;

use super::run::{
    prepare, run_active_learning, CurveMetadata, CurvePoint, ExperimentConfig, LearningCurve,
};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyCurves {
    pub strategy: String,
    pub median: LearningCurve,
    /// One curve per run, in run order.
    pub raw: Vec<LearningCurve>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub strategies: Vec<StrategyCurves>,
}

impl ReplicateResult {
    pub fn raw_curves(&self) -> impl Iterator<Item = &LearningCurve> {
        self.strategies.iter().flat_map(|s| &s.raw)
    }

    pub fn median_curves(&self) -> impl Iterator<Item = &LearningCurve> {
        self.strategies.iter().map(|s| &s.median)
    }
}

/// Pointwise lower median across curves that share their labelled fractions.
/// The median curve carries the seed of the first input curve.
pub fn median_curve(curves: &[LearningCurve]) -> Result<LearningCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Config("median of zero curves".into()))?;
    for c in curves {
        let same = c.points.len() == first.points.len()
            && c.points
                .iter()
                .zip(&first.points)
                .all(|(a, b)| a.labeled_fraction == b.labeled_fraction);
        if !same || c.strategy != first.strategy {
            return Err(Error::Data(
                "curves disagree on strategy or labelled fractions".into(),
            ));
        }
    }
    let points = (0..first.points.len())
        .map(|i| {
            let mut aucs: Vec<f64> = curves.iter().map(|c| c.points[i].test_auc).collect();
            aucs.sort_by(f64::total_cmp);
            CurvePoint {
                labeled_fraction: first.points[i].labeled_fraction,
                test_auc: aucs[(aucs.len() - 1) / 2],
            }
        })
        .collect();
    let mut warnings: Vec<String> = curves
        .iter()
        .flat_map(|c| {
            c.metadata
                .warnings
                .iter()
                .map(move |w| format!("seed {}: {w}", c.seed))
        })
        .collect();
    warnings.dedup();
    Ok(LearningCurve {
        strategy: first.strategy.clone(),
        seed: first.seed,
        points,
        metadata: CurveMetadata {
            config_hash: first.metadata.config_hash.clone(),
            warnings,
        },
    })
}

/// Runs every strategy `n_runs` times with seeds `base_seed + run` and
/// aggregates pointwise medians. Runs are spread over `jobs` worker threads;
/// every run's seed is fixed up front so the output does not depend on `jobs`.
pub fn replicate(cfg: &ExperimentConfig, ds: &Dataset, jobs: usize) -> Result<ReplicateResult> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.n_runs as u64)
        .map(|r| cfg.base_seed.wrapping_add(r))
        .collect();
    let prepared = seeds
        .iter()
        .map(|&s| prepare(ds, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.strategies.len())
        .flat_map(|s| (0..seeds.len()).map(move |r| (s, r)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let curves: Vec<LearningCurve> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, r)| run_active_learning(cfg, &prepared[r], cfg.strategies[s], seeds[r]))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut strategies = Vec::with_capacity(cfg.strategies.len());
    for (s, chunk) in curves.chunks(seeds.len()).enumerate() {
        strategies.push(StrategyCurves {
            strategy: cfg.strategies[s].name().to_string(),
            median: median_curve(chunk)?,
            raw: chunk.to_vec(),
        });
    }
    Ok(ReplicateResult { strategies })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(seed: u64, aucs: &[f64]) -> LearningCurve {
        LearningCurve {
            strategy: "rnd".into(),
            seed,
            points: aucs
                .iter()
                .enumerate()
                .map(|(i, &a)| CurvePoint {
                    labeled_fraction: 0.02 * (i + 1) as f64,
                    test_auc: a,
                })
                .collect(),
            metadata: CurveMetadata::default(),
        }
    }

    #[test]
    fn single_curve_is_its_own_median() {
        let c = curve(3, &[0.6, 0.7]);
        assert_eq!(
            median_curve(std::slice::from_ref(&c)).unwrap().points,
            c.points
        );
    }

    #[test]
    fn odd_and_even_medians() {
        let m = median_curve(&[curve(0, &[0.6]), curve(1, &[0.8]), curve(2, &[0.7])]).unwrap();
        assert_eq!(m.points[0].test_auc, 0.7);
        let lower = median_curve(&[curve(0, &[0.9]), curve(1, &[0.6])]).unwrap();
        assert_eq!(lower.points[0].test_auc, 0.6);
    }

    #[test]
    fn median_ignores_run_order() {
        let a = [
            curve(0, &[0.6, 0.9]),
            curve(1, &[0.8, 0.5]),
            curve(2, &[0.7, 0.7]),
        ];
        let b = [a[2].clone(), a[0].clone(), a[1].clone()];
        assert_eq!(
            median_curve(&a).unwrap().points,
            median_curve(&b).unwrap().points
        );
    }

    #[test]
    fn mismatched_curves_are_rejected() {
        assert!(median_curve(&[curve(0, &[0.6]), curve(1, &[0.6, 0.7])]).is_err());
        assert!(median_curve(&[]).is_err());
    }
}
