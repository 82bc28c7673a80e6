use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::auc;
use crate::data::{self, init_pool, initial_label_count, Dataset, PoolState};
use crate::error::{Error, Result};
use crate::mlp::{self, MlpConfig, MlpModel, TrainConfig, TrainReport};
use crate::seed;
use crate::strategies::{self, SelectionResult, StrategyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Free-form dataset reference, recorded in exported metadata.
    pub dataset: String,
    pub strategies: Vec<StrategyKind>,
    pub init_fraction: f64,
    pub round_fraction: f64,
    pub stop_fraction: f64,
    pub n_runs: usize,
    pub base_seed: u64,
    pub split_ratios: [f64; 3],
    pub hidden_dims: Vec<usize>,
    pub drop_prob: f64,
    /// `seed` is ignored; every round derives its own.
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: String::new(),
            strategies: StrategyKind::all().to_vec(),
            init_fraction: 0.02,
            round_fraction: 0.02,
            stop_fraction: 0.5,
            n_runs: 10,
            base_seed: 0,
            split_ratios: data::DEFAULT_SPLIT,
            hidden_dims: MlpConfig::DEFAULT_HIDDEN.to_vec(),
            drop_prob: MlpConfig::DEFAULT_DROP_PROB,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        frac("init_fraction", self.init_fraction)?;
        frac("round_fraction", self.round_fraction)?;
        frac("stop_fraction", self.stop_fraction)?;
        if self.stop_fraction < self.init_fraction {
            return Err(Error::Config(format!(
                "stop_fraction ({}) is below init_fraction ({})",
                self.stop_fraction, self.init_fraction
            )));
        }
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies selected".into()));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        self.train.validate()?;
        self.mlp_config(1).validate()
    }

    pub fn mlp_config(&self, input_dim: usize) -> MlpConfig {
        MlpConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            drop_prob: self.drop_prob,
        }
    }

    /// First 16 hex digits of the SHA-256 of the JSON-serialised config.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn schedule(&self, train_size: usize) -> Schedule {
        Schedule {
            train_size,
            initial: initial_label_count(train_size, self.init_fraction),
            per_round: initial_label_count(train_size, self.round_fraction).max(1),
            target: initial_label_count(train_size, self.stop_fraction),
        }
    }
}

/// Label budget in samples: `initial = ceil(init * n)`, `per_round =
/// ceil(round * n)`, stop once `target = ceil(stop * n)` rows are labelled
/// (the last round is clamped to hit it exactly).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub train_size: usize,
    pub initial: usize,
    pub per_round: usize,
    pub target: usize,
}

impl Schedule {
    pub fn rounds(&self) -> usize {
        self.target
            .saturating_sub(self.initial)
            .div_ceil(self.per_round)
    }

    /// Batch size for the next round given the current labelled count.
    pub fn budget(&self, labeled: usize) -> usize {
        self.per_round.min(self.target.saturating_sub(labeled))
    }
}

/// Train/validation/test splits, z-scored with training statistics.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Splits `ds` with a run-specific permutation and standardises features.
pub fn prepare(ds: &Dataset, cfg: &ExperimentConfig, run_seed: u64) -> Result<PreparedData> {
    let s = data::split(ds, cfg.split_ratios, seed::derive(run_seed, "split", 0))?;
    let (train, stats) = data::zscore_fit_transform(&s.train)?;
    let val = data::zscore_apply(&stats, &s.val)?;
    let test = data::zscore_apply(&stats, &s.test)?;
    if val.is_empty() || test.is_empty() {
        return Err(Error::Data(format!(
            "dataset of {} rows is too small to split",
            ds.len()
        )));
    }
    Ok(PreparedData { train, val, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub labeled_fraction: f64,
    pub test_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveMetadata {
    pub config_hash: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub strategy: String,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
    pub metadata: CurveMetadata,
}

impl LearningCurve {
    pub fn final_auc(&self) -> Option<f64> {
        self.points.last().map(|p| p.test_auc)
    }
}

/// Trains the model for `round` from scratch on the labelled rows. The
/// result depends only on the labelled set, the config and `(run_seed, round)`.
pub fn fit_round(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    labeled: &[usize],
    run_seed: u64,
    round: usize,
) -> Result<(MlpModel, TrainReport)> {
    let init = mlp::build_model(
        &cfg.mlp_config(data.train.width()),
        seed::derive(run_seed, "init", round as u64),
    )?;
    let tc = TrainConfig {
        seed: seed::derive(run_seed, "train", round as u64),
        ..cfg.train.clone()
    };
    mlp::train(&init, &data.train.subset(labeled), &data.val, &tc)
}

fn test_auc(model: &MlpModel, test: &Dataset) -> Result<f64> {
    let p = model.predict_proba(&test.features)?;
    auc(&p, &test.labels)
}

pub fn run_active_learning(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    strategy: StrategyKind,
    run_seed: u64,
) -> Result<LearningCurve> {
    run_active_learning_observed(cfg, data, strategy, run_seed, &mut |_, _, _| Ok(()))
}

/// The train / select / label / retrain loop. `observer` sees every
/// selection together with the pool state it was made from.
pub fn run_active_learning_observed(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    strategy: StrategyKind,
    run_seed: u64,
    observer: &mut dyn FnMut(usize, &PoolState, &SelectionResult) -> Result<()>,
) -> Result<LearningCurve> {
    cfg.validate()?;
    strategy.validate()?;
    let n = data.train.len();
    let schedule = cfg.schedule(n);
    let mut pool = init_pool(n, cfg.init_fraction, seed::derive(run_seed, "pool", 0))?;
    let mut warnings = Vec::new();
    let mut points = Vec::with_capacity(schedule.rounds() + 1);

    let record = |round: usize,
                  pool: &PoolState,
                  warnings: &mut Vec<String>|
     -> Result<(MlpModel, CurvePoint)> {
        let (model, report) = fit_round(cfg, data, &pool.labeled_vec(), run_seed, round)?;
        warnings.extend(
            report
                .warnings
                .into_iter()
                .map(|w| format!("round {round}: {w}")),
        );
        let point = CurvePoint {
            labeled_fraction: pool.labeled().len() as f64 / n as f64,
            test_auc: test_auc(&model, &data.test)?,
        };
        Ok((model, point))
    };

    let (mut model, point) = record(0, &pool, &mut warnings)?;
    points.push(point);

    let mut round = 0;
    loop {
        let k = schedule.budget(pool.labeled().len());
        if k == 0 || pool.unlabeled().is_empty() {
            break;
        }
        round += 1;
        let sel = strategies::select(
            strategy,
            &model,
            &pool,
            &data.train.features,
            k,
            seed::derive(run_seed, "select", round as u64),
        )?;
        warnings.extend(sel.warnings.iter().map(|w| format!("round {round}: {w}")));
        observer(round, &pool, &sel)?;
        pool.commit_labels(&sel.chosen)?;
        pool.check_invariants()?;

        let (next, point) = record(round, &pool, &mut warnings)?;
        model = next;
        points.push(point);
    }

    Ok(LearningCurve {
        strategy: strategy.name().to_string(),
        seed: run_seed,
        points,
        metadata: CurveMetadata {
            config_hash: cfg.config_hash(),
            warnings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_has_24_rounds() {
        let cfg = ExperimentConfig::default();
        for n in [1200, 1234, 5000, 11412, 19663] {
            let s = cfg.schedule(n);
            assert_eq!(s.rounds(), 24, "n = {n}: {s:?}");
        }
    }

    #[test]
    fn degenerate_schedule() {
        let cfg = ExperimentConfig {
            stop_fraction: 0.02,
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.schedule(1200).rounds(), 0);
    }

    #[test]
    fn last_round_is_clamped() {
        let s = Schedule {
            train_size: 100,
            initial: 3,
            per_round: 4,
            target: 13,
        };
        assert_eq!(s.rounds(), 3);
        assert_eq!(s.budget(11), 2);
        assert_eq!(s.budget(13), 0);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = ExperimentConfig {
            stop_fraction: 0.01,
            ..ExperimentConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = ExperimentConfig {
            n_runs: 0,
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn hash_tracks_config() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            base_seed: 1,
            ..a.clone()
        };
        assert_eq!(a.config_hash(), a.clone().config_hash());
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }
}
