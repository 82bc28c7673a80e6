//! Tabular datasets, preprocessing and pool bookkeeping.

mod csv_io;
mod pool;
mod sigmoid;

pub use csv_io::{load_csv, write_csv, CsvOptions, LabelColumn};
pub use pool::{init_pool, initial_label_count, PoolState};
pub use sigmoid::{make_sigmoid_dataset, quadrant_of, sigmoid_label_probability, triangle_of};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Binary-labelled tabular samples.
///
/// Every row carries its label: in a pool-based simulation the labels of
/// unlabelled rows act as the oracle and are only revealed through
/// [`PoolState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    /// Ground-truth quadrant id (0..4) for generated Sigmoid data.
    pub quadrants: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        labels: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            features,
            labels,
            feature_names,
            quadrants: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.cols() == 0 {
            return Err(Error::Data("dataset needs at least one feature".into()));
        }
        if self.labels.len() != self.features.rows() {
            return Err(Error::Dimension {
                expected: self.features.rows(),
                got: self.labels.len(),
            });
        }
        if self.feature_names.len() != self.features.cols() {
            return Err(Error::Dimension {
                expected: self.features.cols(),
                got: self.feature_names.len(),
            });
        }
        if let Some(q) = &self.quadrants {
            if q.len() != self.labels.len() {
                return Err(Error::Dimension {
                    expected: self.labels.len(),
                    got: q.len(),
                });
            }
        }
        if let Some(bad) = self.labels.iter().find(|&&y| y > 1) {
            return Err(Error::Data(format!("label {bad} is not binary")));
        }
        if !self.features.is_finite() {
            return Err(Error::Data("features contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature width `M`.
    pub fn width(&self) -> usize {
        self.features.cols()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.positives();
        pos > 0 && pos < self.len()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            quadrants: self
                .quadrants
                .as_ref()
                .map(|q| indices.iter().map(|&i| q[i]).collect()),
        }
    }
}

/// Per-feature training statistics for z-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreStats {
    pub means: Vec<f64>,
    /// Population standard deviations; zero marks a constant feature.
    pub stds: Vec<f64>,
}

pub fn zscore_fit_transform(train: &Dataset) -> Result<(Dataset, ZScoreStats)> {
    if train.is_empty() {
        return Err(Error::Data(
            "cannot fit z-score statistics on an empty dataset".into(),
        ));
    }
    let n = train.len() as f64;
    let (means, stds) = (0..train.width())
        .map(|c| {
            let col = train.features.column(c);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .unzip();
    let stats = ZScoreStats { means, stds };
    let out = zscore_apply(&stats, train)?;
    Ok((out, stats))
}

pub fn zscore_apply(stats: &ZScoreStats, other: &Dataset) -> Result<Dataset> {
    if stats.means.len() != other.width() {
        return Err(Error::Dimension {
            expected: stats.means.len(),
            got: other.width(),
        });
    }
    let mut out = other.clone();
    for r in 0..out.len() {
        for ((v, mean), std) in out
            .features
            .row_mut(r)
            .iter_mut()
            .zip(&stats.means)
            .zip(&stats.stds)
        {
            *v = if *std > 0.0 { (*v - mean) / std } else { 0.0 };
        }
    }
    Ok(out)
}

/// Train/validation/test partition plus the original row index of every member.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub train_rows: Vec<usize>,
    pub val_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.6, 0.2, 0.2];

/// `(train, val, test)` sizes: validation and test take `floor(ratio * n)`,
/// the remainder goes to training.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<(usize, usize, usize)> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Config(format!(
            "split ratios must be non-negative, got {ratios:?}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must sum to 1, got {total}"
        )));
    }
    let floor = |r: f64| (r * n as f64 + 1e-9).floor() as usize;
    let val = floor(ratios[1]);
    let test = floor(ratios[2]);
    Ok((n - val - test, val, test))
}

/// Random partition of `ds` by a seeded permutation.
pub fn split(ds: &Dataset, ratios: [f64; 3], seed: u64) -> Result<Split> {
    let (n_train, n_val, _) = split_sizes(ds.len(), ratios)?;
    let mut perm: Vec<usize> = (0..ds.len()).collect();
    perm.shuffle(&mut seed::rng(seed));
    let test_rows = perm.split_off(n_train + n_val);
    let val_rows = perm.split_off(n_train);
    let train_rows = perm;
    Ok(Split {
        train: ds.subset(&train_rows),
        val: ds.subset(&val_rows),
        test: ds.subset(&test_rows),
        train_rows,
        val_rows,
        test_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_dataset(values: &[f64]) -> Dataset {
        let m = Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap();
        Dataset::new("t", m, vec![0; values.len()], vec!["a".into()]).unwrap()
    }

    fn indexed(n: usize) -> Dataset {
        let m = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::new("idx", m, vec![0; n], vec!["i".into()]).unwrap()
    }

    #[test]
    fn zscore_closed_form() {
        let (z, stats) = zscore_fit_transform(&column_dataset(&[1.0, 2.0, 3.0])).unwrap();
        let expected = 1.224_744_871_391_589;
        assert_close!(z.features.get(0, 0), -expected, 1e-12);
        assert_eq!(z.features.get(1, 0), 0.0);
        assert_close!(z.features.get(2, 0), expected, 1e-12);
        assert_eq!(stats.means, vec![2.0]);
    }

    #[test]
    fn zscore_constant_column_maps_to_zero() {
        let (z, _) = zscore_fit_transform(&column_dataset(&[4.0, 4.0, 4.0])).unwrap();
        assert!(z.features.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zscore_apply_leaves_stats_untouched() {
        let (_, stats) = zscore_fit_transform(&column_dataset(&[1.0, 2.0, 3.0])).unwrap();
        let before = stats.clone();
        let test = zscore_apply(&stats, &column_dataset(&[10.0, -4.0])).unwrap();
        assert_eq!(stats, before);
        assert_close!(test.features.get(0, 0), 8.0 / (2.0f64 / 3.0).sqrt(), 1e-12);
        assert!(zscore_fit_transform(&column_dataset(&[])).is_err());
    }

    #[test]
    fn split_sizes_small() {
        assert_eq!(split_sizes(10, DEFAULT_SPLIT).unwrap(), (6, 2, 2));
    }

    #[test]
    fn split_sizes_employee_shape() {
        // floor(0.2 * 32769) = 6553 twice; the remaining 19663 rows train
        assert_eq!(
            split_sizes(32769, DEFAULT_SPLIT).unwrap(),
            (19663, 6553, 6553)
        );
    }

    #[test]
    fn split_rejects_bad_ratios() {
        assert!(matches!(
            split_sizes(10, [0.6, 0.2, 0.3]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let ds = indexed(100);
        let a = split(&ds, DEFAULT_SPLIT, 3).unwrap();
        let b = split(&ds, DEFAULT_SPLIT, 3).unwrap();
        let c = split(&ds, DEFAULT_SPLIT, 4).unwrap();
        assert_eq!(a.train_rows, b.train_rows);
        assert_eq!(a.test_rows, b.test_rows);
        assert_ne!(a.train_rows, c.train_rows);

        let mut all: Vec<usize> = a
            .train_rows
            .iter()
            .chain(&a.val_rows)
            .chain(&a.test_rows)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(a.train.features.get(0, 0), a.train_rows[0] as f64);
    }
}
