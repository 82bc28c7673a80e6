use rand::Rng as _;

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, squared_norm, Matrix};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub iterations: usize,
}

impl KMeansResult {
    /// Sum of squared distances from each point to its centroid.
    pub fn cost(&self, points: &Matrix) -> f64 {
        self.assignments
            .iter()
            .enumerate()
            .map(|(i, &c)| squared_distance(points.row(i), self.centroids.row(c)))
            .sum()
    }
}

/// Draws an index with probability proportional to `weights`, skipping
/// zero-weight entries. Returns `None` when every weight is zero.
fn weighted_pick(weights: &[f64], rng: &mut seed::Rng) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if target < acc {
            return Some(i);
        }
    }
    last
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    centroids
        .iter_rows()
        .enumerate()
        .map(|(c, row)| (c, squared_distance(point, row)))
        .fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

/// Runs [`k_means`] `restarts` times from seeds derived from `seed` and keeps
/// the lowest-cost clustering (earliest restart on ties).
pub fn k_means_restarts(
    points: &Matrix,
    k: usize,
    seed: u64,
    max_iters: usize,
    restarts: usize,
) -> Result<KMeansResult> {
    let mut best: Option<(f64, KMeansResult)> = None;
    for r in 0..restarts.max(1) {
        let km = k_means(
            points,
            k,
            seed::derive(seed, "kmeans-restart", r as u64),
            max_iters,
        )?;
        let cost = km.cost(points);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, km));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// k-means++ seeding (uniform first center, then `D^2` sampling) followed by
/// Lloyd iterations until assignments stop changing or `max_iters` is hit.
/// A cluster that empties is re-seeded at the point farthest from its centroid.
pub fn k_means(points: &Matrix, k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "k-means needs 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut centers = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(centers[0])))
        .collect();
    while centers.len() < k {
        let next = match weighted_pick(&d2, &mut rng) {
            Some(i) => i,
            // all remaining points coincide with a center
            None => (0..n).find(|i| !centers.contains(i)).expect("k <= n"),
        };
        centers.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    let mut centroids = points.select_rows(&centers);

    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut changed = false;
        for (i, a) in assignments.iter_mut().enumerate() {
            let (c, _) = nearest(points.row(i), &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, points.cols());
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .map(|i| {
                        (
                            i,
                            squared_distance(points.row(i), centroids.row(assignments[i])),
                        )
                    })
                    .fold(
                        (0, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    )
                    .0;
                centroids.row_mut(c).copy_from_slice(points.row(far));
                assignments[far] = c;
            } else {
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlusPlusSelection {
    /// Row indices in draw order.
    pub chosen: Vec<usize>,
    /// Set when the weights collapsed to zero and the draw fell back to
    /// uniform sampling.
    pub uniform_fallback: bool,
}

/// k-means++ seeding used as a selection rule: the first row is drawn with
/// probability proportional to its squared norm, each later row
/// proportionally to its squared distance from the nearest row drawn so far.
pub fn k_means_pp_select(points: &Matrix, k: usize, seed: u64) -> Result<PlusPlusSelection> {
    let n = points.rows();
    if k > n {
        return Err(Error::Config(format!("cannot draw {k} of {n} points")));
    }
    let mut rng = seed::rng(seed);
    let mut weights: Vec<f64> = points.iter_rows().map(squared_norm).collect();
    let mut taken = vec![false; n];
    let mut chosen = Vec::with_capacity(k);
    let mut uniform_fallback = false;
    while chosen.len() < k {
        let pick = match weighted_pick(&weights, &mut rng) {
            Some(i) => i,
            None => {
                uniform_fallback = true;
                let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        taken[pick] = true;
        chosen.push(pick);
        for (i, w) in weights.iter_mut().enumerate() {
            *w = if taken[i] {
                0.0
            } else if chosen.len() == 1 {
                squared_distance(points.row(i), points.row(pick))
            } else {
                w.min(squared_distance(points.row(i), points.row(pick)))
            };
        }
    }
    Ok(PlusPlusSelection {
        chosen,
        uniform_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Matrix {
        Matrix::from_rows(&[[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.0, 10.1]]).unwrap()
    }

    #[test]
    fn separates_blobs() {
        for seed in 0..10 {
            let r = k_means(&blobs(), 2, seed, 100).unwrap();
            assert_eq!(r.assignments[0], r.assignments[1]);
            assert_eq!(r.assignments[2], r.assignments[3]);
            assert_ne!(r.assignments[0], r.assignments[2]);
        }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let r = k_means(&blobs(), 1, 3, 100).unwrap();
        assert_close!(r.centroids.get(0, 0), 5.025, 1e-12);
        assert_close!(r.centroids.get(0, 1), 5.025, 1e-12);
    }

    #[test]
    fn one_cluster_per_point_costs_nothing() {
        let r = k_means(&blobs(), 4, 1, 100).unwrap();
        assert_eq!(r.cost(&blobs()), 0.0);
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let pts = Matrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        let r = k_means(&pts, 3, 0, 10).unwrap();
        assert_eq!(r.cost(&pts), 0.0);
        assert!(k_means(&pts, 4, 0, 10).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let pts = crate::data::make_sigmoid_dataset(300, 1).unwrap().features;
        assert_eq!(
            k_means(&pts, 4, 9, 100).unwrap(),
            k_means(&pts, 4, 9, 100).unwrap()
        );
    }

    #[test]
    fn pp_single_nonzero_point() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [0.0, 3.0], [0.0, 0.0]]).unwrap();
        for seed in 0..50 {
            let sel = k_means_pp_select(&pts, 1, seed).unwrap();
            assert_eq!(sel.chosen, vec![1]);
            assert!(!sel.uniform_fallback);
        }
    }

    #[test]
    fn pp_exhausts_and_flags_fallback() {
        let pts = Matrix::from_rows(&[[1.0], [2.0], [2.0], [0.0]]).unwrap();
        let sel = k_means_pp_select(&pts, 4, 5).unwrap();
        let mut all = sel.chosen.clone();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);

        let zeros = Matrix::zeros(3, 2);
        let sel = k_means_pp_select(&zeros, 2, 5).unwrap();
        assert!(sel.uniform_fallback);
        assert_eq!(sel.chosen.len(), 2);
        assert_ne!(sel.chosen[0], sel.chosen[1]);
        assert!(k_means_pp_select(&zeros, 4, 0).is_err());
    }
}
