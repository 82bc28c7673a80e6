use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

/// Greedy farthest-first K-Center.
///
/// Repeatedly picks the candidate row farthest (Euclidean) from its nearest
/// center, where centers are `initial` plus everything picked so far. Ties go
/// to the lowest row index. With no initial centers the first pick is the
/// lowest-index candidate. Returns at most `k` rows in pick order.
pub fn k_center_greedy(
    points: &Matrix,
    initial: &[usize],
    candidates: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::Selection("no candidates to choose from".into()));
    }
    if k == 0 {
        return Err(Error::Selection("k must be at least 1".into()));
    }
    if let Some(bad) = initial
        .iter()
        .chain(candidates)
        .find(|&&i| i >= points.rows())
    {
        return Err(Error::Selection(format!("row {bad} out of range")));
    }
    if candidates.iter().any(|c| initial.contains(c)) {
        return Err(Error::Selection(
            "candidates overlap the initial centers".into(),
        ));
    }

    let mut cands = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();

    // squared distance from each candidate to its nearest center
    let mut nearest: Vec<f64> = cands
        .iter()
        .map(|&c| {
            initial
                .iter()
                .map(|&s| squared_distance(points.row(c), points.row(s)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut taken = vec![false; cands.len()];
    let mut chosen = Vec::with_capacity(k.min(cands.len()));

    while chosen.len() < k && chosen.len() < cands.len() {
        let mut best: Option<usize> = None;
        for (pos, &d) in nearest.iter().enumerate() {
            if taken[pos] {
                continue;
            }
            if best.is_none_or(|b| d > nearest[b]) {
                best = Some(pos);
            }
        }
        let pos = best.expect("an untaken candidate remains");
        taken[pos] = true;
        let center = cands[pos];
        chosen.push(center);
        for (other, d) in nearest.iter_mut().enumerate() {
            if !taken[other] {
                *d = d.min(squared_distance(
                    points.row(cands[other]),
                    points.row(center),
                ));
            }
        }
    }
    Ok(chosen)
}

/// Largest distance from any of `rows` to its nearest center.
pub fn covering_radius(points: &Matrix, rows: &[usize], centers: &[usize]) -> f64 {
    rows.iter()
        .map(|&r| {
            centers
                .iter()
                .map(|&c| squared_distance(points.row(r), points.row(c)))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
        .sqrt()
}
