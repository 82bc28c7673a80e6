use crate::error::{Error, Result};

/// Area under the ROC curve: the probability that a random positive
/// outscores a random negative, ties counting one half.
///
/// Uses the Mann-Whitney rank sum with midranks. Ranks are kept doubled as
/// integers, so the result equals the pairwise definition exactly.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("scores contain NaN".into()));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Metric("labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("AUC needs both classes".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum over positives of 2 * midrank (1-based)
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share midrank (start + 1 + end) / 2
        let doubled_midrank = (start + 1 + end) as u64;
        let tied_pos = order[start..end]
            .iter()
            .filter(|&&i| labels[i] == 1)
            .count() as u64;
        doubled_rank_sum += tied_pos * doubled_midrank;
        start = end;
    }
    // 2U = 2 * R_pos - pos * (pos + 1)
    let doubled_u = doubled_rank_sum - pos * (pos + 1);
    Ok(doubled_u as f64 / (2 * pos * neg) as f64)
}
