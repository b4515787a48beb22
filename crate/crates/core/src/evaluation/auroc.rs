use crate::error::{Error, Result};

/// Area under the ROC curve as the Mann-Whitney statistic: the share of
/// (no-show, show) pairs ranked correctly, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Metric(format!("score {s} is not a number")));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the number of correctly ordered pairs, kept in integers so the
    // result is exact before the final division.
    let mut twice_correct: u128 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1
            } else {
                neg += 1
            }
            j += 1;
        }
        twice_correct += 2 * u128::from(pos) * u128::from(negatives_below) + u128::from(pos) * u128::from(neg);
        negatives_below += neg;
        i = j;
    }
    Ok(twice_correct as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}
