//! Benjamini–Hochberg step-up procedure.

use super::{GrangerError, Result};

/// Indices (ascending) of the hypotheses rejected at false discovery rate
/// `alpha`. Equal p-values are ranked by original position.
pub fn bh_fdr(p_values: &[f64], alpha: f64) -> Result<Vec<usize>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GrangerError::BadAlpha(alpha));
    }
    if let Some(i) = p_values.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(GrangerError::BadPValue { index: i, value: p_values[i] });
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let cutoff = order
        .iter()
        .enumerate()
        .rev()
        .find(|(rank, &i)| p_values[i] <= (rank + 1) as f64 * alpha / m as f64)
        .map_or(0, |(rank, _)| rank + 1);
    let mut accepted = order[..cutoff].to_vec();
    accepted.sort_unstable();
    Ok(accepted)
}
