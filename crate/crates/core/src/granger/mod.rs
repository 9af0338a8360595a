//! Granger-causal hypergraph discovery.
//!
//! For every target return series, each candidate source series is tested as
//! one lag block `{1..K}` against a baseline holding the target's own lags
//! and an intercept. P-values from all (source, target) pairs are pooled into
//! one Benjamini–Hochberg pass, and the surviving sources of a target become
//! that target's parent set.

mod fdr;
mod ftest;
mod hypergraph;
pub mod ols;

use chrono::NaiveDate;
use thiserror::Error;

use crate::node::{LaggedNode, SeriesKey};
use crate::panel::AssetPanel;

pub use fdr::bh_fdr;
pub use ftest::{f_statistic, f_upper_tail, granger_f_test, ln_gamma, regularized_incomplete_beta, GrangerTestResult};
pub use hypergraph::{
    adjacency, build_hypergraph, sliding_window_update, window_starts, CausalHypergraph, DiscoveryConfig,
    GraphSchedule, Hyperedge, WindowRange,
};

#[derive(Debug, Error)]
pub enum GrangerError {
    #[error("need at least {needed} days for lag {max_lag}, got {got}")]
    TooShort { needed: usize, got: usize, max_lag: usize },
    #[error("rank-deficient design for {target}: {node} is collinear with earlier regressors")]
    RankDeficient { target: String, node: String },
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("p-value {value} at index {index} is outside [0, 1]")]
    BadPValue { index: usize, value: f64 },
    #[error("predictor {node} has lag outside 1..={max_lag}")]
    BadLag { node: LaggedNode, max_lag: usize },
    #[error("max lag must be at least 1")]
    ZeroLag,
    #[error("series {0} is not in the panel")]
    UnknownSeries(SeriesKey),
    #[error("window length {window} exceeds panel length {days}")]
    WindowTooLong { window: usize, days: usize },
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error("no graph window covers {0}")]
    DateNotCovered(NaiveDate),
    #[error("malformed graph file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GrangerError>;

/// Least-squares fit of one series on lagged predictors plus an intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    /// Intercept first, then one coefficient per predictor in input order.
    pub coefficients: Vec<f64>,
    pub rss: f64,
    pub n_obs: usize,
}

/// Regresses `target(t)` on `predictor(t − lag)` for each predictor, over
/// days `t ∈ [max_lag, T)` so that nested fits share observations.
pub fn fit_lagged_ols(
    panel: &AssetPanel,
    target: &SeriesKey,
    predictors: &[LaggedNode],
    max_lag: usize,
) -> Result<OlsFit> {
    if max_lag == 0 {
        return Err(GrangerError::ZeroLag);
    }
    let y_full = panel.series(target).ok_or_else(|| GrangerError::UnknownSeries(target.clone()))?;
    let t = y_full.len();
    let k = predictors.len() + 1;
    let needed = max_lag + k + 2;
    if t < needed {
        return Err(GrangerError::TooShort { needed, got: t, max_lag });
    }
    let mut columns = vec![vec![1.0; t - max_lag]];
    for p in predictors {
        if p.lag == 0 || p.lag > max_lag {
            return Err(GrangerError::BadLag { node: p.clone(), max_lag });
        }
        let s = panel.series(&p.series_key()).ok_or_else(|| GrangerError::UnknownSeries(p.series_key()))?;
        columns.push(s[max_lag - p.lag..t - p.lag].to_vec());
    }
    let refs: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
    let fit = ols::least_squares(&refs, &y_full[max_lag..]).map_err(|j| GrangerError::RankDeficient {
        target: target.to_string(),
        node: if j == 0 { "intercept".to_string() } else { predictors[j - 1].to_string() },
    })?;
    Ok(OlsFit { coefficients: fit.coefficients, rss: fit.rss, n_obs: fit.n_obs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::Modality;
    use crate::synthetic::{gen_var_process, PlantedEdge, PlantedSpec};

    fn pair_panel(coef: f64, noise: f64) -> AssetPanel {
        let mut spec = PlantedSpec::new(
            vec![SeriesKey::new(Modality::Return, "A"), SeriesKey::new(Modality::Return, "B")],
            5,
            2000,
            3,
        );
        spec.noise_stdev = vec![1.0, noise];
        spec.edges.push(PlantedEdge { source: 0, lag: 1, target: 1, coefficient: coef });
        gen_var_process(&spec).unwrap().0
    }

    #[test]
    fn recovers_planted_coefficient() {
        let panel = pair_panel(0.9, 0.1);
        let fit = fit_lagged_ols(
            &panel,
            &SeriesKey::new(Modality::Return, "B"),
            &[LaggedNode::new(Modality::Return, "A", 1)],
            5,
        )
        .unwrap();
        assert!((fit.coefficients[1] - 0.9).abs() < 0.05);
        assert_eq!(fit.n_obs, 1995);
    }

    #[test]
    fn exact_relation_and_duplicates() {
        let panel = pair_panel(0.9, 0.0);
        let b = SeriesKey::new(Modality::Return, "B");
        let a1 = LaggedNode::new(Modality::Return, "A", 1);
        let fit = fit_lagged_ols(&panel, &b, std::slice::from_ref(&a1), 5).unwrap();
        assert!(fit.rss < 1e-18, "rss {}", fit.rss);
        assert!((fit.coefficients[1] - 0.9).abs() < 1e-9);
        match fit_lagged_ols(&panel, &b, &[a1.clone(), a1], 5) {
            Err(GrangerError::RankDeficient { node, .. }) => assert_eq!(node, "return:A:1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn guards() {
        let panel = pair_panel(0.5, 1.0).slice_days(0..8);
        let b = SeriesKey::new(Modality::Return, "B");
        let preds: Vec<LaggedNode> = (1..=5).map(|l| LaggedNode::new(Modality::Return, "A", l)).collect();
        assert!(matches!(fit_lagged_ols(&panel, &b, &preds, 5), Err(GrangerError::TooShort { .. })));
        let panel = pair_panel(0.5, 1.0);
        let bad = [LaggedNode::new(Modality::Return, "A", 6)];
        assert!(matches!(fit_lagged_ols(&panel, &b, &bad, 5), Err(GrangerError::BadLag { .. })));
    }
}
