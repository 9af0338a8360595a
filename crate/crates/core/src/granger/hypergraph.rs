use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::NaiveDate;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fdr::bh_fdr;
use super::ftest::{granger_f_test, GrangerTestResult};
use super::ols::Qr;
use super::{GrangerError, Result};
use crate::node::{LaggedNode, Modality, SeriesKey};
use crate::panel::{AssetPanel, Moments};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub max_lag: usize,
    pub alpha: f64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self { max_lag: 5, alpha: 0.01 }
    }
}

/// Inclusive date range a graph was fitted on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl WindowRange {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

/// Parent set → one target return node, with the joint test of the set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperedge {
    pub target: LaggedNode,
    pub parents: BTreeSet<LaggedNode>,
    /// Surviving source series with their individual block-test p-values.
    pub sources: Vec<(SeriesKey, f64)>,
    pub test: GrangerTestResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalHypergraph {
    pub window: WindowRange,
    pub config: DiscoveryConfig,
    /// Sorted by target.
    pub hyperedges: Vec<Hyperedge>,
    pub n_tests: usize,
    /// Counts of block-test p-values in tenths of `[0, 1]`.
    pub p_histogram: [usize; 10],
    /// Constant series left out of the tests.
    pub skipped: Vec<SeriesKey>,
}

impl CausalHypergraph {
    /// Graph from hand-specified parent sets. The attached tests carry NaN
    /// statistics since nothing was fitted.
    pub fn from_parent_sets(
        window: WindowRange,
        config: DiscoveryConfig,
        edges: Vec<(LaggedNode, BTreeSet<LaggedNode>)>,
    ) -> Self {
        let mut hyperedges: Vec<Hyperedge> = edges
            .into_iter()
            .filter(|(_, ps)| !ps.is_empty())
            .map(|(target, parents)| {
                let sources: BTreeSet<SeriesKey> = parents.iter().map(|p| p.series_key()).collect();
                Hyperedge {
                    test: GrangerTestResult {
                        target: target.clone(),
                        source_group: parents.iter().cloned().collect(),
                        f_statistic: f64::NAN,
                        p_value: f64::NAN,
                        rss_restricted: f64::NAN,
                        rss_full: f64::NAN,
                        dof_num: parents.len(),
                        dof_den: 0,
                    },
                    target,
                    parents,
                    sources: sources.into_iter().map(|s| (s, f64::NAN)).collect(),
                }
            })
            .collect();
        hyperedges.sort_by(|a, b| a.target.cmp(&b.target));
        Self { window, config, hyperedges, n_tests: 0, p_histogram: [0; 10], skipped: Vec::new() }
    }

    pub fn parents_of(&self, target: &LaggedNode) -> Option<&BTreeSet<LaggedNode>> {
        self.hyperedges.iter().find(|h| &h.target == target).map(|h| &h.parents)
    }

    /// Targets and parents appearing in any hyperedge.
    pub fn nodes(&self) -> BTreeSet<LaggedNode> {
        let mut out = BTreeSet::new();
        for h in &self.hyperedges {
            out.insert(h.target.clone());
            out.extend(h.parents.iter().cloned());
        }
        out
    }

    /// `(source series, target series)` pairs.
    pub fn series_edges(&self) -> BTreeSet<(SeriesKey, SeriesKey)> {
        self.hyperedges
            .iter()
            .flat_map(|h| h.sources.iter().map(move |(s, _)| (s.clone(), h.target.series_key())))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.hyperedges.iter().map(|h| h.sources.len()).sum()
    }

    /// One `TARGET <id> <- {parents} F=<v> p=<v> window=<start>..<end>` line
    /// per hyperedge.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for h in &self.hyperedges {
            let parents: Vec<String> = h.parents.iter().map(|p| p.to_string()).collect();
            let _ = writeln!(
                out,
                "TARGET {} <- {{{}}} F={:.6} p={:.6e} window={}..{}",
                h.target.series,
                parents.join(", "),
                h.test.f_statistic,
                h.test.p_value,
                self.window.start,
                self.window.end
            );
        }
        out
    }
}

/// Graphs from successive windows, ordered by window start.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphSchedule {
    pub graphs: Vec<CausalHypergraph>,
}

impl GraphSchedule {
    pub fn single(graph: CausalHypergraph) -> Self {
        Self { graphs: vec![graph] }
    }

    /// Index of the covering window with the latest start.
    pub fn index_for(&self, date: NaiveDate) -> Result<usize> {
        self.graphs.iter().rposition(|g| g.window.contains(date)).ok_or(GrangerError::DateNotCovered(date))
    }

    pub fn graph_for(&self, date: NaiveDate) -> Result<&CausalHypergraph> {
        self.index_for(date).map(|i| &self.graphs[i])
    }

    pub fn to_text(&self) -> String {
        self.graphs.iter().map(|g| g.to_text()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: GraphSchedule = serde_json::from_str(text)?;
        if s.graphs.windows(2).any(|w| w[0].window.start > w[1].window.start) {
            return Err(GrangerError::Format("graphs are not ordered by window start".into()));
        }
        Ok(s)
    }
}

struct Prepared {
    keys: Vec<SeriesKey>,
    values: Vec<Vec<f64>>,
    usable: Vec<bool>,
}

fn prepare(panel: &AssetPanel) -> Prepared {
    let keys = panel.source_series();
    let values: Vec<Vec<f64>> = keys.iter().map(|k| panel.series(k).expect("listed series")).collect();
    let usable = keys
        .iter()
        .zip(&values)
        .map(|(k, v)| {
            let ok = !Moments::of(v).is_degenerate();
            if !ok {
                warn!("granger-discovery: skipping constant series {k}");
            }
            ok
        })
        .collect();
    Prepared { keys, values, usable }
}

fn lag_block(key: &SeriesKey, max_lag: usize) -> Vec<LaggedNode> {
    (1..=max_lag).map(|l| key.at_lag(l)).collect()
}

/// Restricted fit of one target: intercept plus own lags.
struct Baseline {
    qr: Qr,
    qty: Vec<f64>,
    rss: f64,
}

fn lagged(x: &[f64], lag: usize, max_lag: usize) -> &[f64] {
    &x[max_lag - lag..x.len() - lag]
}

fn baseline(y: &[f64], target: &SeriesKey, k: usize) -> Result<Baseline> {
    let n = y.len() - k;
    let ones = vec![1.0; n];
    let mut cols: Vec<&[f64]> = vec![&ones];
    cols.extend((1..=k).map(|l| lagged(y, l, k)));
    let qr = Qr::factor(&cols).map_err(|j| GrangerError::RankDeficient {
        target: target.to_string(),
        node: if j == 0 { "intercept".into() } else { target.at_lag(j).to_string() },
    })?;
    let mut qty = y[k..].to_vec();
    qr.apply_qt(&mut qty);
    let rss = qr.rss_from_qty(&qty);
    Ok(Baseline { qr, qty, rss })
}

/// RSS of the baseline extended by the lag blocks of `sources`, computed by
/// partialling the baseline out of the added columns. `None` when the added
/// columns are collinear with the baseline or each other.
fn extended_rss(base: &Baseline, sources: &[&[f64]], k: usize) -> Option<f64> {
    let p = base.qr.cols();
    let mut reduced: Vec<Vec<f64>> = Vec::with_capacity(sources.len() * k);
    for s in sources {
        for l in 1..=k {
            let mut c = lagged(s, l, k).to_vec();
            base.qr.apply_qt(&mut c);
            reduced.push(c.split_off(p));
        }
    }
    // Collinearity is judged against the column norms before reduction, so
    // that a source equal to the target's own lags is caught.
    let refs: Vec<&[f64]> = reduced.iter().map(|c| c.as_slice()).collect();
    for (c, s) in reduced.iter().zip(sources.iter().flat_map(|s| (1..=k).map(move |l| lagged(s, l, k)))) {
        let before = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let after = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(after > super::ols::RANK_TOLERANCE * before) {
            return None;
        }
    }
    let qr = Qr::factor(&refs).ok()?;
    let mut w = base.qty[p..].to_vec();
    qr.apply_qt(&mut w);
    Some(qr.rss_from_qty(&w))
}

/// Target position, its restricted fit, and one block test per source position.
type TargetTests = (usize, Baseline, Vec<(usize, GrangerTestResult)>);

/// Fits one hypergraph on the whole panel.
pub fn build_hypergraph(panel: &AssetPanel, config: &DiscoveryConfig) -> Result<CausalHypergraph> {
    let k = config.max_lag;
    if k == 0 {
        return Err(GrangerError::ZeroLag);
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(GrangerError::BadAlpha(config.alpha));
    }
    let t = panel.n_days();
    // Full model: intercept, K own lags, K source lags; two spare residual
    // degrees of freedom.
    let needed = k + (2 * k + 1) + 2;
    if t < needed {
        return Err(GrangerError::TooShort { needed, got: t, max_lag: k });
    }
    let n = t - k;
    let prep = prepare(panel);
    let targets: Vec<usize> = (0..prep.keys.len())
        .filter(|&i| {
            let key = &prep.keys[i];
            key.modality == Modality::Return && !key.is_index() && prep.usable[i]
        })
        .collect();

    let per_target: Vec<TargetTests> = targets
        .par_iter()
        .map(|&ti| {
            let key = &prep.keys[ti];
            let base = baseline(&prep.values[ti], key, k)?;
            let node = LaggedNode::target(key.id.clone());
            let mut tests = Vec::new();
            for si in 0..prep.keys.len() {
                if si == ti || !prep.usable[si] {
                    continue;
                }
                match extended_rss(&base, &[&prep.values[si]], k) {
                    Some(rss_full) => tests.push((
                        si,
                        granger_f_test(node.clone(), lag_block(&prep.keys[si], k), base.rss, rss_full, n - (2 * k + 1)),
                    )),
                    None => warn!("granger-discovery: {} is collinear with the lags of {key}; skipped", prep.keys[si]),
                }
            }
            Ok((ti, base, tests))
        })
        .collect::<Result<_>>()?;

    let p_values: Vec<f64> = per_target.iter().flat_map(|(_, _, ts)| ts.iter().map(|(_, r)| r.p_value)).collect();
    let mut p_histogram = [0usize; 10];
    for p in &p_values {
        p_histogram[((p * 10.0) as usize).min(9)] += 1;
    }
    let accepted: BTreeSet<usize> = bh_fdr(&p_values, config.alpha)?.into_iter().collect();

    let mut hyperedges = Vec::new();
    let mut flat = 0;
    for (ti, base, tests) in &per_target {
        let mut survivors: Vec<(usize, &GrangerTestResult)> = Vec::new();
        for (si, r) in tests {
            if accepted.contains(&flat) {
                survivors.push((*si, r));
            }
            flat += 1;
        }
        if survivors.is_empty() {
            continue;
        }
        let key = &prep.keys[*ti];
        let target = LaggedNode::target(key.id.clone());
        let parents: BTreeSet<LaggedNode> =
            survivors.iter().flat_map(|(si, _)| lag_block(&prep.keys[*si], k)).collect();
        let added = k * survivors.len();
        let joint = if n >= k + 1 + added + 2 {
            let cols: Vec<&[f64]> = survivors.iter().map(|(si, _)| prep.values[*si].as_slice()).collect();
            extended_rss(base, &cols, k).map(|rss_full| {
                granger_f_test(
                    target.clone(),
                    parents.iter().cloned().collect(),
                    base.rss,
                    rss_full,
                    n - (k + 1 + added),
                )
            })
        } else {
            None
        };
        let test = joint.unwrap_or_else(|| {
            let best = survivors.iter().min_by(|a, b| a.1.p_value.total_cmp(&b.1.p_value)).expect("non-empty");
            best.1.clone()
        });
        hyperedges.push(Hyperedge {
            target,
            parents,
            sources: survivors.iter().map(|(si, r)| (prep.keys[*si].clone(), r.p_value)).collect(),
            test,
        });
    }
    hyperedges.sort_by(|a, b| a.target.cmp(&b.target));
    let dates = panel.dates();
    Ok(CausalHypergraph {
        window: WindowRange { start: dates[0], end: dates[t - 1] },
        config: *config,
        hyperedges,
        n_tests: p_values.len(),
        p_histogram,
        skipped: prep.keys.iter().zip(&prep.usable).filter(|(_, u)| !**u).map(|(k, _)| k.clone()).collect(),
    })
}

/// Window start positions: every `stride` days while the window fits, plus a
/// final window flush with the panel end when the strides leave a tail.
pub fn window_starts(days: usize, window: usize, stride: usize) -> Vec<usize> {
    if window > days || stride == 0 {
        return Vec::new();
    }
    let mut starts: Vec<usize> = (0..=days - window).step_by(stride).collect();
    if starts.last().is_some_and(|&s| s + window < days) {
        starts.push(days - window);
    }
    starts
}

/// Fits one graph per window position, each on its own window only.
pub fn sliding_window_update(
    panel: &AssetPanel,
    window: usize,
    stride: usize,
    config: &DiscoveryConfig,
) -> Result<GraphSchedule> {
    if stride == 0 {
        return Err(GrangerError::ZeroStride);
    }
    if window > panel.n_days() {
        return Err(GrangerError::WindowTooLong { window, days: panel.n_days() });
    }
    let graphs = window_starts(panel.n_days(), window, stride)
        .into_iter()
        .map(|s| build_hypergraph(&panel.slice_days(s..s + window), config))
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphSchedule { graphs })
}

/// Adjacency of a graph keyed by target, for quick inspection.
pub fn adjacency(graph: &CausalHypergraph) -> BTreeMap<String, Vec<String>> {
    graph.hyperedges.iter().map(|h| (h.target.to_string(), h.parents.iter().map(|p| p.to_string()).collect())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gen_var_process, PanelTemplate, PlantedSpec};

    fn planted(seed: u64, length: usize) -> (AssetPanel, BTreeSet<(SeriesKey, SeriesKey)>) {
        let spec = PlantedSpec::from_template(&PanelTemplate { length, ..Default::default() }, seed).unwrap();
        let (panel, truth) = gen_var_process(&spec).unwrap();
        (panel, truth.return_parents())
    }

    #[test]
    fn recovers_planted_structure() {
        let (panel, truth) = planted(5, 2000);
        let g = build_hypergraph(&panel, &DiscoveryConfig::default()).unwrap();
        let found = g.series_edges();
        // Planted edges are strong; a chance rejection among the 25 nulls is
        // possible at this FDR level.
        assert!(found.is_superset(&truth));
        assert!(found.len() <= truth.len() + 1);
        assert_eq!(g.n_tests, 4 * 7);
        for h in &g.hyperedges {
            assert_eq!(h.parents.len(), 5 * h.sources.len());
            assert!(h.test.p_value < 0.01);
            assert!(h.test.rss_full <= h.test.rss_restricted);
        }
        let text = g.to_text();
        assert_eq!(text.lines().count(), g.hyperedges.len());
        assert!(text.lines().all(|l| l.starts_with("TARGET ") && l.contains(" <- {") && l.contains(" window=")));
    }

    #[test]
    fn too_short_panel_is_rejected() {
        let (panel, _) = planted(1, 100);
        assert!(matches!(
            build_hypergraph(&panel.slice_days(0..17), &DiscoveryConfig::default()),
            Err(GrangerError::TooShort { needed: 18, .. })
        ));
        assert!(build_hypergraph(&panel.slice_days(0..18), &DiscoveryConfig::default()).is_ok());
    }

    #[test]
    fn scaling_a_series_leaves_statistics_unchanged() {
        let (panel, _) = planted(8, 600);
        let base = build_hypergraph(&panel, &DiscoveryConfig::default()).unwrap();
        let mut features: BTreeMap<_, _> = panel.features().map(|(f, m)| (f, m.clone())).collect();
        for (i, (_, m)) in features.iter_mut().enumerate() {
            let c = i % m.ncols();
            m.column_mut(c).mapv_inplace(|v| v * 37.5);
        }
        let scaled = panel.with_features(features, None);
        let again = build_hypergraph(&scaled, &DiscoveryConfig::default()).unwrap();
        assert_eq!(base.series_edges(), again.series_edges());
        for (a, b) in base.hyperedges.iter().zip(&again.hyperedges) {
            assert!((a.test.f_statistic - b.test.f_statistic).abs() < 1e-6 * a.test.f_statistic.max(1.0));
            for ((_, pa), (_, pb)) in a.sources.iter().zip(&b.sources) {
                assert!((pa - pb).abs() <= 1e-9 + 1e-6 * pa);
            }
        }
    }

    #[test]
    fn constant_series_are_skipped() {
        let (panel, _) = planted(2, 300);
        let mut features: BTreeMap<_, _> = panel.features().map(|(f, m)| (f, m.clone())).collect();
        features.get_mut(&crate::panel::Feature::Sentiment).unwrap().column_mut(0).fill(0.0);
        let g = build_hypergraph(&panel.with_features(features, None), &DiscoveryConfig::default()).unwrap();
        assert_eq!(g.skipped, vec![SeriesKey::new(Modality::Sentiment, "S000")]);
        assert_eq!(g.n_tests, 4 * 6);
    }

    #[test]
    fn window_positions() {
        assert_eq!(window_starts(10, 4, 3), vec![0, 3, 6]);
        assert_eq!(window_starts(11, 4, 3), vec![0, 3, 6, 7]);
        assert_eq!(window_starts(10, 10, 10), vec![0]);
        assert!(window_starts(3, 4, 1).is_empty());
    }

    #[test]
    fn full_stride_matches_single_build() {
        let (panel, _) = planted(3, 400);
        let cfg = DiscoveryConfig::default();
        let s = sliding_window_update(&panel, 400, 400, &cfg).unwrap();
        assert_eq!(s.graphs, vec![build_hypergraph(&panel, &cfg).unwrap()]);
        assert!(matches!(sliding_window_update(&panel, 401, 1, &cfg), Err(GrangerError::WindowTooLong { .. })));
        assert!(matches!(sliding_window_update(&panel, 100, 0, &cfg), Err(GrangerError::ZeroStride)));
    }

    #[test]
    fn schedule_lookup_and_json() {
        let (panel, _) = planted(4, 600);
        let s = sliding_window_update(&panel, 300, 200, &DiscoveryConfig::default()).unwrap();
        assert_eq!(s.graphs.len(), 3);
        let d = panel.dates();
        assert_eq!(s.index_for(d[0]).unwrap(), 0);
        assert_eq!(s.index_for(d[250]).unwrap(), 1);
        assert_eq!(s.index_for(d[599]).unwrap(), 2);
        let after = d[599].succ_opt().unwrap();
        assert!(matches!(s.graph_for(after), Err(GrangerError::DateNotCovered(_))));
        assert_eq!(GraphSchedule::from_json(&s.to_json().unwrap()).unwrap(), s);
        assert!(!adjacency(&s.graphs[0]).is_empty());
    }
}
