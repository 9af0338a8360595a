//! Seeded vector-autoregressive panels with planted lagged causal edges.
//!
//! The generator is the ground-truth oracle for discovery, masking and
//! training tests. Each series follows
//!
//! ```text
//! y_i(t) = Σ_{edges j→i at lag k} c · y_j(t − k) + σ_i · ε_i(t)
//! ```
//!
//! with `ε` i.i.d. standard normal drawn from the [`Stream::Data`] stream, in
//! series order within each day. A burn-in of [`BURN_IN`] steps is discarded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::NaiveDate;
use ndarray::Array2;
use thiserror::Error;

use crate::node::{valid_series_id, Modality, SeriesKey, INDEX_ID};
use crate::panel::{calendar, AssetPanel, Feature};
use crate::rng::{SeededRng, Stream};

/// Smallest planted coefficient magnitude accepted.
pub const DETECTABILITY_FLOOR: f64 = 0.05;
pub const BURN_IN: usize = 500;
const POWER_TOLERANCE: f64 = 1e-8;
const POWER_MAX_ITERS: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("unstable coefficient matrix (spectral radius {radius:.6}){}", regime_suffix(.regime))]
    Unstable { radius: f64, regime: Option<&'static str> },
    #[error("edge {0} references a series out of range")]
    EdgeOutOfRange(usize),
    #[error("edge {index} has lag {lag}; expected 1..={max_lag}")]
    BadLag { index: usize, lag: usize, max_lag: usize },
    #[error("edge {index} coefficient {coefficient} is below the detectability floor {DETECTABILITY_FLOOR}")]
    BelowFloor { index: usize, coefficient: f64 },
    #[error("break day {day} must lie strictly between max lag {max_lag} and length {length}")]
    BadBreak { day: usize, max_lag: usize, length: usize },
    #[error("invalid spec: {0}")]
    Invalid(String),
}

fn regime_suffix(r: &Option<&'static str>) -> String {
    r.map(|r| format!(" in {r} regime")).unwrap_or_default()
}

pub type Result<T> = std::result::Result<T, SyntheticError>;

/// Directed lagged edge between series positions of a [`PlantedSpec`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedEdge {
    pub source: usize,
    pub lag: usize,
    pub target: usize,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeShift {
    /// First day (post burn-in index) generated with the new edges.
    pub break_day: usize,
    pub edges: Vec<PlantedEdge>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedSpec {
    pub series: Vec<SeriesKey>,
    pub max_lag: usize,
    pub edges: Vec<PlantedEdge>,
    pub noise_stdev: Vec<f64>,
    pub length: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    pub shift: Option<RegimeShift>,
}

/// Shape of a randomly planted panel.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelTemplate {
    pub assets: usize,
    pub news: bool,
    pub index: bool,
    /// Number of exogenous-source → return edges.
    pub planted_edges: usize,
    /// Magnitude range of planted coefficients; signs are random.
    pub coefficient: (f64, f64),
    /// AR(1) coefficient on every sentiment and news series (0 disables).
    pub source_persistence: f64,
    /// Adds a lag-1 news → sentiment edge behind each planted sentiment
    /// source, forming news → sentiment → return chains.
    pub chains: bool,
    pub noise_stdev: f64,
    pub length: usize,
    pub max_lag: usize,
}

impl Default for PanelTemplate {
    fn default() -> Self {
        Self {
            assets: 4,
            news: false,
            index: false,
            planted_edges: 3,
            coefficient: (0.2, 0.4),
            source_persistence: 0.3,
            chains: false,
            noise_stdev: 1.0,
            length: 2000,
            max_lag: 5,
        }
    }
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 1, 2).expect("valid date")
}

impl PlantedSpec {
    /// Spec with no edges over `series`, unit noise.
    pub fn new(series: Vec<SeriesKey>, max_lag: usize, length: usize, seed: u64) -> Self {
        let n = series.len();
        Self {
            series,
            max_lag,
            edges: Vec::new(),
            noise_stdev: vec![1.0; n],
            length,
            seed,
            start_date: default_start(),
            shift: None,
        }
    }

    pub fn position(&self, key: &SeriesKey) -> Option<usize> {
        self.series.iter().position(|s| s == key)
    }

    /// Draws a planted structure: distinct return targets, each driven by
    /// one sentiment (or news) series of a random asset at a random lag.
    pub fn from_template(t: &PanelTemplate, seed: u64) -> Result<Self> {
        if t.assets == 0 || t.planted_edges > t.assets {
            return Err(SyntheticError::Invalid(format!(
                "{} planted edges need as many assets, have {}",
                t.planted_edges, t.assets
            )));
        }
        let ids: Vec<String> = (0..t.assets).map(|i| format!("S{i:03}")).collect();
        let mut series = Vec::new();
        for m in [Modality::News, Modality::Sentiment, Modality::Return] {
            if m == Modality::News && !t.news {
                continue;
            }
            series.extend(ids.iter().map(|id| SeriesKey::new(m, id.clone())));
        }
        if t.index {
            series.push(SeriesKey::index());
        }
        let mut spec = PlantedSpec::new(series, t.max_lag, t.length, seed);
        spec.noise_stdev = vec![t.noise_stdev; spec.series.len()];
        let pos = |spec: &PlantedSpec, m, id: &str| spec.position(&SeriesKey::new(m, id)).expect("series present");

        // Structure draws come from the batching stream so that the data
        // stream is untouched by template changes.
        let mut rng = SeededRng::new(seed, Stream::Batching);
        if t.source_persistence != 0.0 {
            for (i, s) in spec.series.clone().iter().enumerate() {
                if s.modality != Modality::Return {
                    spec.edges.push(PlantedEdge { source: i, lag: 1, target: i, coefficient: t.source_persistence });
                }
            }
        }
        let mut targets: Vec<usize> = (0..t.assets).collect();
        rng.shuffle(&mut targets);
        for &target in targets.iter().take(t.planted_edges) {
            let source_asset = rng.below(t.assets);
            let modality = if t.news && rng.below(2) == 0 { Modality::News } else { Modality::Sentiment };
            let lag = 1 + rng.below(t.max_lag);
            let magnitude = rng.uniform_range(t.coefficient.0, t.coefficient.1);
            let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
            let source = pos(&spec, modality, &ids[source_asset]);
            spec.edges.push(PlantedEdge {
                source,
                lag,
                target: pos(&spec, Modality::Return, &ids[target]),
                coefficient: sign * magnitude,
            });
            if t.chains && t.news && modality == Modality::Sentiment {
                let news = pos(&spec, Modality::News, &ids[source_asset]);
                if !spec.edges.iter().any(|e| e.source == news && e.target == source) {
                    spec.edges.push(PlantedEdge { source: news, lag: 1, target: source, coefficient: 0.5 });
                }
            }
        }
        if t.index {
            let idx = spec.series.len() - 1;
            let driver = pos(&spec, Modality::Sentiment, &ids[rng.below(t.assets)]);
            spec.edges.push(PlantedEdge { source: driver, lag: 1, target: idx, coefficient: 0.3 });
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.series.len();
        if n == 0 || self.length == 0 || self.max_lag == 0 {
            return Err(SyntheticError::Invalid("need at least one series, day and lag".into()));
        }
        if self.noise_stdev.len() != n || self.noise_stdev.iter().any(|s| !(*s >= 0.0)) {
            return Err(SyntheticError::Invalid("noise_stdev must hold one non-negative value per series".into()));
        }
        let unique: BTreeSet<&SeriesKey> = self.series.iter().collect();
        if unique.len() != n {
            return Err(SyntheticError::Invalid("duplicate series".into()));
        }
        for s in &self.series {
            if !valid_series_id(&s.id) {
                return Err(SyntheticError::Invalid(format!("bad series id `{}`", s.id)));
            }
            if s.modality != Modality::Return && !self.series.contains(&SeriesKey::new(Modality::Return, s.id.clone()))
            {
                return Err(SyntheticError::Invalid(format!("series {s} has no matching return series")));
            }
            if s.id == INDEX_ID && s.modality != Modality::Return {
                return Err(SyntheticError::Invalid("the index must be a return series".into()));
            }
        }
        let check = |edges: &[PlantedEdge], regime| -> Result<()> {
            for (index, e) in edges.iter().enumerate() {
                if e.source >= n || e.target >= n {
                    return Err(SyntheticError::EdgeOutOfRange(index));
                }
                if e.lag == 0 || e.lag > self.max_lag {
                    return Err(SyntheticError::BadLag { index, lag: e.lag, max_lag: self.max_lag });
                }
                if !(e.coefficient.abs() >= DETECTABILITY_FLOOR) {
                    return Err(SyntheticError::BelowFloor { index, coefficient: e.coefficient });
                }
            }
            let radius = spectral_radius(n, self.max_lag, edges);
            if radius >= 1.0 - POWER_TOLERANCE {
                return Err(SyntheticError::Unstable { radius, regime });
            }
            Ok(())
        };
        check(&self.edges, self.shift.as_ref().map(|_| "pre-break"))?;
        if let Some(shift) = &self.shift {
            if shift.break_day <= self.max_lag || shift.break_day >= self.length {
                return Err(SyntheticError::BadBreak {
                    day: shift.break_day,
                    max_lag: self.max_lag,
                    length: self.length,
                });
            }
            check(&shift.edges, Some("post-break"))?;
        }
        Ok(())
    }
}

/// Spectral radius of the VAR companion matrix by power iteration.
///
/// Uses the growth rate `‖A^k z‖^{1/k}` averaged over the second half of the
/// iterates, which also converges when the dominant eigenvalues form a
/// complex pair.
pub fn spectral_radius(n_series: usize, max_lag: usize, edges: &[PlantedEdge]) -> f64 {
    let dim = n_series * max_lag;
    if dim == 0 || edges.is_empty() {
        return 0.0;
    }
    let mut z: Vec<f64> = (0..dim).map(|i| 1.0 + 0.5 * ((i + 1) as f64).sin()).collect();
    let mut next = vec![0.0; dim];
    let mut logs = Vec::new();
    let mut previous: Option<f64> = None;
    let mut estimate = 0.0;
    for k in 1..=POWER_MAX_ITERS {
        next.fill(0.0);
        for e in edges {
            next[e.target] += e.coefficient * z[(e.lag - 1) * n_series + e.source];
        }
        next[n_series..].copy_from_slice(&z[..dim - n_series]);
        let nz = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nz == 0.0 {
            return 0.0;
        }
        logs.push(nz.ln());
        for (zi, ni) in z.iter_mut().zip(&next) {
            *zi = ni / nz;
        }
        if k >= 16 && k.is_power_of_two() {
            let tail = &logs[k / 2..];
            estimate = (tail.iter().sum::<f64>() / tail.len() as f64).exp();
            if previous.is_some_and(|p| (estimate - p).abs() < POWER_TOLERANCE) {
                return estimate;
            }
            previous = Some(estimate);
        }
    }
    estimate
}

/// Returns a copy of `spec` whose process switches to `new_edges` at
/// `break_day`.
pub fn plant_regime_shift(spec: &PlantedSpec, break_day: usize, new_edges: Vec<PlantedEdge>) -> Result<PlantedSpec> {
    let mut out = spec.clone();
    out.shift = Some(RegimeShift { break_day, edges: new_edges });
    out.validate()?;
    Ok(out)
}

/// Raw simulated series, `out[series][day]`.
pub fn simulate(spec: &PlantedSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let n = spec.series.len();
    let total = BURN_IN + spec.length;
    let mut y = vec![vec![0.0; total]; n];
    let mut rng = SeededRng::new(spec.seed, Stream::Data);
    for t in 0..total {
        let edges = match &spec.shift {
            Some(s) if t >= BURN_IN + s.break_day => &s.edges,
            _ => &spec.edges,
        };
        for (i, series) in y.iter_mut().enumerate() {
            series[t] = spec.noise_stdev[i] * rng.normal();
        }
        for e in edges {
            if t >= e.lag {
                y[e.target][t] += e.coefficient * y[e.source][t - e.lag];
            }
        }
    }
    Ok(y.into_iter().map(|s| s[BURN_IN..].to_vec()).collect())
}

/// Planted edge expressed on series identities.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TruthEdge {
    pub source: SeriesKey,
    pub lag: usize,
    pub target: SeriesKey,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruthGraph {
    pub edges: Vec<(TruthEdge, f64)>,
    /// Edges in force from the break day on, when a regime shift is planted.
    pub after_break: Option<(usize, Vec<(TruthEdge, f64)>)>,
}

fn truth_edges(spec: &PlantedSpec, edges: &[PlantedEdge]) -> Vec<(TruthEdge, f64)> {
    edges
        .iter()
        .map(|e| {
            (
                TruthEdge { source: spec.series[e.source].clone(), lag: e.lag, target: spec.series[e.target].clone() },
                e.coefficient,
            )
        })
        .collect()
}

fn return_pairs(edges: &[(TruthEdge, f64)], transitive: bool) -> BTreeSet<(SeriesKey, SeriesKey)> {
    let mut parents: BTreeMap<&SeriesKey, BTreeSet<&SeriesKey>> = BTreeMap::new();
    for (e, _) in edges {
        if e.source != e.target {
            parents.entry(&e.target).or_default().insert(&e.source);
        }
    }
    let mut out = BTreeSet::new();
    for (&target, direct) in &parents {
        if target.modality != Modality::Return || target.is_index() {
            continue;
        }
        let mut seen: BTreeSet<&SeriesKey> = BTreeSet::new();
        let mut stack: Vec<&SeriesKey> = direct.iter().copied().collect();
        while let Some(s) = stack.pop() {
            if s == target || !seen.insert(s) {
                continue;
            }
            if transitive {
                if let Some(ps) = parents.get(s) {
                    stack.extend(ps.iter().copied());
                }
            }
        }
        out.extend(seen.into_iter().map(|s| (s.clone(), target.clone())));
    }
    out
}

impl GroundTruthGraph {
    /// `(source series, target return series)` pairs with a direct planted
    /// edge; self-loops and non-return targets are excluded.
    pub fn return_parents(&self) -> BTreeSet<(SeriesKey, SeriesKey)> {
        return_pairs(&self.edges, false)
    }

    /// Like [`return_parents`](Self::return_parents) but also counting
    /// sources that reach the target through a chain of planted edges.
    pub fn reachable_return_parents(&self) -> BTreeSet<(SeriesKey, SeriesKey)> {
        return_pairs(&self.edges, true)
    }

    pub fn post_break_return_parents(&self) -> Option<BTreeSet<(SeriesKey, SeriesKey)>> {
        self.after_break.as_ref().map(|(_, e)| return_pairs(e, false))
    }

    /// Edge list, one `source:lag -> target coef=<c>` line per edge.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# planted edges: source:lag -> target coefficient\n");
        let write = |out: &mut String, edges: &[(TruthEdge, f64)]| {
            for (e, c) in edges {
                let _ = writeln!(out, "{}:{} -> {} coef={c}", e.source, e.lag, e.target);
            }
        };
        write(&mut out, &self.edges);
        if let Some((day, edges)) = &self.after_break {
            let _ = writeln!(out, "# after break day {day}");
            write(&mut out, edges);
        }
        out
    }
}

/// Simulates `spec` and arranges the series as an asset panel on the NYSE
/// calendar starting at `spec.start_date`.
pub fn gen_var_process(spec: &PlantedSpec) -> Result<(AssetPanel, GroundTruthGraph)> {
    let data = simulate(spec)?;
    let dates = calendar::trading_days_from(spec.start_date, spec.length);
    let assets: Vec<String> =
        spec.series.iter().filter(|s| s.modality == Modality::Return && !s.is_index()).map(|s| s.id.clone()).collect();
    if assets.is_empty() {
        return Err(SyntheticError::Invalid("spec has no asset return series".into()));
    }
    let mut features = BTreeMap::new();
    for m in Modality::ALL {
        if !spec.series.iter().any(|s| s.modality == m && !s.is_index()) {
            continue;
        }
        let cols: Vec<Option<&Vec<f64>>> =
            assets.iter().map(|a| spec.position(&SeriesKey::new(m, a.clone())).map(|i| &data[i])).collect();
        // Assets without a series of this modality read as neutral zeros.
        let matrix = Array2::from_shape_fn((spec.length, assets.len()), |(t, a)| cols[a].map_or(0.0, |c| c[t]));
        features.insert(Feature::for_modality(m), matrix);
    }
    let index = spec.position(&SeriesKey::index()).map(|i| data[i].clone());
    let panel = AssetPanel::new(dates, assets, features, index).map_err(|e| SyntheticError::Invalid(e.to_string()))?;
    let truth = GroundTruthGraph {
        edges: truth_edges(spec, &spec.edges),
        after_break: spec.shift.as_ref().map(|s| (s.break_day, truth_edges(spec, &s.edges))),
    };
    Ok((panel, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_series(len: usize, seed: u64) -> PlantedSpec {
        PlantedSpec::new(
            vec![SeriesKey::new(Modality::Return, "A"), SeriesKey::new(Modality::Return, "B")],
            5,
            len,
            seed,
        )
    }

    fn lag1_autocorrelation(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        cov / var
    }

    #[test]
    fn white_noise_has_no_autocorrelation() {
        let data = simulate(&two_series(5000, 11)).unwrap();
        for s in &data {
            assert!(lag1_autocorrelation(s).abs() < 0.05);
        }
    }

    #[test]
    fn single_edge_is_recovered_by_least_squares() {
        let mut spec = two_series(2000, 3);
        spec.noise_stdev = vec![1.0, 0.1];
        spec.edges.push(PlantedEdge { source: 0, lag: 1, target: 1, coefficient: 0.9 });
        let data = simulate(&spec).unwrap();
        // Independent oracle: slope of y_B(t) on y_A(t−1) with intercept.
        let x = &data[0][..1999];
        let y = &data[1][1..];
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        assert!((sxy / sxx - 0.9).abs() < 0.05, "slope {}", sxy / sxx);
    }

    #[test]
    fn same_seed_same_panel() {
        let spec =
            PlantedSpec::from_template(&PanelTemplate { index: true, news: true, ..Default::default() }, 9).unwrap();
        let (a, ta) = gen_var_process(&spec).unwrap();
        let (b, tb) = gen_var_process(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let mut other = spec.clone();
        other.seed = 10;
        assert_ne!(gen_var_process(&other).unwrap().0, a);
    }

    #[test]
    fn unstable_specs_are_rejected() {
        let mut spec = two_series(100, 1);
        spec.edges.push(PlantedEdge { source: 0, lag: 1, target: 0, coefficient: 1.05 });
        assert!(matches!(spec.validate(), Err(SyntheticError::Unstable { .. })));
        // Oscillating pair: eigenvalues ±i·1.1 (complex dominant pair).
        let mut spec = two_series(100, 1);
        spec.edges.push(PlantedEdge { source: 0, lag: 1, target: 1, coefficient: 1.1 });
        spec.edges.push(PlantedEdge { source: 1, lag: 1, target: 0, coefficient: -1.1 });
        assert!(matches!(spec.validate(), Err(SyntheticError::Unstable { .. })));
    }

    #[test]
    fn spectral_radius_known_values() {
        let ar = |c: f64| vec![PlantedEdge { source: 0, lag: 1, target: 0, coefficient: c }];
        assert!((spectral_radius(1, 1, &ar(0.7)) - 0.7).abs() < 1e-8);
        // Rotation-like pair with |λ| = 0.8.
        let pair = vec![
            PlantedEdge { source: 0, lag: 1, target: 1, coefficient: 0.8 },
            PlantedEdge { source: 1, lag: 1, target: 0, coefficient: -0.8 },
        ];
        assert!((spectral_radius(2, 1, &pair) - 0.8).abs() < 1e-4);
        // AR(2) y_t = 0.5 y_{t-1} + 0.3 y_{t-2}: largest root of z² − 0.5z − 0.3.
        let ar2 = vec![
            PlantedEdge { source: 0, lag: 1, target: 0, coefficient: 0.5 },
            PlantedEdge { source: 0, lag: 2, target: 0, coefficient: 0.3 },
        ];
        let root = (0.5 + (0.25f64 + 1.2).sqrt()) / 2.0;
        assert!((spectral_radius(1, 2, &ar2) - root).abs() < 1e-8);
        let chain = vec![PlantedEdge { source: 0, lag: 1, target: 1, coefficient: 0.9 }];
        assert_eq!(spectral_radius(2, 5, &chain), 0.0);
    }

    #[test]
    fn regime_shift_guards() {
        let mut spec = two_series(500, 4);
        spec.edges.push(PlantedEdge { source: 0, lag: 2, target: 1, coefficient: 0.4 });
        assert!(matches!(plant_regime_shift(&spec, 5, vec![]), Err(SyntheticError::BadBreak { .. })));
        assert!(matches!(plant_regime_shift(&spec, 500, vec![]), Err(SyntheticError::BadBreak { .. })));
        let same = plant_regime_shift(&spec, 200, spec.edges.clone()).unwrap();
        assert_eq!(simulate(&same).unwrap(), simulate(&spec).unwrap());
        let bad = vec![PlantedEdge { source: 1, lag: 1, target: 1, coefficient: 1.2 }];
        assert!(matches!(plant_regime_shift(&spec, 200, bad), Err(SyntheticError::Unstable { .. })));
    }

    #[test]
    fn stationary_halves_have_similar_variance() {
        let spec = PlantedSpec::from_template(&PanelTemplate { length: 6000, ..Default::default() }, 21).unwrap();
        for s in simulate(&spec).unwrap() {
            let (a, b) = s.split_at(s.len() / 2);
            let var = |x: &[f64]| {
                let m = x.iter().sum::<f64>() / x.len() as f64;
                x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
            };
            let (va, vb) = (var(a), var(b));
            assert!((va - vb).abs() / va.max(vb) < 0.25, "{va} vs {vb}");
        }
    }

    #[test]
    fn template_structure() {
        let t = PanelTemplate { assets: 6, news: true, chains: true, index: true, ..Default::default() };
        let spec = PlantedSpec::from_template(&t, 2).unwrap();
        let (panel, truth) = gen_var_process(&spec).unwrap();
        assert_eq!(panel.n_assets(), 6);
        assert!(panel.index_return().is_some());
        let direct = truth.return_parents();
        assert_eq!(direct.len(), 3);
        assert!(direct.iter().all(|(s, t)| s.modality != Modality::Return && t.modality == Modality::Return));
        assert!(truth.reachable_return_parents().is_superset(&direct));
        assert!(truth.to_text().lines().count() > 3);
    }
}
