//! Asset panels: ingestion, derived features, normalization, and temporal
//! splits.
//!
//! A panel is a set of `days × assets` matrices sharing one trading-day index,
//! plus an optional market-index return series. Every feature at day `t` is a
//! function of data up to `t`; the only forward-looking series are the regime
//! labels, which are targets.

pub mod calendar;
pub mod io;
mod norm;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use chrono::NaiveDate;
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::{valid_series_id, Modality, SeriesKey, INDEX_ID};

pub use norm::{denormalize, znormalize, Moments, NormStats};

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("non-positive price {price} for asset {asset} on {date}")]
    NonPositivePrice { asset: String, date: NaiveDate, price: f64 },
    #[error("series needs at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid window {0}; must be at least 2")]
    BadWindow(usize),
    #[error("invalid horizon {0}; must be at least 1")]
    BadHorizon(usize),
    #[error("feature {feature} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch { feature: Feature, got: (usize, usize), expected: (usize, usize) },
    #[error("dates not strictly increasing at position {0}")]
    UnorderedDates(usize),
    #[error("missing value in {feature} for asset {asset} on {date}")]
    MissingValue { feature: Feature, asset: String, date: NaiveDate },
    #[error("panel has no return feature")]
    NoReturns,
    #[error("invalid asset id `{0}`")]
    BadAssetId(String),
    #[error("norm stats do not cover {0}")]
    StatsMismatch(String),
    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),
    #[error("invalid split: {0}")]
    BadSplit(String),
    #[error("panel has no index return series")]
    NoIndex,
    #[error("csv {path}: {message}")]
    Csv { path: String, message: String },
    #[error("io {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, PanelError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Return,
    Volatility,
    Volume,
    Sentiment,
    News,
}

impl Feature {
    pub const ALL: [Feature; 5] =
        [Feature::Return, Feature::Volatility, Feature::Volume, Feature::Sentiment, Feature::News];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Return => "returns",
            Feature::Volatility => "volatility",
            Feature::Volume => "volume",
            Feature::Sentiment => "sentiment",
            Feature::News => "news",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Feature backing a hypergraph modality.
    pub fn for_modality(m: Modality) -> Feature {
        match m {
            Modality::News => Feature::News,
            Modality::Sentiment => Feature::Sentiment,
            Modality::Return => Feature::Return,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnKind {
    /// `(P_t - P_{t-1}) / P_{t-1}`
    #[default]
    Simple,
    /// `ln(P_t / P_{t-1})`
    Log,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssetPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    features: BTreeMap<Feature, Array2<f64>>,
    index_return: Option<Vec<f64>>,
}

impl AssetPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        features: BTreeMap<Feature, Array2<f64>>,
        index_return: Option<Vec<f64>>,
    ) -> Result<Self> {
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(PanelError::UnorderedDates(i + 1));
        }
        if !features.contains_key(&Feature::Return) {
            return Err(PanelError::NoReturns);
        }
        for a in &assets {
            if !valid_series_id(a) || a == INDEX_ID {
                return Err(PanelError::BadAssetId(a.clone()));
            }
        }
        let expected = (dates.len(), assets.len());
        for (&feature, m) in &features {
            if m.dim() != expected {
                return Err(PanelError::ShapeMismatch { feature, got: m.dim(), expected });
            }
            if let Some(((t, a), _)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(PanelError::MissingValue { feature, asset: assets[a].clone(), date: dates[t] });
            }
        }
        if let Some(idx) = &index_return {
            if idx.len() != dates.len() {
                return Err(PanelError::ShapeMismatch {
                    feature: Feature::Return,
                    got: (idx.len(), 1),
                    expected: (dates.len(), 1),
                });
            }
            if let Some(t) = idx.iter().position(|v| !v.is_finite()) {
                return Err(PanelError::MissingValue {
                    feature: Feature::Return,
                    asset: INDEX_ID.to_string(),
                    date: dates[t],
                });
            }
        }
        Ok(Self { dates, assets, features, index_return })
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn asset_position(&self, id: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == id)
    }

    pub fn date_position(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn feature(&self, f: Feature) -> Option<&Array2<f64>> {
        self.features.get(&f)
    }

    pub fn features(&self) -> impl Iterator<Item = (Feature, &Array2<f64>)> {
        self.features.iter().map(|(f, m)| (*f, m))
    }

    pub fn returns(&self) -> &Array2<f64> {
        &self.features[&Feature::Return]
    }

    pub fn index_return(&self) -> Option<&[f64]> {
        self.index_return.as_deref()
    }

    /// Column of one observed series, if present in the panel.
    pub fn series(&self, key: &SeriesKey) -> Option<Vec<f64>> {
        if key.is_index() {
            return self.index_return.clone();
        }
        let a = self.asset_position(&key.id)?;
        let m = self.features.get(&Feature::for_modality(key.modality))?;
        Some(m.column(a).to_vec())
    }

    /// Every series usable as a hypergraph source: news, sentiment and return
    /// of each asset, then the index.
    pub fn source_series(&self) -> Vec<SeriesKey> {
        let mut out = Vec::new();
        for m in Modality::ALL {
            if self.features.contains_key(&Feature::for_modality(m)) {
                out.extend(self.assets.iter().map(|a| SeriesKey::new(m, a.clone())));
            }
        }
        if self.index_return.is_some() {
            out.push(SeriesKey::index());
        }
        out
    }

    /// Sub-panel over a half-open day range.
    pub fn slice_days(&self, range: Range<usize>) -> AssetPanel {
        let features = self.features.iter().map(|(f, m)| (*f, m.slice(s![range.clone(), ..]).to_owned())).collect();
        AssetPanel {
            dates: self.dates[range.clone()].to_vec(),
            assets: self.assets.clone(),
            features,
            index_return: self.index_return.as_ref().map(|v| v[range].to_vec()),
        }
    }

    /// Panel with assets reordered (or subset) by position.
    pub fn select_assets(&self, order: &[usize]) -> AssetPanel {
        let features = self.features.iter().map(|(f, m)| (*f, m.select(ndarray::Axis(1), order))).collect();
        AssetPanel {
            dates: self.dates.clone(),
            assets: order.iter().map(|&i| self.assets[i].clone()).collect(),
            features,
            index_return: self.index_return.clone(),
        }
    }

    pub(crate) fn with_features(
        &self,
        features: BTreeMap<Feature, Array2<f64>>,
        index_return: Option<Vec<f64>>,
    ) -> AssetPanel {
        AssetPanel { dates: self.dates.clone(), assets: self.assets.clone(), features, index_return }
    }
}

/// Per-period returns of a price series; output is one shorter than input.
pub fn compute_returns(asset: &str, dates: &[NaiveDate], prices: &[f64], kind: ReturnKind) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(PanelError::TooShort { needed: 2, got: prices.len() });
    }
    if let Some(i) = prices.iter().position(|p| !(*p > 0.0)) {
        return Err(PanelError::NonPositivePrice {
            asset: asset.to_string(),
            date: dates.get(i).copied().unwrap_or_default(),
            price: prices[i],
        });
    }
    Ok(prices
        .windows(2)
        .map(|w| match kind {
            ReturnKind::Simple => (w[1] - w[0]) / w[0],
            ReturnKind::Log => (w[1] / w[0]).ln(),
        })
        .collect())
}

/// Rolling sample standard deviation (n−1 denominator).
///
/// Element `k` of the output covers returns `[k, k + window)`, i.e. it is the
/// volatility at day `k + window − 1`; the first `window − 1` days have no
/// value.
pub fn realized_volatility(returns: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(PanelError::BadWindow(window));
    }
    if returns.len() < window {
        return Err(PanelError::TooShort { needed: window, got: returns.len() });
    }
    Ok(returns.windows(window).map(sample_stdev).collect())
}

pub(crate) fn sample_stdev(xs: &[f64]) -> f64 {
    // Shifting by the first value makes constant windows exactly zero.
    let n = xs.len() as f64;
    let shift = xs[0];
    let mean = xs.iter().map(|x| x - shift).sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - shift - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Bull (1) / bear (0) label from the forward index return over `(t, t+h]`.
///
/// Output has `len − horizon` entries; the last `horizon` days are unlabeled.
/// A forward sum of exactly zero is labeled bear.
pub fn regime_label(index_returns: &[f64], horizon: usize) -> Result<Vec<u8>> {
    if horizon < 1 {
        return Err(PanelError::BadHorizon(horizon));
    }
    if index_returns.len() <= horizon {
        return Err(PanelError::TooShort { needed: horizon + 1, got: index_returns.len() });
    }
    Ok((0..index_returns.len() - horizon)
        .map(|t| {
            let fwd: f64 = index_returns[t + 1..=t + horizon].iter().sum();
            u8::from(fwd > 0.0)
        })
        .collect())
}

/// Half-open calendar interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d < self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSplit {
    pub train: DateRange,
    pub valid: DateRange,
    pub test: DateRange,
}

impl TimeSplit {
    pub fn new(train: DateRange, valid: DateRange, test: DateRange) -> Result<Self> {
        for (name, r) in [("train", &train), ("valid", &valid), ("test", &test)] {
            if r.start > r.end {
                return Err(PanelError::BadSplit(format!("{name} range ends before it starts")));
            }
        }
        if train.end > valid.start || valid.end > test.start {
            return Err(PanelError::BadSplit("ranges overlap or are out of order".into()));
        }
        Ok(Self { train, valid, test })
    }

    /// Split by day fractions of a date index: `train_frac` then `valid_frac`,
    /// remainder to test.
    pub fn by_fractions(dates: &[NaiveDate], train_frac: f64, valid_frac: f64) -> Result<Self> {
        let n = dates.len();
        if n < 3 || train_frac <= 0.0 || valid_frac <= 0.0 || train_frac + valid_frac >= 1.0 {
            return Err(PanelError::BadSplit(format!("fractions {train_frac}/{valid_frac} over {n} days")));
        }
        let a = ((n as f64) * train_frac).round() as usize;
        let b = a + ((n as f64) * valid_frac).round() as usize;
        if a == 0 || b <= a || b >= n {
            return Err(PanelError::BadSplit("fractions leave an empty split".into()));
        }
        let after_last = dates[n - 1] + chrono::Duration::days(1);
        TimeSplit::new(
            DateRange::new(dates[0], dates[a]),
            DateRange::new(dates[a], dates[b]),
            DateRange::new(dates[b], after_last),
        )
    }
}

#[derive(Clone, Debug)]
pub struct SplitPanels {
    pub train: AssetPanel,
    pub valid: AssetPanel,
    pub test: AssetPanel,
}

fn day_range(dates: &[NaiveDate], r: &DateRange) -> Range<usize> {
    let lo = dates.partition_point(|d| *d < r.start);
    let hi = dates.partition_point(|d| *d < r.end);
    lo..hi.max(lo)
}

pub fn temporal_split(panel: &AssetPanel, split: &TimeSplit) -> Result<SplitPanels> {
    let mut parts = Vec::with_capacity(3);
    for (name, r) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        let range = day_range(panel.dates(), r);
        if range.is_empty() {
            return Err(PanelError::EmptySplit(name));
        }
        parts.push(panel.slice_days(range));
    }
    let test = parts.pop().expect("three parts");
    let valid = parts.pop().expect("three parts");
    let train = parts.pop().expect("three parts");
    Ok(SplitPanels { train, valid, test })
}
