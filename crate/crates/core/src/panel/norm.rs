//! Z-normalization with training-split statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;

use super::{AssetPanel, Feature, PanelError, Result};
use crate::node::INDEX_ID;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub stdev: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Moments {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stdev = if xs.len() < 2 { 0.0 } else { super::sample_stdev(xs) };
        Moments { mean, stdev }
    }

    /// Zero (or numerically zero) spread; normalizes to all zeros.
    pub fn is_degenerate(&self) -> bool {
        self.stdev <= 1e-12 * self.mean.abs().max(1.0)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (x - self.mean) / self.stdev
        }
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        if self.is_degenerate() {
            self.mean
        } else {
            z * self.stdev + self.mean
        }
    }
}

/// Per-feature, per-asset moments computed on a training panel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormStats {
    columns: BTreeMap<(Feature, String), Moments>,
    index: Option<Moments>,
}

impl NormStats {
    pub fn fit(train: &AssetPanel) -> NormStats {
        let mut columns = BTreeMap::new();
        for (f, m) in train.features() {
            for (a, id) in train.assets().iter().enumerate() {
                let col = m.column(a).to_vec();
                columns.insert((f, id.clone()), Moments::of(&col));
            }
        }
        let index = train.index_return().map(Moments::of);
        NormStats { columns, index }
    }

    pub fn get(&self, feature: Feature, asset: &str) -> Option<Moments> {
        self.columns.get(&(feature, asset.to_string())).copied()
    }

    pub fn index(&self) -> Option<Moments> {
        self.index
    }

    /// Columns flagged as degenerate (zero spread on the training split).
    pub fn degenerate(&self) -> Vec<(Feature, String)> {
        let mut out: Vec<_> = self.columns.iter().filter(|(_, m)| m.is_degenerate()).map(|(k, _)| k.clone()).collect();
        if self.index.is_some_and(|m| m.is_degenerate()) {
            out.push((Feature::Return, INDEX_ID.to_string()));
        }
        out
    }

    /// Flat `key=value` text, one line per statistic.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# normalization statistics (training split)\n");
        for ((f, a), m) in &self.columns {
            let _ = writeln!(out, "{f}.{a}.mean={:e}", m.mean);
            let _ = writeln!(out, "{f}.{a}.stdev={:e}", m.stdev);
            if m.is_degenerate() {
                let _ = writeln!(out, "{f}.{a}.degenerate=true");
            }
        }
        if let Some(m) = self.index {
            let _ = writeln!(out, "index.mean={:e}", m.mean);
            let _ = writeln!(out, "index.stdev={:e}", m.stdev);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<NormStats> {
        let mut partial: BTreeMap<(Feature, String), (Option<f64>, Option<f64>)> = BTreeMap::new();
        let mut index = (None, None);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line.split_once('=').ok_or_else(|| PanelError::Parse(format!("no `=` in `{line}`")))?;
            let parts: Vec<&str> = key.split('.').collect();
            let stat = *parts.last().unwrap_or(&"");
            if stat == "degenerate" {
                continue;
            }
            let v: f64 = value.parse().map_err(|e| PanelError::Parse(format!("`{line}`: {e}")))?;
            let slot = if parts.len() == 2 && parts[0] == "index" {
                &mut index
            } else if parts.len() >= 3 {
                let f = Feature::from_name(parts[0])
                    .ok_or_else(|| PanelError::Parse(format!("unknown feature in `{line}`")))?;
                let asset = parts[1..parts.len() - 1].join(".");
                partial.entry((f, asset)).or_default()
            } else {
                return Err(PanelError::Parse(format!("bad key `{key}`")));
            };
            match stat {
                "mean" => slot.0 = Some(v),
                "stdev" => slot.1 = Some(v),
                _ => return Err(PanelError::Parse(format!("unknown statistic `{stat}`"))),
            }
        }
        let complete = |(m, s): (Option<f64>, Option<f64>), what: &str| match (m, s) {
            (Some(mean), Some(stdev)) => Ok(Moments { mean, stdev }),
            _ => Err(PanelError::Parse(format!("incomplete statistics for {what}"))),
        };
        let mut columns = BTreeMap::new();
        for (k, v) in partial {
            let what = format!("{}.{}", k.0, k.1);
            columns.insert(k, complete(v, &what)?);
        }
        let index = match index {
            (None, None) => None,
            other => Some(complete(other, "index")?),
        };
        Ok(NormStats { columns, index })
    }
}

fn map_panel(panel: &AssetPanel, stats: &NormStats, f: fn(&Moments, f64) -> f64) -> Result<AssetPanel> {
    let mut features = BTreeMap::new();
    for (feature, m) in panel.features() {
        let mut out = Array2::zeros(m.dim());
        for (a, id) in panel.assets().iter().enumerate() {
            let moments = stats.get(feature, id).ok_or_else(|| PanelError::StatsMismatch(format!("{feature}.{id}")))?;
            for t in 0..m.nrows() {
                out[[t, a]] = f(&moments, m[[t, a]]);
            }
        }
        features.insert(feature, out);
    }
    let index = match panel.index_return() {
        Some(idx) => {
            let moments = stats.index().ok_or_else(|| PanelError::StatsMismatch("index".into()))?;
            Some(idx.iter().map(|x| f(&moments, *x)).collect())
        }
        None => None,
    };
    Ok(panel.with_features(features, index))
}

/// `(x − mean) / stdev` per feature and asset; degenerate columns become zero.
pub fn znormalize(panel: &AssetPanel, stats: &NormStats) -> Result<AssetPanel> {
    map_panel(panel, stats, Moments::normalize)
}

pub fn denormalize(panel: &AssetPanel, stats: &NormStats) -> Result<AssetPanel> {
    map_panel(panel, stats, Moments::denormalize)
}
