//! Glue between a raw panel and the model: split, normalize with training
//! statistics, label regimes, and assemble sample sets.

use std::ops::Range;

use crate::granger::GraphSchedule;
use crate::model::{ModelConfig, SampleSet, SeriesTable};
use crate::panel::{regime_label, temporal_split, znormalize, AssetPanel, Feature, Moments, NormStats, TimeSplit};
use crate::Result;

pub const REGIME_HORIZON: usize = 3;

pub struct PreparedPanel {
    pub normalized: AssetPanel,
    pub stats: NormStats,
    /// Regime label per origin day, from the raw index returns.
    pub labels: Option<Vec<u8>>,
    pub table: SeriesTable,
    /// Day index ranges of the train, validation and test splits.
    pub days: [Range<usize>; 3],
}

impl PreparedPanel {
    pub fn new(raw: &AssetPanel, split: &TimeSplit) -> Result<Self> {
        let parts = temporal_split(raw, split)?;
        let stats = NormStats::fit(&parts.train);
        let normalized = znormalize(raw, &stats)?;
        let labels = raw.index_return().map(|r| regime_label(r, REGIME_HORIZON)).transpose()?;
        let position = |d| raw.date_position(d).expect("split dates come from the panel");
        let start = |p: &AssetPanel| position(p.dates()[0]);
        let (a, b, c) = (start(&parts.train), start(&parts.valid), start(&parts.test));
        let end = c + parts.test.n_days();
        let table = SeriesTable::from_panel(&normalized);
        Ok(Self { normalized, stats, labels, table, days: [a..b, b..c, c..end] })
    }

    /// Per-asset return moments in panel asset order.
    pub fn return_moments(&self) -> Vec<Moments> {
        self.normalized
            .assets()
            .iter()
            .map(|a| self.stats.get(Feature::Return, a).expect("fitted on the same assets"))
            .collect()
    }

    pub fn samples(&self, schedule: &GraphSchedule, config: &ModelConfig, split: usize) -> Result<SampleSet> {
        const NAMES: [&str; 3] = ["training", "validation", "test"];
        Ok(SampleSet::build(
            &self.table,
            self.labels.as_deref(),
            schedule,
            self.days[split].clone(),
            config,
            NAMES[split],
        )?)
    }
}
