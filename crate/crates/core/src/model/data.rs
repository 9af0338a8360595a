use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use chrono::NaiveDate;

use super::mask::{plan_window, WindowPlan};
use super::{ModelConfig, ModelError, Result};
use crate::granger::GraphSchedule;
use crate::node::{LaggedNode, SeriesKey};
use crate::panel::AssetPanel;

/// Columns of every source series of a panel, keyed by series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    columns: BTreeMap<SeriesKey, Vec<f64>>,
}

impl SeriesTable {
    pub fn from_panel(panel: &AssetPanel) -> Self {
        let columns = panel
            .source_series()
            .into_iter()
            .map(|k| {
                let col = panel.series(&k).expect("listed series");
                (k, col)
            })
            .collect();
        Self { dates: panel.dates().to_vec(), assets: panel.assets().to_vec(), columns }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn series_keys(&self) -> Vec<SeriesKey> {
        self.columns.keys().cloned().collect()
    }

    pub fn available(&self) -> BTreeSet<SeriesKey> {
        self.columns.keys().cloned().collect()
    }

    pub fn column(&self, key: &SeriesKey) -> Option<&[f64]> {
        self.columns.get(key).map(|c| c.as_slice())
    }

    /// Value of `node` as seen from origin day `t`: day `t + 1 − lag`.
    pub fn value(&self, node: &LaggedNode, origin: usize) -> Option<f64> {
        let day = (origin + 1).checked_sub(node.lag)?;
        self.columns.get(&node.series_key())?.get(day).copied()
    }
}

/// One forecast: inputs known at the close of day `origin`, targets on day
/// `origin + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub origin: usize,
    /// Index into [`SampleSet::plans`].
    pub plan: usize,
    /// Per token; target tokens carry 0.
    pub values: Vec<f64>,
    /// Next-day return per asset; empty when the day is beyond the panel.
    pub targets: Vec<f64>,
    /// Regime label at `origin`.
    pub label: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub dates: Vec<NaiveDate>,
    pub assets: Vec<String>,
    pub plans: Vec<WindowPlan>,
    /// Schedule graph index behind each plan.
    pub plan_graphs: Vec<usize>,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    /// Samples whose target day lies in `target_days` (panel day indices).
    /// Each sample uses the graph covering its origin date.
    pub fn build(
        table: &SeriesTable,
        labels: Option<&[u8]>,
        schedule: &GraphSchedule,
        target_days: Range<usize>,
        config: &ModelConfig,
        name: &'static str,
    ) -> Result<SampleSet> {
        if config.task.classification() && labels.is_none() {
            return Err(ModelError::NoLabels(config.task));
        }
        let mut set = SampleSet::empty(table);
        let first = target_days.start.max(config.max_lag);
        let last = target_days.end.min(table.dates.len());
        for target_day in first..last {
            let origin = target_day - 1;
            let label = labels.and_then(|l| l.get(origin)).map(|&v| v as f64);
            if config.task.classification() && label.is_none() {
                continue;
            }
            set.push(table, schedule, origin, label, config)?;
        }
        if set.samples.is_empty() {
            return Err(ModelError::NoSamples(name));
        }
        Ok(set)
    }

    /// A single forecast from the close of `date`.
    pub fn at_origin(
        table: &SeriesTable,
        labels: Option<&[u8]>,
        schedule: &GraphSchedule,
        date: NaiveDate,
        config: &ModelConfig,
    ) -> Result<SampleSet> {
        let origin =
            table.dates.binary_search(&date).map_err(|_| crate::granger::GrangerError::DateNotCovered(date))?;
        if origin + 1 < config.max_lag {
            return Err(ModelError::NoSamples("prediction"));
        }
        let mut set = SampleSet::empty(table);
        let label = labels.and_then(|l| l.get(origin)).map(|&v| v as f64);
        set.push(table, schedule, origin, label, config)?;
        Ok(set)
    }

    fn empty(table: &SeriesTable) -> SampleSet {
        SampleSet {
            dates: table.dates.clone(),
            assets: table.assets.clone(),
            plans: Vec::new(),
            plan_graphs: Vec::new(),
            samples: Vec::new(),
        }
    }

    fn push(
        &mut self,
        table: &SeriesTable,
        schedule: &GraphSchedule,
        origin: usize,
        label: Option<f64>,
        config: &ModelConfig,
    ) -> Result<()> {
        let g = schedule.index_for(table.dates[origin])?;
        let plan = match self.plan_graphs.iter().position(|&x| x == g) {
            Some(p) => p,
            None => {
                let available = table.available();
                self.plans.push(plan_window(&schedule.graphs[g], &table.assets, &available, config.use_causal_mask)?);
                self.plan_graphs.push(g);
                self.plans.len() - 1
            }
        };
        let tokens = &self.plans[plan].tokens;
        let nt = self.plans[plan].n_targets;
        let values = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| if i < nt { 0.0 } else { table.value(t, origin).expect("lag within history") })
            .collect();
        let targets = if origin + 1 < table.dates.len() {
            table
                .assets
                .iter()
                .map(|a| table.value(&LaggedNode::target(a.clone()), origin).expect("asset return"))
                .collect()
        } else {
            Vec::new()
        };
        self.samples.push(Sample { origin, plan, values, targets, label });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Date whose returns sample `i` forecasts.
    pub fn target_date(&self, i: usize) -> Option<NaiveDate> {
        self.dates.get(self.samples[i].origin + 1).copied()
    }

    pub fn origin_date(&self, i: usize) -> NaiveDate {
        self.dates[self.samples[i].origin]
    }

    pub fn plan_of(&self, i: usize) -> &WindowPlan {
        &self.plans[self.samples[i].plan]
    }
}
