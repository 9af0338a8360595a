//! Forecast metrics: MAE, regime accuracy, NDCG@k and causal alignment,
//! overall, per graph window, per day, and across seeds.

use std::fmt::Write as _;

use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

use crate::granger::{GraphSchedule, WindowRange};
use crate::model::{AlignmentAccumulator, CshtModel, ModelError, SampleSet};
use crate::panel::Moments;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    Shape(usize, usize),
    #[error("labels must be 0 or 1")]
    NotBinary,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("sample {0} has no realized targets")]
    NoTargets(usize),
    #[error("normalization moments cover {got} assets, expected {expected}")]
    Moments { got: usize, expected: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(EvalError::Shape(predictions.len(), targets.len()));
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / predictions.len() as f64)
}

pub fn regime_accuracy(predicted: &[u8], truth: &[u8]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(EvalError::Shape(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(EvalError::Empty);
    }
    if predicted.iter().chain(truth).any(|&l| l > 1) {
        return Err(EvalError::NotBinary);
    }
    Ok(predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / predicted.len() as f64)
}

/// Positions sorted by descending score; equal scores keep position order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// NDCG over the top `k` positions by predicted score, with gain
/// `rel / log₂(rank + 1)`. Equal scores rank by position, so callers order
/// assets by id. `k` is clamped to the number of assets. `None` when no
/// asset is relevant.
pub fn ndcg_at_k(scores: &[f64], relevance: &[f64], k: usize) -> Result<Option<f64>> {
    if scores.len() != relevance.len() {
        return Err(EvalError::Shape(scores.len(), relevance.len()));
    }
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let k = k.min(scores.len());
    let gain = |rank: usize, rel: f64| rel / ((rank + 2) as f64).log2();
    let dcg: f64 = ranking(scores).iter().take(k).enumerate().map(|(r, &i)| gain(r, relevance[i])).sum();
    let mut ideal = relevance.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(r, &rel)| gain(r, rel)).sum();
    Ok((idcg > 0.0).then(|| dcg / idcg))
}

/// Binary relevance marking the `k` largest realized returns.
pub fn top_k_relevance(realized: &[f64], k: usize) -> Vec<f64> {
    let mut rel = vec![0.0; realized.len()];
    for &i in ranking(realized).iter().take(k) {
        rel[i] = 1.0;
    }
    rel
}

/// Output of a forecaster for one sample, in model (normalized) units.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prediction {
    pub returns: Vec<f64>,
    pub logit: Option<f64>,
    pub alignment: AlignmentAccumulator,
}

pub trait Predictor: Sync {
    fn predict(&self, set: &SampleSet, i: usize) -> Result<Prediction>;
}

impl Predictor for CshtModel {
    fn predict(&self, set: &SampleSet, i: usize) -> Result<Prediction> {
        let s = &set.samples[i];
        let plan = &set.plans[s.plan];
        let (out, attention) = self.forward(plan, &s.values)?;
        let mut alignment = AlignmentAccumulator::default();
        alignment.add(&attention, plan);
        Ok(Prediction {
            returns: out.returns,
            logit: self.config().task.classification().then_some(out.logit),
            alignment,
        })
    }
}

/// Returns the realized targets and the true regime.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&self, set: &SampleSet, i: usize) -> Result<Prediction> {
        let s = &set.samples[i];
        Ok(Prediction {
            returns: s.targets.clone(),
            logit: s.label.map(|l| if l > 0.5 { 1.0 } else { -1.0 }),
            alignment: AlignmentAccumulator::default(),
        })
    }
}

/// Predicts a fixed per-asset value (model units) every day.
pub struct ConstantPredictor(pub Vec<f64>);

impl ConstantPredictor {
    /// Predicts a raw return of zero for every asset.
    pub fn zero_return(moments: &[Moments]) -> Self {
        Self(moments.iter().map(|m| m.normalize(0.0)).collect())
    }
}

impl Predictor for ConstantPredictor {
    fn predict(&self, _set: &SampleSet, _i: usize) -> Result<Prediction> {
        Ok(Prediction { returns: self.0.clone(), logit: None, alignment: AlignmentAccumulator::default() })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricSet {
    pub mae: f64,
    pub regime_accuracy: Option<f64>,
    pub ndcg: Option<f64>,
    pub alignment: Option<f64>,
    pub days: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DayRecord {
    pub date: NaiveDate,
    pub window: usize,
    pub mae: f64,
    pub ndcg: Option<f64>,
    pub regime_correct: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowMetrics {
    pub window: WindowRange,
    pub metrics: MetricSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub k: usize,
    pub overall: MetricSet,
    pub per_window: Vec<WindowMetrics>,
    pub per_day: Vec<DayRecord>,
}

struct DayResult {
    abs_err: Vec<f64>,
    ndcg: Option<f64>,
    correct: Option<bool>,
    alignment: AlignmentAccumulator,
}

fn summarize(days: &[&DayResult]) -> MetricSet {
    let errs: Vec<f64> = days.iter().flat_map(|d| d.abs_err.iter().copied()).collect();
    let mean_of = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let mut alignment = AlignmentAccumulator::default();
    for d in days {
        alignment.merge(&d.alignment);
    }
    MetricSet {
        mae: mean_of(errs).unwrap_or(f64::NAN),
        regime_accuracy: mean_of(days.iter().filter_map(|d| d.correct.map(|c| if c { 1.0 } else { 0.0 })).collect()),
        ndcg: mean_of(days.iter().filter_map(|d| d.ndcg).collect()),
        alignment: alignment.value(),
        days: days.len(),
    }
}

/// Scores `predictor` on every sample of `set`. With `moments` (one per
/// asset), predictions and targets are mapped back to raw returns before the
/// MAE. NDCG relevance is the realized top-`k` of each day, averaged over
/// days.
pub fn evaluate(
    predictor: &dyn Predictor,
    set: &SampleSet,
    schedule: &GraphSchedule,
    moments: Option<&[Moments]>,
    k: usize,
) -> Result<EvalReport> {
    if set.is_empty() {
        return Err(EvalError::Empty);
    }
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if let Some(m) = moments {
        if m.len() != set.assets.len() {
            return Err(EvalError::Moments { got: m.len(), expected: set.assets.len() });
        }
    }
    let mut by_id: Vec<usize> = (0..set.assets.len()).collect();
    by_id.sort_by(|&a, &b| set.assets[a].cmp(&set.assets[b]));

    let results: Vec<DayResult> = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let s = &set.samples[i];
            if s.targets.is_empty() {
                return Err(EvalError::NoTargets(i));
            }
            let p = predictor.predict(set, i)?;
            if p.returns.len() != s.targets.len() {
                return Err(EvalError::Shape(p.returns.len(), s.targets.len()));
            }
            let raw = |v: &[f64]| -> Vec<f64> {
                match moments {
                    Some(m) => v.iter().zip(m).map(|(x, mo)| mo.denormalize(*x)).collect(),
                    None => v.to_vec(),
                }
            };
            let (pred, truth) = (raw(&p.returns), raw(&s.targets));
            let abs_err = pred.iter().zip(&truth).map(|(a, b)| (a - b).abs()).collect();
            let scores: Vec<f64> = by_id.iter().map(|&a| pred[a]).collect();
            let realized: Vec<f64> = by_id.iter().map(|&a| truth[a]).collect();
            let relevance = top_k_relevance(&realized, k.min(realized.len()));
            let ndcg = ndcg_at_k(&scores, &relevance, k)?;
            let correct = match (p.logit, s.label) {
                (Some(z), Some(l)) => Some((z > 0.0) == (l > 0.5)),
                _ => None,
            };
            Ok(DayResult { abs_err, ndcg, correct, alignment: p.alignment })
        })
        .collect::<Result<_>>()?;

    let window_of = |i: usize| set.plan_graphs[set.samples[i].plan];
    let all: Vec<&DayResult> = results.iter().collect();
    let mut windows: Vec<usize> = (0..set.len()).map(window_of).collect();
    windows.sort_unstable();
    windows.dedup();
    let per_window = windows
        .into_iter()
        .map(|w| {
            let days: Vec<&DayResult> = (0..set.len()).filter(|&i| window_of(i) == w).map(|i| &results[i]).collect();
            WindowMetrics { window: schedule.graphs[w].window, metrics: summarize(&days) }
        })
        .collect();
    let per_day = results
        .iter()
        .enumerate()
        .map(|(i, r)| DayRecord {
            date: set.target_date(i).expect("realized targets imply a next day"),
            window: window_of(i),
            mae: r.abs_err.iter().sum::<f64>() / r.abs_err.len() as f64,
            ndcg: r.ndcg,
            regime_correct: r.correct,
        })
        .collect();
    Ok(EvalReport { k, overall: summarize(&all), per_window, per_day })
}

fn opt(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ =
            writeln!(out, "# NDCG@{} averaged per day; relevance = realized top-{} next-day returns", self.k, self.k);
        let _ = writeln!(
            out,
            "{:<26} {:>10} {:>10} {:>10} {:>10} {:>6}",
            "scope", "mae", "accuracy", "ndcg", "alignment", "days"
        );
        let mut row = |scope: String, m: &MetricSet| {
            let _ = writeln!(
                out,
                "{:<26} {:>10.6} {:>10} {:>10} {:>10} {:>6}",
                scope,
                m.mae,
                opt(m.regime_accuracy),
                opt(m.ndcg),
                opt(m.alignment),
                m.days
            );
        };
        row("overall".into(), &self.overall);
        for w in &self.per_window {
            row(format!("{}..{}", w.window.start, w.window.end), &w.metrics);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,window_start,window_end,mae,regime_accuracy,ndcg,alignment,days\n");
        let mut row = |scope: &str, w: Option<&WindowRange>, m: &MetricSet| {
            let (s, e) = w.map_or((String::new(), String::new()), |w| (w.start.to_string(), w.end.to_string()));
            let _ = writeln!(
                out,
                "{scope},{s},{e},{},{},{},{},{}",
                m.mae,
                opt(m.regime_accuracy),
                opt(m.ndcg),
                opt(m.alignment),
                m.days
            );
        };
        row("overall", None, &self.overall);
        for w in &self.per_window {
            row("window", Some(&w.window), &w.metrics);
        }
        out
    }

    pub fn per_day_csv(&self) -> String {
        let mut out = String::from("date,window,mae,ndcg,regime_correct\n");
        for d in &self.per_day {
            let c = d.regime_correct.map_or("NA".to_string(), |c| (c as u8).to_string());
            let _ = writeln!(out, "{},{},{},{},{}", d.date, d.window, d.mae, opt(d.ndcg), c);
        }
        out
    }
}

/// Mean and sample standard deviation of each metric across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub runs: Vec<MetricSet>,
    /// `(mean, stdev)` per metric; `None` where no run defines the metric.
    pub mae: (f64, f64),
    pub regime_accuracy: Option<(f64, f64)>,
    pub ndcg: Option<(f64, f64)>,
    pub alignment: Option<(f64, f64)>,
}

fn mean_stdev(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    Some((mean, sd))
}

impl SeedSummary {
    pub fn new(runs: Vec<(u64, MetricSet)>) -> Result<Self> {
        if runs.is_empty() {
            return Err(EvalError::Empty);
        }
        let (seeds, runs): (Vec<u64>, Vec<MetricSet>) = runs.into_iter().unzip();
        let collect =
            |f: &dyn Fn(&MetricSet) -> Option<f64>| mean_stdev(&runs.iter().filter_map(f).collect::<Vec<_>>());
        Ok(Self {
            mae: collect(&|m| Some(m.mae)).expect("non-empty"),
            regime_accuracy: collect(&|m| m.regime_accuracy),
            ndcg: collect(&|m| m.ndcg),
            alignment: collect(&|m| m.alignment),
            seeds,
            runs,
        })
    }

    pub fn to_table(&self) -> String {
        let fmt = |v: Option<(f64, f64)>| v.map_or("NA".to_string(), |(m, s)| format!("{m:.6} ± {s:.6}"));
        let mut out = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "# seeds: {}", seeds.join(", "));
        let _ = writeln!(out, "mae        {}", fmt(Some(self.mae)));
        let _ = writeln!(out, "accuracy   {}", fmt(self.regime_accuracy));
        let _ = writeln!(out, "ndcg       {}", fmt(self.ndcg));
        let _ = writeln!(out, "alignment  {}", fmt(self.alignment));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,stdev\n");
        for (name, v) in [
            ("mae", Some(self.mae)),
            ("regime_accuracy", self.regime_accuracy),
            ("ndcg", self.ndcg),
            ("alignment", self.alignment),
        ] {
            match v {
                Some((m, s)) => writeln!(out, "{name},{m},{s}"),
                None => writeln!(out, "{name},NA,NA"),
            }
            .expect("string write");
        }
        out
    }
}
