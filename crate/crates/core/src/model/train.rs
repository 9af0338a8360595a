use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::info;
use rayon::prelude::*;

use super::alignment::AlignmentAccumulator;
use super::data::{Sample, SampleSet};
use super::mask::WindowPlan;
use super::network::{AttentionWeights, CshtModel, Gradients, Output};
use super::{ModelError, Result, Task};
use crate::node::Modality;
use crate::rng::{SeededRng, Stream};
use crate::sphere::SphereEmbedding;

const DIVERGENCE_LOSS: f64 = 1e6;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(ModelError::Shape(predictions.len(), targets.len()));
    }
    Ok(predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / predictions.len() as f64)
}

/// Binary cross-entropy of a logit against a 0/1 label, computed stably.
pub fn bce_with_logits(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn sample_loss(out: &Output, sample: &Sample, task: Task, index: usize) -> Result<f64> {
    if out.returns.iter().any(|v| v.is_nan()) || out.logit.is_nan() {
        return Err(ModelError::NanPrediction(index));
    }
    let mut l = 0.0;
    if task.regression() {
        l += mse(&out.returns, &sample.targets)?;
    }
    if task.classification() {
        l += bce_with_logits(out.logit, sample.label.ok_or(ModelError::NoLabels(task))?);
    }
    Ok(l)
}

/// Mean per-sample loss: MSE over assets for regression, BCE on the regime
/// logit for classification, their sum for both.
pub fn loss(outputs: &[Output], samples: &[Sample], task: Task) -> Result<f64> {
    if outputs.len() != samples.len() || outputs.is_empty() {
        return Err(ModelError::Shape(outputs.len(), samples.len()));
    }
    let mut total = 0.0;
    for (i, (o, s)) in outputs.iter().zip(samples).enumerate() {
        total += sample_loss(o, s, task, i)?;
    }
    Ok(total / outputs.len() as f64)
}

/// Receives the attention weights of every forward pass made while training.
pub trait AttentionObserver: Sync {
    fn observe(&self, plan: &WindowPlan, attention: &AttentionWeights);
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Validation causal alignment.
    pub alignment: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    /// Epoch 0 holds the losses before any update.
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    /// Record of the epoch whose parameters were kept.
    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_loss,alignment\n");
        for r in &self.records {
            let a = r.alignment.map_or(String::new(), |a| a.to_string());
            let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.valid_loss, a);
        }
        out
    }

    pub fn initial_train_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.train_loss)
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_loss)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            if lr != 0.0 {
                params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

impl CshtModel {
    /// Loss of one sample and its gradients, with `values` as the inputs.
    pub fn loss_gradients(&self, plan: &WindowPlan, values: &[f64], sample: &Sample) -> Result<(f64, Gradients)> {
        self.sample_gradients(plan, values, sample, 0, None)
    }

    /// Loss of one sample with `values` as the inputs.
    pub fn sample_loss(&self, plan: &WindowPlan, values: &[f64], sample: &Sample) -> Result<f64> {
        let (out, _) = self.forward(plan, values)?;
        sample_loss(&out, sample, self.config().task, 0)
    }

    fn sample_gradients(
        &self,
        plan: &WindowPlan,
        values: &[f64],
        sample: &Sample,
        index: usize,
        observer: Option<&dyn AttentionObserver>,
    ) -> Result<(f64, Gradients)> {
        let task = self.config().task;
        let (out, trace) = self.forward_trace(plan, values)?;
        if let Some(o) = observer {
            o.observe(plan, trace.attention());
        }
        let l = sample_loss(&out, sample, task, index)?;
        let d_returns: Vec<f64> = if task.regression() {
            let n = out.returns.len() as f64;
            out.returns.iter().zip(&sample.targets).map(|(p, t)| 2.0 * (p - t) / n).collect()
        } else {
            vec![0.0; out.returns.len()]
        };
        let d_logit = if task.classification() { sigmoid(out.logit) - sample.label.unwrap_or(0.0) } else { 0.0 };
        Ok((l, self.backward(&trace, &d_returns, d_logit)))
    }

    /// Mean loss and validation alignment over a whole set.
    pub fn full_pass(&self, set: &SampleSet, observer: Option<&dyn AttentionObserver>) -> Result<(f64, Option<f64>)> {
        let task = self.config().task;
        let per_sample: Vec<(f64, AlignmentAccumulator)> = set
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let plan = &set.plans[s.plan];
                let (out, attention) = self.forward(plan, &s.values)?;
                if let Some(o) = observer {
                    o.observe(plan, &attention);
                }
                let mut acc = AlignmentAccumulator::default();
                acc.add(&attention, plan);
                Ok((sample_loss(&out, s, task, i)?, acc))
            })
            .collect::<Result<_>>()?;
        let mut total = 0.0;
        let mut acc = AlignmentAccumulator::default();
        for (l, a) in &per_sample {
            total += l;
            acc.merge(a);
        }
        Ok((total / per_sample.len() as f64, acc.value()))
    }
}

fn diverged(loss: f64) -> bool {
    !(loss <= DIVERGENCE_LOSS)
}

/// Minibatch training with early stopping on validation loss.
///
/// Dense parameters follow Adam; each embedding row with a nonzero gradient
/// takes the projected step `e ← Π(e − η ∇e)`. Per-sample gradients are
/// computed in parallel and summed in sample order, so runs are repeatable.
/// The parameters of the best validation epoch are restored at the end.
pub fn train(
    model: &mut CshtModel,
    train_set: &SampleSet,
    valid_set: &SampleSet,
    observer: Option<&dyn AttentionObserver>,
) -> Result<TrainLog> {
    let cfg = model.config().clone();
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::NoSamples("training"));
    }
    if valid_set.is_empty() {
        return Err(ModelError::NoSamples("validation"));
    }
    let mut adam = Adam::new(model.params().len());
    let mut batch_rng = SeededRng::new(cfg.seed, Stream::Batching);
    let mut noise_rng = SeededRng::new(cfg.seed, Stream::Noise);
    let mut log = TrainLog::default();

    let (train0, _) = model.full_pass(train_set, observer)?;
    let (valid0, align0) = model.full_pass(valid_set, observer)?;
    log.records.push(EpochRecord { epoch: 0, train_loss: train0, valid_loss: valid0, alignment: align0 });
    if diverged(train0) || diverged(valid0) {
        return Err(ModelError::Diverged { epoch: 0, loss: train0.max(valid0), log: Box::new(log) });
    }
    let mut best: (f64, Vec<f64>, SphereEmbedding) = (valid0, model.params().to_vec(), model.embedding().clone());
    let mut waited = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        batch_rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| {
                    let s = &train_set.samples[i];
                    let plan = &train_set.plans[s.plan];
                    let mut v = s.values.clone();
                    if cfg.input_noise > 0.0 {
                        for (x, t) in v.iter_mut().zip(&plan.tokens).skip(plan.n_targets) {
                            if matches!(t.modality, Modality::Sentiment | Modality::News) {
                                *x += cfg.input_noise * noise_rng.normal();
                            }
                        }
                    }
                    v
                })
                .collect();
            let snapshot: &CshtModel = model;
            let grads: Vec<(f64, Gradients)> = batch
                .par_iter()
                .zip(inputs.par_iter())
                .map(|(&i, values)| {
                    let s = &train_set.samples[i];
                    snapshot.sample_gradients(&train_set.plans[s.plan], values, s, i, observer)
                })
                .collect::<Result<_>>()?;

            let scale = 1.0 / batch.len() as f64;
            let mut dense = vec![0.0; model.params().len()];
            let mut rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut batch_loss = 0.0;
            for (l, g) in grads {
                batch_loss += l * scale;
                for (a, b) in dense.iter_mut().zip(&g.params) {
                    *a += b * scale;
                }
                for (row, rg) in g.embedding {
                    let acc = rows.entry(row).or_insert_with(|| vec![0.0; rg.len()]);
                    for (a, b) in acc.iter_mut().zip(&rg) {
                        *a += b * scale;
                    }
                }
            }
            if diverged(batch_loss) {
                return Err(ModelError::Diverged { epoch, loss: batch_loss, log: Box::new(log) });
            }
            adam.update(model.params_mut(), &dense, cfg.learning_rate);
            if cfg.learning_rate != 0.0 {
                for (row, g) in rows {
                    if g.iter().any(|x| *x != 0.0) {
                        model.embedding_mut().step_row(row, &g, cfg.learning_rate)?;
                    }
                }
            }
        }

        let (train_loss, _) = model.full_pass(train_set, observer)?;
        let (valid_loss, alignment) = model.full_pass(valid_set, observer)?;
        log.records.push(EpochRecord { epoch, train_loss, valid_loss, alignment });
        info!("csht-model: epoch {epoch} train {train_loss:.6} valid {valid_loss:.6}");
        if diverged(train_loss) || diverged(valid_loss) {
            return Err(ModelError::Diverged { epoch, loss: train_loss.max(valid_loss), log: Box::new(log) });
        }
        if valid_loss < best.0 {
            best = (valid_loss, model.params().to_vec(), model.embedding().clone());
            log.best_epoch = epoch;
            waited = 0;
        } else {
            waited += 1;
            if waited >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    model.params_mut().copy_from_slice(&best.1);
    *model.embedding_mut() = best.2;
    Ok(log)
}
