//! Optimization and evaluation: Adam, losses, the mini-batch epoch loop and
//! metric records.

mod adam;
mod loss;
mod metrics;

use std::time::Instant;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use loss::{argmax, cross_entropy, cross_entropy_loss, mse, mse_loss, perplexity, probabilities};
pub use metrics::{
    mean_std, parse_csv, write_csv, write_json_lines, Metric, MetricsRecord, Split, CSV_HEADER,
};

use crate::error::{Error, Result};
use crate::params::{Bound, ParamStore};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Seed streams derived from a run's single seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DATA: u64 = 3;
}

/// Running sums collected while evaluating a model on samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stats {
    pub loss_sum: f64,
    pub sequences: usize,
    pub squared_error: f64,
    pub elements: usize,
    pub cross_entropy: f64,
    pub tokens: usize,
    pub correct: usize,
    pub examples: usize,
    pub depths: Vec<usize>,
}

impl Stats {
    pub fn merge(&mut self, other: Stats) {
        self.loss_sum += other.loss_sum;
        self.sequences += other.sequences;
        self.squared_error += other.squared_error;
        self.elements += other.elements;
        self.cross_entropy += other.cross_entropy;
        self.tokens += other.tokens;
        self.correct += other.correct;
        self.examples += other.examples;
        self.depths.extend(other.depths);
    }

    pub fn mean_depth(&self) -> Option<f64> {
        (!self.depths.is_empty())
            .then(|| self.depths.iter().sum::<usize>() as f64 / self.depths.len() as f64)
    }

    pub fn value(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Mse => (self.elements > 0).then(|| self.squared_error / self.elements as f64),
            Metric::Accuracy => (self.examples > 0).then(|| self.correct as f64 / self.examples as f64),
            Metric::CrossEntropy => (self.tokens > 0).then(|| self.cross_entropy / self.tokens as f64),
            Metric::Perplexity => perplexity(self.cross_entropy, self.tokens).ok(),
            Metric::MeanDepth => self.mean_depth(),
        }
    }
}

/// Output of one differentiable forward pass over a sample.
pub struct Forward {
    pub loss: Var,
    pub stats: Stats,
}

/// A trainable model over samples of type `Self::Sample`.
pub trait Model {
    type Sample;

    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Builds the scalar loss for one sample; the batch loss is the mean of these.
    fn forward(&self, tape: &mut Tape, p: &Bound, sample: &Self::Sample) -> Result<Forward>;
    /// Metrics reported by `evaluate`, the first one drives model selection.
    fn metrics(&self) -> &'static [Metric];
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    /// Validate every this many epochs (the last epoch is always validated).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 20,
            epochs: 100,
            learning_rate: 0.01,
            seed: 0,
            clip_norm: None,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "batch size, epochs and eval cadence must be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub values: Vec<(Metric, f64)>,
    pub stats: Stats,
}

impl EvalReport {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.values.iter().find(|(m, _)| *m == metric).map(|(_, v)| *v)
    }
}

pub fn evaluate<M: Model>(model: &M, samples: &[M::Sample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Contract("cannot evaluate on an empty split".into()));
    }
    let mut stats = Stats::default();
    for s in samples {
        let mut tape = Tape::new();
        let p = model.store().bind(&mut tape);
        let fwd = model.forward(&mut tape, &p, s)?;
        stats.loss_sum += tape.value(fwd.loss).item()?;
        stats.sequences += 1;
        stats.merge(fwd.stats);
    }
    let mut values: Vec<(Metric, f64)> = model
        .metrics()
        .iter()
        .filter_map(|&m| stats.value(m).map(|v| (m, v)))
        .collect();
    if let Some(d) = stats.mean_depth() {
        if !model.metrics().contains(&Metric::MeanDepth) {
            values.push((Metric::MeanDepth, d));
        }
    }
    Ok(EvalReport { values, stats })
}

/// Mean gradient and statistics of one mini-batch, reduced in sample order.
pub fn batch_gradients<M: Model>(model: &M, batch: &[&M::Sample]) -> Result<(Vec<Tensor>, Stats)> {
    let store = model.store();
    let mut total: Vec<Tensor> = store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut stats = Stats::default();
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let fwd = model.forward(&mut tape, &p, s)?;
        let loss = tape.value(fwd.loss).item()?;
        if !loss.is_finite() {
            return Err(Error::Numerical("non-finite loss".into()));
        }
        let grads = tape.backward(fwd.loss)?;
        for (acc, g) in total.iter_mut().zip(store.gradients(&p, &grads)) {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += scale * b;
            }
        }
        stats.loss_sum += loss;
        stats.sequences += 1;
        stats.merge(fwd.stats);
    }
    Ok((total, stats))
}

/// Result of `train_epochs`. The model is left holding `best`.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub best: ParamStore,
    pub best_epoch: usize,
    pub best_value: f64,
    pub selection: Metric,
}

/// Identifies a run in emitted records.
#[derive(Clone, Debug)]
pub struct RunId {
    pub name: String,
    pub seed: u64,
}

/// Mini-batch Adam training with per-epoch seeded shuffling and
/// best-validation checkpoint retention.
///
/// `on_record` sees every record as it is produced; returning `true` from
/// `stop` after a validation pass ends training early.
pub fn train_epochs<M: Model>(
    model: &mut M,
    train: &[M::Sample],
    val: &[M::Sample],
    cfg: &TrainConfig,
    run: &RunId,
    mut on_record: impl FnMut(&MetricsRecord),
    mut stop: impl FnMut(usize, &EvalReport) -> bool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("training split is empty".into()));
    }
    let selection = model.metrics()[0];
    let start = Instant::now();
    let mut records = Vec::new();
    let mut emit = |records: &mut Vec<MetricsRecord>, epoch, split, metric, value| {
        let r = MetricsRecord {
            run: run.name.clone(),
            seed: run.seed,
            epoch,
            split,
            metric,
            value,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_record(&r);
        records.push(r);
    };
    let mut adam = AdamState::new(model.store(), AdamConfig::with_lr(cfg.learning_rate));
    let mut shuffle_rng = Rng::derive(cfg.seed, streams::SHUFFLE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(usize, f64, ParamStore)> = None;

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_stats = Stats::default();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&M::Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let at = |e: Error| match e {
                Error::Numerical(msg) => {
                    Error::Numerical(format!("epoch {epoch}, batch {}: {msg}", b + 1))
                }
                other => other,
            };
            let (mut grads, stats) = batch_gradients(model, &batch).map_err(at)?;
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam.update(model.store_mut(), &grads).map_err(at)?;
            epoch_stats.merge(stats);
        }
        let train_loss = epoch_stats.loss_sum / epoch_stats.sequences.max(1) as f64;
        emit(&mut records, epoch, Split::Train, loss_metric(model.metrics()), train_loss);
        if let Some(d) = epoch_stats.mean_depth() {
            emit(&mut records, epoch, Split::Train, Metric::MeanDepth, d);
        }

        if val.is_empty() || (epoch % cfg.eval_every != 0 && epoch != cfg.epochs) {
            if val.is_empty() {
                best = Some((epoch, train_loss, model.store().clone()));
            }
            continue;
        }
        let report = evaluate(model, val)?;
        for &(m, v) in &report.values {
            emit(&mut records, epoch, Split::Val, m, v);
        }
        let score = report
            .get(selection)
            .ok_or_else(|| Error::Contract(format!("model did not report {selection}")))?;
        if !score.is_finite() {
            return Err(Error::Numerical(format!("epoch {epoch}: validation {selection} is {score}")));
        }
        if best.as_ref().map_or(true, |(_, b, _)| selection.improves(score, *b)) {
            best = Some((epoch, score, model.store().clone()));
        }
        if stop(epoch, &report) {
            break;
        }
    }
    let (best_epoch, best_value, best) = best.expect("at least one epoch ran");
    model.store_mut().load_values_from(&best)?;
    Ok(TrainOutcome {
        records,
        best,
        best_epoch,
        best_value,
        selection: if val.is_empty() { loss_metric(model.metrics()) } else { selection },
    })
}

fn loss_metric(metrics: &[Metric]) -> Metric {
    if metrics.contains(&Metric::Mse) {
        Metric::Mse
    } else {
        Metric::CrossEntropy
    }
}

#[cfg(test)]
mod tests;
