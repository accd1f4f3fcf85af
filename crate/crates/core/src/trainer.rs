//! Training loop: per-sequence 80/20 split, minibatch Adam epochs, early
//! stopping on validation loss with a patience window, and aggregation over
//! many independent sequences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{to_raw_channels, LabeledImageSet};
use crate::nn::{
    self, adam_step, backward, canonical_network, forward, init_parameters, loss_softmax_xent,
    predict, Batch, NnError, Tensor,
};
use crate::seed;
use crate::stats;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub sequences: usize,
    /// Fraction of the data assigned to training; the split takes
    /// ceil(fraction * n) examples and validation gets the remainder.
    pub train_fraction: f64,
    /// Epochs without strict validation-loss improvement tolerated before
    /// stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub master_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            sequences: 100,
            train_fraction: 0.8,
            patience: 50,
            max_epochs: 500,
            batch_size: 32,
            learning_rate: nn::ADAM_LR,
            beta1: nn::ADAM_BETA1,
            beta2: nn::ADAM_BETA2,
            eps: nn::ADAM_EPS,
            master_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "train_fraction {} not in (0, 1)",
                self.train_fraction
            )));
        }
        if self.patience == 0 {
            return Err(TrainError::InvalidConfig("patience must be >= 1".into()));
        }
        if self.sequences == 0 || self.max_epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::InvalidConfig(
                "sequences, max_epochs, batch_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceMetrics {
    /// 1-based epoch with the lowest validation loss (earliest on ties).
    pub epoch_step: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub epoch_step: MetricSummary,
    pub train_loss: MetricSummary,
    pub train_acc: MetricSummary,
    pub val_loss: MetricSummary,
    pub val_acc: MetricSummary,
    pub sequences: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub aggregate: AggregateMetrics,
    pub sequences: Vec<SequenceMetrics>,
}

/// Train/validation sizes: ceil(fraction*n) and the remainder. The epsilon
/// keeps exact products like 0.8*5 = 4 from ceiling up through float dust.
pub fn split_sizes(n: usize, fraction: f64) -> (usize, usize) {
    let train = (fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
    let train = train.min(n);
    (train, n - train)
}

/// The shuffled index split used by sequence `seq_index`, exposed so tests
/// can reason about split composition without running a training loop.
pub fn split_indices(
    n: usize,
    fraction: f64,
    master_seed: u64,
    seq_index: u64,
) -> (Vec<usize>, Vec<usize>) {
    let seq_seed = seed::mix(master_seed, seq_index);
    let mut rng = seed::stream(seq_seed, 0);
    let mut order: Vec<usize> = (0..n).collect();
    seed::shuffle(&mut rng, &mut order);
    let (train, _) = split_sizes(n, fraction);
    let val = order.split_off(train);
    (order, val)
}

struct PreparedData {
    /// One row of 20*25*3 raw-byte channel values per image.
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    arity: usize,
}

fn prepare(images: &LabeledImageSet) -> PreparedData {
    PreparedData {
        rows: images.images.iter().map(|(img, _)| to_raw_channels(img)).collect(),
        labels: images.images.iter().map(|(_, l)| *l).collect(),
        arity: images.arity,
    }
}

fn assemble_batch(data: &PreparedData, idx: &[usize]) -> Batch {
    let sample = 20 * 25 * 3;
    let mut inputs = Tensor::zeros(&[idx.len(), 20, 25, 3]);
    let mut labels = Vec::with_capacity(idx.len());
    for (row, &i) in idx.iter().enumerate() {
        inputs.data[row * sample..(row + 1) * sample].copy_from_slice(&data.rows[i]);
        labels.push(data.labels[i]);
    }
    Batch { inputs, labels }
}

/// Full-pass loss and accuracy over `idx`, evaluated in chunks.
fn evaluate(
    net: &nn::NetworkSpec,
    params: &nn::Parameters,
    data: &PreparedData,
    idx: &[usize],
) -> Result<(f64, f64), TrainError> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in idx.chunks(256) {
        let batch = assemble_batch(data, chunk);
        let logits = predict(net, params, &batch.inputs)?;
        let (loss, _) = loss_softmax_xent(&logits, &batch.labels);
        loss_sum += loss * chunk.len() as f64;
        let k = data.arity;
        for (row, &label) in batch.labels.iter().enumerate() {
            let scores = &logits.data[row * k..(row + 1) * k];
            let pred = scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if pred == label {
                correct += 1;
            }
        }
    }
    let n = idx.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

/// One independent training sequence: shuffle, split, train with early
/// stopping, report metrics at the best-validation-loss epoch.
pub fn run_sequence(
    images: &LabeledImageSet,
    cfg: &TrainConfig,
    seq_index: u64,
) -> Result<SequenceMetrics, TrainError> {
    cfg.validate()?;
    let data = prepare(images);
    check_data(&data)?;
    run_prepared(&data, cfg, seq_index)
}

fn check_data(data: &PreparedData) -> Result<(), TrainError> {
    for label in 0..data.arity {
        let count = data.labels.iter().filter(|&&l| l == label).count();
        if count < 2 {
            return Err(TrainError::InsufficientData(format!(
                "label {label} has {count} examples, need at least 2"
            )));
        }
    }
    Ok(())
}

fn run_prepared(
    data: &PreparedData,
    cfg: &TrainConfig,
    seq_index: u64,
) -> Result<SequenceMetrics, TrainError> {
    let n = data.rows.len();
    let seq_seed = seed::mix(cfg.master_seed, seq_index);
    let (train_idx, val_idx) = split_indices(n, cfg.train_fraction, cfg.master_seed, seq_index);

    let net = canonical_network(data.arity);
    let mut params = init_parameters(&net, seed::mix(seq_seed, 1))?;
    let mut epoch_rng = seed::stream(seq_seed, 2);

    let mut history: Vec<EpochRecord> = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut stale = 0usize;
    let mut order = train_idx.clone();
    for epoch in 1..=cfg.max_epochs {
        seed::shuffle(&mut epoch_rng, &mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = assemble_batch(data, chunk);
            let (logits, cache) = forward(&net, &params, &batch)?;
            let (_, dlogits) = loss_softmax_xent(&logits, &batch.labels);
            let grads = backward(&net, &params, &cache, &dlogits, false);
            adam_step(
                &mut params,
                &grads,
                cfg.learning_rate,
                cfg.beta1,
                cfg.beta2,
                cfg.eps,
            );
        }
        let (train_loss, train_acc) = evaluate(&net, &params, data, &train_idx)?;
        // an empty validation split (only possible below 5 examples) falls
        // back to the training metrics so stopping stays well defined
        let (val_loss, val_acc) = if val_idx.is_empty() {
            (train_loss, train_acc)
        } else {
            evaluate(&net, &params, data, &val_idx)?
        };
        history.push(EpochRecord {
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        if best_epoch == 0 || val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let best = history[best_epoch - 1];
    Ok(SequenceMetrics {
        epoch_step: best_epoch,
        train_loss: best.train_loss,
        train_acc: best.train_acc,
        val_loss: best.val_loss,
        val_acc: best.val_acc,
        history,
    })
}

/// Lower-middle median, so the reported value is an epoch that occurred.
fn median_lower(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() - 1) / 2]
}

fn summarize(values: &[f64], lower_median: bool) -> MetricSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if lower_median {
        median_lower(&sorted)
    } else {
        stats::median(values)
    };
    MetricSummary {
        mean: stats::mean(values),
        median,
        sd: stats::sample_sd(values),
    }
}

/// Runs `cfg.sequences` independent sequences (in parallel when a rayon pool
/// offers threads) and aggregates mean/median/SD per metric. Sequence i uses
/// the derived seed mix(master_seed, i), so results do not depend on thread
/// scheduling.
pub fn run_experiment(
    images: &LabeledImageSet,
    cfg: &TrainConfig,
) -> Result<ExperimentResult, TrainError> {
    cfg.validate()?;
    let data = prepare(images);
    check_data(&data)?;
    let results: Result<Vec<SequenceMetrics>, TrainError> = (0..cfg.sequences as u64)
        .into_par_iter()
        .map(|i| run_prepared(&data, cfg, i))
        .collect();
    let sequences = results?;
    let aggregate = aggregate_metrics(&sequences);
    Ok(ExperimentResult {
        aggregate,
        sequences,
    })
}

pub fn aggregate_metrics(sequences: &[SequenceMetrics]) -> AggregateMetrics {
    let pull = |f: &dyn Fn(&SequenceMetrics) -> f64| -> Vec<f64> {
        sequences.iter().map(f).collect()
    };
    AggregateMetrics {
        epoch_step: summarize(&pull(&|s| s.epoch_step as f64), true),
        train_loss: summarize(&pull(&|s| s.train_loss), false),
        train_acc: summarize(&pull(&|s| s.train_acc), false),
        val_loss: summarize(&pull(&|s| s.val_loss), false),
        val_acc: summarize(&pull(&|s| s.val_acc), false),
        sequences: sequences.len(),
    }
}

/// History as CSV: one row per epoch plus a flag column marking the best
/// epoch.
pub fn emit_history(metrics: &SequenceMetrics) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc,best\n");
    for (i, rec) in metrics.history.iter().enumerate() {
        let epoch = i + 1;
        let best = u8::from(epoch == metrics.epoch_step);
        out.push_str(&format!(
            "{epoch},{},{},{},{},{best}\n",
            rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc
        ));
    }
    out
}
