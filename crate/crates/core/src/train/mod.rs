//! Minibatch training with Nesterov momentum and plateau-based learning-rate halving.

mod absorb;
mod schedule;
mod sgd;
mod source;

pub use absorb::absorb_bottleneck;
pub use schedule::{Action, LrSchedule, StopReason, COOLDOWN, MAX_REDUCTION, PATIENCE, STOP_AFTER};
pub use sgd::{nesterov_update, Nesterov};
pub use source::{EpochData, LabeledSource, MemorySource, Targets, TrainSource, TransferSource};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::ops::{l2_logit_loss, softmax_xent};
use crate::tensor::{Layer, ModelGraph, Tensor, NUM_CLASSES};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Cross-entropy on class labels.
    SoftmaxXent,
    /// Squared error on teacher logits.
    L2Logit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// One rate per dropout layer; empty keeps the model's own rates.
    pub dropout_rates: Vec<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Multiplier on every (normalized) input value. Folded into the first layer's
    /// weights when training ends, so the returned model takes unscaled inputs.
    pub input_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            dropout_rates: Vec::new(),
            batch_size: 128,
            max_epochs: 500,
            input_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_err: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_val_err: f64,
    /// 0 means the initial weights were never beaten.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub wall_seconds: f64,
}

/// Normalized evaluation inputs with labels.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub inputs: Tensor<f32>,
    pub labels: Vec<usize>,
}

impl EvalSet {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let idx: Vec<usize> = (0..ds.len()).collect();
        Self {
            inputs: ds.normalized_batch(&idx),
            labels: ds.labels.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

const EVAL_BATCH: usize = 500;

fn scaled(x: &Tensor<f32>, s: f64) -> Tensor<f32> {
    if s == 1.0 {
        x.clone()
    } else {
        let s = s as f32;
        x.map(|v| v * s)
    }
}

/// Index of the largest logit in each row (first on ties).
pub fn argmax_rows(logits: &Tensor<f32>) -> Vec<usize> {
    let (n, _) = logits.dims2();
    (0..n)
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Accuracy and mean cross-entropy of `logits` against labels.
pub fn score_logits(logits: &Tensor<f32>, labels: &[usize]) -> Result<Evaluation> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty set"));
    }
    let pred = argmax_rows(logits);
    let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    let (loss, _) = softmax_xent(logits, labels)?;
    Ok(Evaluation {
        accuracy: correct as f64 / labels.len() as f64,
        mean_loss: loss as f64,
    })
}

/// Evaluation-mode accuracy and mean loss.
pub fn evaluate(model: &ModelGraph<f32>, set: &EvalSet) -> Result<Evaluation> {
    evaluate_scaled(model, set, 1.0)
}

fn evaluate_scaled(model: &ModelGraph<f32>, set: &EvalSet, input_scale: f64) -> Result<Evaluation> {
    if set.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty set"));
    }
    let logits = model.predict_batched(&scaled(&set.inputs, input_scale), EVAL_BATCH)?;
    score_logits(&logits, &set.labels)
}

/// Multiply the first parameterized layer's weights by `s`, so the model computes on
/// `x` what it previously computed on `s * x`.
pub fn fold_input_scale(model: &mut ModelGraph<f32>, s: f64) -> Result<()> {
    if s == 1.0 {
        return Ok(());
    }
    let s = s as f32;
    let first = model
        .layers
        .iter_mut()
        .find(|l| matches!(l, Layer::Conv(_) | Layer::Dense(_)))
        .ok_or_else(|| Error::invalid("model has no parameterized layer"))?;
    let w = match first {
        Layer::Conv(c) => &mut c.weight,
        Layer::Dense(d) => &mut d.weight,
        _ => unreachable!(),
    };
    w.value.data_mut().iter_mut().for_each(|v| *v *= s);
    Ok(())
}

fn gather(data: &EpochData, idx: &[usize]) -> Result<Tensor<f32>> {
    let per: usize = data.sample_shape.iter().product();
    let mut out = Vec::with_capacity(idx.len() * per);
    for &i in idx {
        out.extend_from_slice(&data.images[i * per..(i + 1) * per]);
    }
    let mut shape = vec![idx.len()];
    shape.extend_from_slice(&data.sample_shape);
    Tensor::new(shape, out)
}

fn check_config(cfg: &TrainConfig) -> Result<()> {
    if !(cfg.initial_lr > 0.0 && cfg.initial_lr.is_finite()) {
        return Err(Error::invalid(format!(
            "initial learning rate must be positive, got {}",
            cfg.initial_lr
        )));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::invalid("batch size and max epochs must be positive"));
    }
    if !(cfg.input_scale > 0.0 && cfg.input_scale.is_finite()) {
        return Err(Error::invalid("input scale must be positive"));
    }
    Ok(())
}

/// Train until the schedule stops or `max_epochs` pass. The model is left holding
/// the weights with the lowest validation error. On divergence those weights are
/// restored and [`Error::Diverged`] is returned.
pub fn train(
    model: &mut ModelGraph<f32>,
    source: &mut dyn TrainSource,
    val: &EvalSet,
    cfg: &TrainConfig,
    loss: Loss,
) -> Result<TrainOutcome> {
    train_with_callback(model, source, val, cfg, loss, |_| {})
}

/// [`train`] with a hook called after every epoch.
pub fn train_with_callback(
    model: &mut ModelGraph<f32>,
    source: &mut dyn TrainSource,
    val: &EvalSet,
    cfg: &TrainConfig,
    loss: Loss,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    check_config(cfg)?;
    let started = Instant::now();
    if !cfg.dropout_rates.is_empty() {
        model.set_dropout_rates(&cfg.dropout_rates)?;
    }
    let mut opt = Nesterov::new(model, cfg.momentum, cfg.weight_decay)?;
    model.set_training(false);
    let baseline = 1.0 - evaluate_scaled(model, val, cfg.input_scale)?.accuracy;
    let mut sched = LrSchedule::with_baseline(cfg.initial_lr, baseline);
    let mut best = (baseline, 0usize, model.snapshot());
    let mut history = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut dropout_rng = RngStream::new(cfg.seed).named("dropout");

    for epoch in 1..=cfg.max_epochs {
        let data = source.epoch(epoch - 1)?;
        match (&data.targets, loss) {
            (Targets::Labels(_), Loss::SoftmaxXent) | (Targets::Logits(_), Loss::L2Logit) => {}
            _ => return Err(Error::invalid("loss does not match the target type of the source")),
        }
        let lr = sched.current_lr;
        model.set_training(true);
        let mut total = 0.0f64;
        let result: Result<()> = (|| {
            for chunk in data.order.chunks(cfg.batch_size) {
                let x = scaled(&gather(&data, chunk)?, cfg.input_scale);
                let out = model.forward(&x, &mut dropout_rng)?;
                let (l, grad) = match &data.targets {
                    Targets::Labels(labels) => {
                        let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                        softmax_xent(&out, &y)?
                    }
                    Targets::Logits(z) => {
                        let mut t = Vec::with_capacity(chunk.len() * NUM_CLASSES);
                        for &i in chunk {
                            t.extend_from_slice(&z[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]);
                        }
                        l2_logit_loss(&out, &Tensor::new(vec![chunk.len(), NUM_CLASSES], t)?)?
                    }
                };
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!("training loss is {l}")));
                }
                total += l as f64 * chunk.len() as f64;
                model.zero_grad();
                model.backward(&grad)?;
                opt.step(model, lr)?;
            }
            Ok(())
        })();
        model.set_training(false);
        if let Err(e) = result {
            return match e {
                Error::NonFinite(m) => {
                    model.restore(&best.2)?;
                    fold_input_scale(model, cfg.input_scale)?;
                    Err(Error::Diverged { epoch, message: m })
                }
                other => Err(other),
            };
        }
        let val_err = 1.0 - evaluate_scaled(model, val, cfg.input_scale)?.accuracy;
        let rec = EpochRecord {
            epoch,
            train_loss: total / data.len().max(1) as f64,
            val_err,
            lr,
        };
        on_epoch(&rec);
        history.push(rec);
        if val_err < best.0 {
            best = (val_err, epoch, model.snapshot());
        }
        if sched.update(val_err) == Action::Stop {
            stop_reason = sched.stop_reason.expect("stop sets a reason");
            break;
        }
    }
    model.restore(&best.2)?;
    fold_input_scale(model, cfg.input_scale)?;
    Ok(TrainOutcome {
        history,
        best_val_err: best.0,
        best_epoch: best.1,
        stop_reason,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_err,lr\n");
    for r in history {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.val_err, r.lr);
    }
    s
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    std::fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}
