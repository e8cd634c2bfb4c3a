use super::student_spec;
use super::{hex, Family};
use crate::arch::{build_model, count_params, ArchSpec, BuildOptions};
use crate::data::TransferFile;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::ModelGraph;
use crate::train::{train, EvalSet, Loss, TrainConfig, TrainOutcome, TransferSource};
use serde::{Deserialize, Serialize};

pub const LR_RANGE: (f64, f64) = (0.0013, 0.016);
/// Learning-rate bounds for models trained on one-hot labels.
pub const HARD_LR_RANGE: (f64, f64) = (0.0015, 0.025);
pub const MOMENTUM_RANGE: (f64, f64) = (0.68, 0.97);
pub const INPUT_SCALE_RANGE: (f64, f64) = (0.8, 1.25);
pub const INIT_SCALE_RANGE: (f64, f64) = (0.4, 2.0);

/// Searched settings of one student run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentHyper {
    pub lr: f64,
    pub momentum: f64,
    pub input_scale: f64,
    pub init_scale: f64,
    /// Width scalars in `[0,1]`, or layer ratios for deep MLPs.
    pub widths: Vec<f64>,
}

impl StudentHyper {
    /// Checks every setting against its search range, with `lr_range` for the learning rate.
    pub fn validate(&self, lr_range: (f64, f64)) -> Result<()> {
        let check = |name: &str, v: f64, (lo, hi): (f64, f64)| {
            // Tolerate round-off from the log-scale transforms at the ends.
            let eps = 1e-9 * hi;
            if v.is_finite() && v >= lo - eps && v <= hi + eps {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} outside [{lo}, {hi}]")))
            }
        };
        check("learning rate", self.lr, lr_range)?;
        check("momentum", self.momentum, MOMENTUM_RANGE)?;
        check("input scale", self.input_scale, INPUT_SCALE_RANGE)?;
        check("init scale", self.init_scale, INIT_SCALE_RANGE)?;
        for &w in &self.widths {
            check("width scalar", w, (0.0, 1.0))?;
        }
        Ok(())
    }
}

/// Everything that fixes a student run besides its hyperparameters.
#[derive(Clone, Debug)]
pub struct StudentRun {
    pub family: Family,
    pub budget: u64,
    pub seed: u64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr_range: (f64, f64),
}

pub struct TrainedStudent {
    pub spec: ArchSpec,
    pub model: ModelGraph<f32>,
    pub outcome: TrainOutcome,
    pub val_accuracy: f64,
}

/// Untrained student for a family, budget and width scalars. Students never get
/// dropout layers.
pub fn make_student(
    family: Family,
    budget: u64,
    widths: &[f64],
    init_scale: f64,
    rng: &mut RngStream,
) -> Result<(ArchSpec, ModelGraph<f32>)> {
    let spec = student_spec(family, budget, widths)?;
    debug_assert!(count_params(&spec)? <= budget);
    let model = build_model(
        &spec,
        &BuildOptions {
            init_scale,
            dropout: Vec::new(),
        },
        rng,
    )?;
    assert_eq!(model.dropout_sites(), 0);
    Ok((spec, model))
}

fn student_config(h: &StudentHyper, run: &StudentRun) -> TrainConfig {
    TrainConfig {
        initial_lr: h.lr,
        momentum: h.momentum,
        weight_decay: 0.0,
        dropout_rates: Vec::new(),
        batch_size: run.batch_size,
        max_epochs: run.max_epochs,
        input_scale: h.input_scale,
        seed: run.seed,
    }
}

/// Train a student to regress the transfer set's stored logits. Refuses transfer sets
/// made by a different ensemble.
pub fn train_student(
    run: &StudentRun,
    hyper: &StudentHyper,
    transfer: TransferFile,
    ensemble_fingerprint: &[u8; 32],
    val: &EvalSet,
) -> Result<TrainedStudent> {
    if &transfer.header().fingerprint != ensemble_fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: hex(ensemble_fingerprint),
            found: hex(&transfer.header().fingerprint),
        });
    }
    hyper.validate(run.lr_range)?;
    let mut source = TransferSource::soft(transfer)?.shuffled(run.seed);
    fit(run, hyper, &mut source, val, Loss::L2Logit)
}

/// Moves `lr` from `from` to the same log-scale position in `to`.
pub fn rescale_lr(lr: f64, from: (f64, f64), to: (f64, f64)) -> f64 {
    let t = (lr / from.0).ln() / (from.1 / from.0).ln();
    to.0 * (to.1 / to.0).powf(t.clamp(0.0, 1.0))
}

/// The same architecture and images trained on the source labels instead of logits.
/// Cross-entropy and logit regression want different step sizes, so the learning
/// rate keeps its place in the search range but is read from [`HARD_LR_RANGE`].
pub fn train_hard_twin(
    run: &StudentRun,
    hyper: &StudentHyper,
    transfer: TransferFile,
    train_labels: Vec<usize>,
    val: &EvalSet,
) -> Result<TrainedStudent> {
    hyper.validate(run.lr_range)?;
    let mut hyper = hyper.clone();
    hyper.lr = rescale_lr(hyper.lr, run.lr_range, HARD_LR_RANGE);
    let hyper = &hyper;
    let mut source = TransferSource::hard(transfer, train_labels)?.shuffled(run.seed);
    fit(run, hyper, &mut source, val, Loss::SoftmaxXent)
}

fn fit(
    run: &StudentRun,
    hyper: &StudentHyper,
    source: &mut TransferSource,
    val: &EvalSet,
    loss: Loss,
) -> Result<TrainedStudent> {
    let mut rng = RngStream::new(run.seed).named("student-init");
    let (spec, mut model) = make_student(run.family, run.budget, &hyper.widths, hyper.init_scale, &mut rng)?;
    let cfg = student_config(hyper, run);
    let outcome = train(&mut model, source, val, &cfg, loss)?;
    Ok(TrainedStudent {
        spec,
        model,
        val_accuracy: 1.0 - outcome.best_val_err,
        outcome,
    })
}

/// Soft-target accuracy minus hard-target accuracy of the same architecture.
pub fn compression_gap(soft_accuracy: f64, hard_accuracy: f64) -> f64 {
    soft_accuracy - hard_accuracy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twin_rate_keeps_its_place() {
        let (lo, hi) = LR_RANGE;
        assert!((rescale_lr(lo, LR_RANGE, HARD_LR_RANGE) - HARD_LR_RANGE.0).abs() < 1e-15);
        assert!((rescale_lr(hi, LR_RANGE, HARD_LR_RANGE) - HARD_LR_RANGE.1).abs() < 1e-15);
        let mid = rescale_lr((lo * hi).sqrt(), LR_RANGE, HARD_LR_RANGE);
        assert!((mid - (HARD_LR_RANGE.0 * HARD_LR_RANGE.1).sqrt()).abs() < 1e-12);
        let desk = (lo / 64.0, hi / 64.0);
        assert!((rescale_lr(lo / 64.0, desk, HARD_LR_RANGE) - HARD_LR_RANGE.0).abs() < 1e-15);
    }

    #[test]
    fn gaps_match_reported_rows() {
        assert!((compression_gap(87.3, 84.6) - 2.7).abs() < 1e-9);
        assert!((compression_gap(92.6, 91.8) - 0.8).abs() < 1e-9);
        assert_eq!(compression_gap(0.9, 0.9), 0.0);
    }

    #[test]
    fn hyperparameter_bounds() {
        let mut h = StudentHyper {
            lr: 0.005,
            momentum: 0.9,
            input_scale: 1.0,
            init_scale: 1.0,
            widths: vec![0.5, 0.5],
        };
        h.validate(LR_RANGE).unwrap();
        h.lr = 0.02;
        assert!(h.validate(LR_RANGE).is_err());
        h.lr = 0.005;
        h.init_scale = 2.5;
        assert!(h.validate(LR_RANGE).is_err());
    }

    #[test]
    fn students_have_no_dropout() {
        let (_, m) = make_student(Family::Cnn(2), 100_000, &[0.5, 0.5], 1.0, &mut RngStream::new(1)).unwrap();
        assert_eq!(m.dropout_sites(), 0);
        assert!(m.param_count() <= 100_000);
    }
}
