use crate::distill::{FULL_BUDGETS, LR_RANGE};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    Full,
    Desk,
}

impl fmt::Display for ScaleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScaleKind::Full => "full",
            ScaleKind::Desk => "desk",
        })
    }
}

impl FromStr for ScaleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ScaleKind::Full),
            "desk" => Ok(ScaleKind::Desk),
            _ => Err(Error::invalid(format!("unknown scale `{s}` (expected full or desk)"))),
        }
    }
}

/// Sizes and counts for every stage of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub scale: ScaleKind,
    /// Training images kept after the validation split; `None` keeps all.
    pub train_images: Option<usize>,
    pub validation: usize,
    /// Records expected per archive file; `None` accepts any count.
    pub records_per_file: Option<usize>,
    pub teacher_epochs: usize,
    pub student_epochs: usize,
    pub transfer_epochs: u32,
    pub ensemble_size: usize,
    pub hpo_trials: usize,
    pub budgets: Vec<u64>,
    pub batch_size: usize,
    /// Student learning-rate search bounds.
    #[serde(default = "full_lr")]
    pub student_lr: (f64, f64),
}

fn full_lr() -> (f64, f64) {
    LR_RANGE
}

/// Divisor on the student learning-rate bounds at desk scale. The small synthetic
/// teachers give heavy-tailed logits, and the squared-error steps blow up at the
/// full-scale rates.
pub const DESK_LR_DIVISOR: f64 = 64.0;

impl Preset {
    pub fn full() -> Self {
        Self {
            scale: ScaleKind::Full,
            train_images: None,
            validation: 10_000,
            records_per_file: Some(10_000),
            teacher_epochs: 500,
            student_epochs: 500,
            transfer_epochs: 160,
            ensemble_size: 16,
            hpo_trials: 129,
            budgets: FULL_BUDGETS.to_vec(),
            batch_size: 128,
            student_lr: LR_RANGE,
        }
    }

    pub fn desk() -> Self {
        Self {
            scale: ScaleKind::Desk,
            train_images: Some(5_000),
            validation: 1_000,
            records_per_file: None,
            teacher_epochs: 30,
            student_epochs: 20,
            transfer_epochs: 4,
            ensemble_size: 2,
            hpo_trials: 12,
            budgets: vec![30_000, 100_000, 300_000],
            batch_size: 64,
            student_lr: (LR_RANGE.0 / DESK_LR_DIVISOR, LR_RANGE.1 / DESK_LR_DIVISOR),
        }
    }

    pub fn for_scale(scale: ScaleKind) -> Self {
        match scale {
            ScaleKind::Full => Self::full(),
            ScaleKind::Desk => Self::desk(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.validation == 0 || self.batch_size == 0 || self.transfer_epochs == 0 {
            return Err(Error::invalid("preset sizes must be positive"));
        }
        if self.teacher_epochs == 0 || self.student_epochs == 0 || self.ensemble_size == 0 {
            return Err(Error::invalid("preset epoch and ensemble counts must be positive"));
        }
        let (lo, hi) = self.student_lr;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::invalid("student learning-rate bounds must satisfy 0 < lo < hi"));
        }
        if self.budgets.is_empty() {
            return Err(Error::invalid("preset needs at least one budget"));
        }
        Ok(())
    }
}
