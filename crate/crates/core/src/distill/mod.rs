//! Teacher ensembles, student families and mimic training.

mod ensemble;
mod family;
mod report;
mod student;

pub use ensemble::{fingerprint_of, greedy_select, hex, mean_logits, select_ensemble, Ensemble};
pub use family::{student_spec, student_spec_from_widths, width_bounds, Family, FULL_BUDGETS};
pub use report::{Report, StudentRow};
pub use student::{
    compression_gap, make_student, rescale_lr, train_hard_twin, train_student, StudentHyper, StudentRun,
    TrainedStudent, HARD_LR_RANGE, INIT_SCALE_RANGE, INPUT_SCALE_RANGE, LR_RANGE, MOMENTUM_RANGE,
};
