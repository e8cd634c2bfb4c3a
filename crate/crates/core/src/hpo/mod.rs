//! Bayesian hyperparameter search: a Matérn-5/2 GP surrogate with expected
//! improvement over bounded, optionally log-scaled spaces.

mod gp;
mod ledger;
mod search;
mod space;
mod suggest;

pub use gp::{matern52, GpParams, GpSurrogate};
pub use ledger::{space_path, Trial, TrialLedger, TrialStatus};
pub use search::{
    branin, branin_space, propose, random_search, run_search, SearchOptions, SearchSummary, TrialRequest, BRANIN_MIN,
};
pub use space::{student_space, teacher_space, ParamDef, Scale, Space, TEACHER_DIMS};
pub use suggest::{expected_improvement, halton, normal_cdf, normal_pdf, suggest_next, SuggestConfig};
