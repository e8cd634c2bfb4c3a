//! Train shallow and deep student networks under fixed parameter budgets to mimic a
//! convolutional teacher ensemble by regressing its logits, with Gaussian-process
//! hyperparameter search driving every run.

pub mod arch;
pub mod data;
pub mod distill;
pub mod error;
pub mod experiment;
pub mod hpo;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::RngStream;
