//! End-to-end experiment: presets, teacher setup and the workdir stages.

mod pipeline;
mod preset;
mod teacher;

pub use pipeline::{
    cell_name, load_model, read_json, trial_name, write_json, Context, DatasetManifest, EnsembleManifest, HpoSummary,
    Splits, Staged, StudentManifest, SummaryEntry, Target, TeacherManifest, TransferManifest,
};
pub use preset::{Preset, ScaleKind};
pub use teacher::{build_teacher, teacher_arch, teacher_dropout, train_teacher, TeacherHyper, DESK_TEACHER_BOUNDS};

use crate::distill::{Family, StudentHyper};
use crate::error::Result;
use crate::hpo::student_space;

/// Decode a point of the student space for a cell.
pub fn student_hyper(family: Family, budget: u64, lr_range: (f64, f64), point: &[f64]) -> Result<StudentHyper> {
    let space = student_space(family, budget, lr_range)?;
    space.transform_point(point)?;
    let v = |n: &str| space.value(point, n);
    Ok(StudentHyper {
        lr: v("lr")?,
        momentum: v("momentum")?,
        input_scale: v("input_scale")?,
        init_scale: v("init_scale")?,
        widths: (0..family.width_slots())
            .map(|i| v(&format!("w{i}")))
            .collect::<Result<_>>()?,
    })
}

/// Centre of a cell's student space.
pub fn student_centre(family: Family, budget: u64, lr_range: (f64, f64)) -> Result<Vec<f64>> {
    let space = student_space(family, budget, lr_range)?;
    space.untransform_point(&vec![0.5; space.len()])
}
