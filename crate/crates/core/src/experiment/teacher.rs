use super::ScaleKind;
use crate::arch::{build_model, parse, teacher_spec, widths_from_scalars, ArchSpec, BuildOptions};
use crate::data::{AugmentConfig, Dataset};
use crate::error::{Error, Result};
use crate::hpo::{teacher_space, Space, TEACHER_DIMS};
use crate::rng::RngStream;
use crate::tensor::ModelGraph;
use crate::train::{train, EvalSet, LabeledSource, Loss, TrainConfig, TrainOutcome};
use serde::{Deserialize, Serialize};

/// Filter and unit ranges of the reduced two-conv teacher: `c1`, `c2`, `h1`.
pub const DESK_TEACHER_BOUNDS: [(usize, usize); 3] = [(16, 48), (32, 96), (64, 256)];

/// A point of the teacher space, by meaning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherHyper {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub init_scale: f64,
    /// `do_c1..3`, `do_f1`, `do_f2`.
    pub dropout: [f64; 5],
    pub augment: AugmentConfig,
    /// `c1, c2, c3, h1` in `[0, 1]`.
    pub widths: [f64; 4],
}

impl TeacherHyper {
    pub fn from_point(space: &Space, point: &[f64]) -> Result<Self> {
        space.transform_point(point)?;
        let v = |name: &str| space.value(point, name);
        Ok(Self {
            lr: v("lr")?,
            momentum: v("momentum")?,
            weight_decay: v("weight_decay")?,
            init_scale: v("init_scale")?,
            dropout: [v("do_c1")?, v("do_c2")?, v("do_c3")?, v("do_f1")?, v("do_f2")?],
            augment: AugmentConfig::with_hsv(v("d_h")?, v("d_s")?, v("d_v")?, v("a_s")?, v("a_v")?),
            widths: [v("c1")?, v("c2")?, v("c3")?, v("h1")?],
        })
    }

    /// Centre of the teacher space.
    pub fn centre_point() -> Vec<f64> {
        teacher_space()
            .untransform_point(&[0.5; TEACHER_DIMS.len()])
            .expect("centre is in bounds")
    }
}

/// Teacher architecture. Full scale uses the eight-conv family; desk scale a
/// `c-mp-c-mp-fc` net with 3x3 filters (the `c3` scalar is unused there).
pub fn teacher_arch(scale: ScaleKind, widths: &[f64; 4]) -> Result<ArchSpec> {
    match scale {
        ScaleKind::Full => teacher_spec(widths),
        ScaleKind::Desk => {
            let w = widths_from_scalars(&[widths[0], widths[1], widths[3]], &DESK_TEACHER_BOUNDS)?;
            parse(&format!("{}c-mp-{}c-mp-{}fc", w[0], w[1], w[2]))
        }
    }
}

/// Dropout rates in layer order for the scale's architecture.
pub fn teacher_dropout(scale: ScaleKind, h: &TeacherHyper) -> Vec<f64> {
    match scale {
        ScaleKind::Full => h.dropout.to_vec(),
        ScaleKind::Desk => vec![h.dropout[0], h.dropout[1], h.dropout[3]],
    }
}

pub fn build_teacher(scale: ScaleKind, h: &TeacherHyper, seed: u64) -> Result<(ArchSpec, ModelGraph<f32>)> {
    let spec = teacher_arch(scale, &h.widths)?;
    let dropout = teacher_dropout(scale, h);
    if dropout.len() != spec.dropout_sites() {
        return Err(Error::invalid(format!(
            "{} dropout rates for {} sites in {spec}",
            dropout.len(),
            spec.dropout_sites()
        )));
    }
    let mut rng = RngStream::new(seed).named("teacher-init");
    let model = build_model(
        &spec,
        &BuildOptions {
            init_scale: h.init_scale,
            dropout,
        },
        &mut rng,
    )?;
    Ok((spec, model))
}

pub fn train_teacher(
    scale: ScaleKind,
    h: &TeacherHyper,
    train_set: &Dataset,
    val: &EvalSet,
    max_epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<(ArchSpec, ModelGraph<f32>, TrainOutcome)> {
    let (spec, mut model) = build_teacher(scale, h, seed)?;
    let cfg = TrainConfig {
        initial_lr: h.lr,
        momentum: h.momentum,
        weight_decay: h.weight_decay,
        dropout_rates: Vec::new(),
        batch_size,
        max_epochs,
        input_scale: 1.0,
        seed,
    };
    let mut source = LabeledSource::new(train_set, h.augment, seed);
    let outcome = train(&mut model, &mut source, val, &cfg, Loss::SoftmaxXent)?;
    Ok((spec, model, outcome))
}
