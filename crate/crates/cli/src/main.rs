//! `mimic`: run the teacher / ensemble / transfer-set / student pipeline in a workdir.

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mimic::arch::{count_params, parse};
use mimic::data::synth::{write_synthetic_cifar, SynthConfig};
use mimic::distill::Family;
use mimic::experiment::{student_centre, Context, Preset, ScaleKind, Staged, Target, TeacherHyper};
use mimic::Error;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mimic",
    version,
    about = "Train shallow students to mimic a deep CNN ensemble"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for the data split, searches and transfer set.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,
    #[arg(long, global = true, default_value = "work")]
    workdir: PathBuf,
    /// CIFAR-10 binary archive; defaults to `<workdir>/data`.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Recompute outputs that already exist.
    #[arg(long, global = true)]
    force: bool,
    /// Override the preset's training image count.
    #[arg(long, global = true)]
    train_images: Option<usize>,
    /// Override the preset's validation image count.
    #[arg(long, global = true)]
    validation: Option<usize>,
    #[arg(long, global = true)]
    teacher_epochs: Option<usize>,
    #[arg(long, global = true)]
    student_epochs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Full,
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Check the archive and record the split.
    Ingest {
        /// Write a synthetic archive first if the data dir has none.
        #[arg(long)]
        synthetic: bool,
    },
    /// Train one teacher.
    TrainTeacher {
        #[arg(long, default_value = "teacher")]
        name: String,
        /// JSON array of teacher-space values; the centre of the space by default.
        #[arg(long)]
        point: Option<String>,
        #[arg(long)]
        teacher_seed: Option<u64>,
    },
    /// Bayesian search over teachers (`teacher`) or a student family (`mlp-1`, `cnn-2`, ...).
    Hpo {
        stage: String,
        #[arg(long)]
        budget: Option<u64>,
        /// Total trials; the preset's count by default.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Select the teacher ensemble.
    BuildEnsemble {
        /// Comma-separated teacher names; all trained teachers by default.
        #[arg(long, value_delimiter = ',')]
        candidates: Vec<String>,
        #[arg(long)]
        max_size: Option<usize>,
        /// Use every candidate instead of greedy selection.
        #[arg(long)]
        all: bool,
    },
    /// Pre-generate the ensemble-labelled transfer set.
    GenTransfer {
        #[arg(long)]
        epochs: Option<u32>,
    },
    /// Train one student on the transfer set.
    TrainStudent {
        #[arg(long)]
        family: String,
        #[arg(long)]
        budget: u64,
        #[arg(long, default_value = "manual")]
        name: String,
        /// JSON array of student-space values; the centre of the space by default.
        #[arg(long)]
        point: Option<String>,
        #[arg(long)]
        student_seed: Option<u64>,
        /// Train on the source labels instead of the ensemble logits.
        #[arg(long)]
        hard: bool,
    },
    /// Write the result tables under `<workdir>/report`.
    Report,
    /// Print the layers and parameter counts of an architecture string.
    Describe { arch: String },
}

fn context(g: &Global) -> Context {
    let mut preset = Preset::for_scale(match g.scale {
        Scale::Full => ScaleKind::Full,
        Scale::Desk => ScaleKind::Desk,
    });
    if let Some(n) = g.train_images {
        preset.train_images = Some(n);
    }
    if let Some(n) = g.validation {
        preset.validation = n;
    }
    if let Some(n) = g.teacher_epochs {
        preset.teacher_epochs = n;
    }
    if let Some(n) = g.student_epochs {
        preset.student_epochs = n;
    }
    let data = g.data_dir.clone().unwrap_or_else(|| g.workdir.join("data"));
    let mut ctx = Context::new(&g.workdir, data, preset, g.seed);
    ctx.force = g.force;
    ctx
}

fn emit<T: Serialize>(what: &str, staged: Staged<T>) -> Result<()> {
    if staged.reused {
        eprintln!("{what}: outputs exist with the same inputs, skipped (use --force to redo)");
    }
    println!("{}", serde_json::to_string_pretty(&staged.value)?);
    Ok(())
}

fn parse_point(text: &str) -> Result<Vec<f64>> {
    serde_json::from_str(text)
        .map_err(|e| Error::invalid(format!("--point must be a JSON array of numbers: {e}")).into())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = context(&cli.global);
    match cli.command {
        Command::Ingest { synthetic } => {
            if synthetic && !ctx.data_dir.join("test_batch.bin").exists() {
                let mut cfg = SynthConfig {
                    seed: ctx.seed,
                    ..SynthConfig::default()
                };
                if ctx.preset.scale == ScaleKind::Full {
                    cfg.records_per_train_file = 10_000;
                    cfg.test_records = 10_000;
                }
                write_synthetic_cifar(&ctx.data_dir, &cfg)?;
                eprintln!("wrote synthetic archive to {}", ctx.data_dir.display());
            }
            emit("ingest", ctx.ingest()?)
        }
        Command::TrainTeacher {
            name,
            point,
            teacher_seed,
        } => {
            let point = point
                .as_deref()
                .map(parse_point)
                .transpose()?
                .unwrap_or_else(TeacherHyper::centre_point);
            let splits = ctx.load_splits()?;
            emit(
                "train-teacher",
                ctx.train_teacher(&splits, &name, &point, teacher_seed.unwrap_or(ctx.seed))?,
            )
        }
        Command::Hpo {
            stage,
            budget,
            trials,
            parallelism,
        } => {
            let trials = trials.unwrap_or(ctx.preset.hpo_trials);
            let splits = ctx.load_splits()?;
            let summary = if stage == "teacher" {
                ctx.hpo_teachers(&splits, trials, parallelism)?.1
            } else {
                let family: Family = stage.parse()?;
                let Some(budget) = budget else {
                    bail!(Error::invalid("student searches need --budget"));
                };
                ctx.hpo_students(&splits, family, budget, trials, parallelism)?.1
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::BuildEnsemble {
            candidates,
            max_size,
            all,
        } => {
            let candidates = if candidates.is_empty() {
                ctx.teacher_names()?
            } else {
                candidates
            };
            let splits = ctx.load_splits()?;
            let max = max_size.unwrap_or(ctx.preset.ensemble_size);
            emit("build-ensemble", ctx.build_ensemble(&splits, &candidates, max, !all)?)
        }
        Command::GenTransfer { epochs } => {
            let splits = ctx.load_splits()?;
            emit(
                "gen-transfer",
                ctx.gen_transfer(&splits, epochs.unwrap_or(ctx.preset.transfer_epochs))?,
            )
        }
        Command::TrainStudent {
            family,
            budget,
            name,
            point,
            student_seed,
            hard,
        } => {
            let family: Family = family.parse()?;
            let point = match point {
                Some(p) => parse_point(&p)?,
                None => student_centre(family, budget, ctx.preset.student_lr)?,
            };
            let target = if hard { Target::Hard } else { Target::Soft };
            let splits = ctx.load_splits()?;
            let seed = student_seed.unwrap_or(ctx.seed);
            emit(
                "train-student",
                ctx.train_student(&splits, family, budget, &name, &point, seed, target)?,
            )
        }
        Command::Report => {
            let report = ctx.report()?;
            println!("{}", report.table_csv());
            print!("{}", report.gaps_csv());
            Ok(())
        }
        Command::Describe { arch } => {
            let spec = parse(&arch)?;
            let layers = mimic::arch::layer_params(&spec)?;
            let out = serde_json::json!({
                "arch": spec.to_string(),
                "layers": layers.iter().map(|l| serde_json::json!({
                    "layer": l.layer,
                    "params": l.params,
                    "output": l.output,
                })).collect::<Vec<_>>(),
                "total": count_params(&spec)?,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
    }
}

/// 2 for bad configuration, 3 for unreadable data, 4 for failed runs.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::InvalidArgument(_)
            | Error::Parse { .. }
            | Error::BudgetTooSmall { .. }
            | Error::SpaceMismatch { .. }
            | Error::FingerprintMismatch { .. },
        ) => 2,
        Some(Error::Io { .. } | Error::Format { .. }) => 3,
        Some(_) => 4,
        None if err.downcast_ref::<serde_json::Error>().is_some() => 2,
        None => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli).context("mimic failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
