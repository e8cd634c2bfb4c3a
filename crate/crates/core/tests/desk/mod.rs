//! The desk-scale experiment behind the last three acceptance criteria.
//!
//! Two small CNN teachers on a 5k/1k synthetic archive, a 4-epoch transfer set, then
//! 5-trial searches for 1-conv and MLP students at 100k parameters. The compression
//! check adds a 2-conv search and trains each family's best point on soft and hard
//! targets under three seeds (the search trial's own seed plus two more).

use mimic::data::synth::{write_synthetic_cifar, SynthConfig};
use mimic::distill::Family;
use mimic::experiment::{Context, HpoSummary, Preset, Target, TeacherHyper};
use std::path::Path;
use std::time::Instant;

pub const SEED: u64 = 7;
pub const BUDGET: u64 = 100_000;
pub const TRIALS: usize = 5;
const TEACHER_SEEDS: [u64; 2] = [100, 101];
const EXTRA_SEEDS: [u64; 2] = [1001, 1002];

/// Accuracies in percent on the test split.
#[derive(Debug, Clone)]
pub struct ConvGap {
    pub teachers: Vec<f64>,
    pub ensemble: f64,
    /// Test accuracy of every search trial, by family then trial index.
    pub trials: Vec<(Family, Vec<f64>)>,
    /// Test accuracy of the best-by-validation trial per family.
    pub best: Vec<(Family, f64)>,
}

#[derive(Debug, Clone)]
pub struct Twins {
    pub family: Family,
    /// (soft, hard) per seed.
    pub runs: Vec<(f64, f64)>,
}

impl Twins {
    pub fn median_gap(&self) -> f64 {
        crate::median(self.runs.iter().map(|(s, h)| s - h).collect())
    }
}

pub struct DeskRun {
    pub gap: ConvGap,
    pub twins: Vec<Twins>,
    /// Wall minutes for the convolutional-gap steps and for the rest.
    pub minutes: (f64, f64),
}

/// Wall-clock allowance for each of the two desk experiments.
const MAX_MINUTES: f64 = 60.0;

fn log(t: &Instant, what: &str) {
    eprintln!("[desk {:>6.0}s] {what}", t.elapsed().as_secs_f64());
}

fn setup(root: &Path) -> Context {
    let data = root.join("data");
    write_synthetic_cifar(&data, &SynthConfig::default()).expect("synthetic archive");
    Context::new(root.join("work"), data, Preset::desk(), SEED)
}

fn search(ctx: &Context, splits: &mimic::experiment::Splits, family: Family, t: &Instant) -> (HpoSummary, Vec<f64>) {
    let (_, summary) = ctx
        .hpo_students(splits, family, BUDGET, TRIALS, 1)
        .expect("student search");
    let mut accs = Vec::new();
    for i in 0..TRIALS {
        let name = mimic::experiment::trial_name(i);
        // Failed trials have no manifest and count as zero accuracy.
        let acc = ctx
            .load_student(family, BUDGET, &name)
            .map(|(m, _)| 100.0 * m.test_accuracy)
            .unwrap_or(0.0);
        accs.push(acc);
    }
    log(t, &format!("{family}: trials {accs:.1?}, {} failed", summary.failed));
    (summary, accs)
}

fn conv_gap(ctx: &Context, t: &Instant) -> (ConvGap, mimic::experiment::Splits, Vec<(Family, HpoSummary)>) {
    ctx.ingest().expect("ingest");
    let splits = ctx.load_splits().expect("splits");
    let centre = TeacherHyper::centre_point();
    let mut names = Vec::new();
    let mut teachers = Vec::new();
    for (k, &seed) in TEACHER_SEEDS.iter().enumerate() {
        let name = format!("teacher-{k}");
        let m = ctx.train_teacher(&splits, &name, &centre, seed).expect("teacher").value;
        log(t, &format!("{name} {}: test {:.2}%", m.arch, 100.0 * m.test_accuracy));
        teachers.push(100.0 * m.test_accuracy);
        names.push(name);
    }
    let e = ctx
        .build_ensemble(&splits, &names, names.len(), false)
        .expect("ensemble")
        .value;
    log(t, &format!("ensemble: test {:.2}%", 100.0 * e.test_accuracy));
    ctx.gen_transfer(&splits, ctx.preset.transfer_epochs)
        .expect("transfer set");
    log(t, "transfer set written");
    let mut trials = Vec::new();
    let mut best = Vec::new();
    let mut summaries = Vec::new();
    for family in [Family::Mlp(1), Family::Cnn(1)] {
        let (summary, accs) = search(ctx, &splits, family, t);
        let top = summary.best.first().map(|b| b.index);
        best.push((family, top.map_or(0.0, |i| accs[i])));
        trials.push((family, accs));
        summaries.push((family, summary));
    }
    let gap = ConvGap {
        teachers,
        ensemble: 100.0 * e.test_accuracy,
        trials,
        best,
    };
    (gap, splits, summaries)
}

fn twins(
    ctx: &Context,
    splits: &mimic::experiment::Splits,
    family: Family,
    summary: &HpoSummary,
    t: &Instant,
) -> Twins {
    let best = summary.best.first().expect("a successful trial");
    let (lead, _) = ctx.load_student(family, BUDGET, &best.name).expect("best trial");
    let mut runs = Vec::new();
    let seeds = std::iter::once(lead.seed).chain(EXTRA_SEEDS);
    for (k, seed) in seeds.enumerate() {
        let name = if k == 0 { best.name.clone() } else { format!("seed-{k}") };
        let soft = ctx
            .train_student(splits, family, BUDGET, &name, &best.point, seed, Target::Soft)
            .expect("soft student")
            .value;
        let hard = ctx
            .train_student(
                splits,
                family,
                BUDGET,
                &format!("{name}-hard"),
                &best.point,
                seed,
                Target::Hard,
            )
            .expect("hard twin")
            .value;
        runs.push((100.0 * soft.test_accuracy, 100.0 * hard.test_accuracy));
    }
    let tw = Twins { family, runs };
    log(
        t,
        &format!("{family} soft/hard {:.1?}, median gap {:.2}", tw.runs, tw.median_gap()),
    );
    tw
}

/// Everything for criteria 8 and 9 in one work directory.
pub fn run(root: &Path) -> DeskRun {
    let t = Instant::now();
    let ctx = setup(root);
    let (gap, splits, mut summaries) = conv_gap(&ctx, &t);
    let first = t.elapsed().as_secs_f64() / 60.0;
    let (cnn2, _) = search(&ctx, &splits, Family::Cnn(2), &t);
    summaries.push((Family::Cnn(2), cnn2));
    let twins = summaries.iter().map(|(f, s)| twins(&ctx, &splits, *f, s, &t)).collect();
    let second = t.elapsed().as_secs_f64() / 60.0 - first;
    DeskRun {
        gap,
        twins,
        minutes: (first, second),
    }
}

/// Criterion 8's steps again, from scratch, in another directory.
pub fn rerun_conv_gap(root: &Path) -> ConvGap {
    let t = Instant::now();
    let ctx = setup(root);
    conv_gap(&ctx, &t).0
}

impl DeskRun {
    fn best(&self, family: Family) -> f64 {
        self.gap
            .best
            .iter()
            .find(|(f, _)| *f == family)
            .map(|(_, a)| *a)
            .unwrap()
    }

    fn twin(&self, family: Family) -> &Twins {
        self.twins.iter().find(|t| t.family == family).unwrap()
    }

    pub fn conv_gap(&self) -> (bool, String) {
        let cnn = self.best(Family::Cnn(1));
        let mlp = self.best(Family::Mlp(1));
        let minutes = self.minutes.0;
        (
            cnn - mlp >= 5.0 && minutes <= MAX_MINUTES,
            format!(
                "best-of-{TRIALS} cnn-1 {cnn:.2}% vs mlp-1 {mlp:.2}% (gap {:.2}); teachers {:.2?}, ensemble {:.2}%; {minutes:.0} min",
                cnn - mlp,
                self.gap.teachers,
                self.gap.ensemble
            ),
        )
    }

    pub fn compression_gap(&self) -> (bool, String) {
        let cnn1 = self.twin(Family::Cnn(1)).median_gap();
        let cnn2 = self.twin(Family::Cnn(2)).median_gap();
        let mlp = self.twin(Family::Mlp(1)).median_gap();
        let minutes = self.minutes.1;
        (
            cnn1 >= 0.0 && mlp >= cnn2 && minutes <= MAX_MINUTES,
            format!(
                "median soft-hard over 3 seeds: cnn-1 {cnn1:+.2}, cnn-2 {cnn2:+.2}, mlp-1 {mlp:+.2}; {minutes:.0} min"
            ),
        )
    }

    /// Largest difference between any accuracy reported by criterion 8 here and in `other`.
    pub fn same_as(&self, other: &ConvGap, tol: f64) -> (bool, String) {
        let mut a = self.gap.teachers.clone();
        a.push(self.gap.ensemble);
        let mut b = other.teachers.clone();
        b.push(other.ensemble);
        for ((_, x), (_, y)) in self.gap.trials.iter().zip(&other.trials) {
            a.extend(x);
            b.extend(y);
        }
        for ((_, x), (_, y)) in self.gap.best.iter().zip(&other.best) {
            a.push(*x);
            b.push(*y);
        }
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        (
            a.len() == b.len() && worst <= tol,
            format!("{} accuracies compared, largest difference {worst:.3} points", a.len()),
        )
    }
}
