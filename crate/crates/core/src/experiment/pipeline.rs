//! Workdir-backed experiment stages. Every stage writes a `manifest.json` next to its
//! outputs and is skipped when that manifest already records the same inputs.
//!
//! ```text
//! <workdir>/dataset.json
//! <workdir>/teachers/<name>/{model.ckpt, history.csv, manifest.json}
//! <workdir>/hpo/<stage>/{ledger.jsonl, ledger.jsonl.space.json, summary.json}
//! <workdir>/ensemble/manifest.json
//! <workdir>/transfer/{transfer.bin, manifest.json}
//! <workdir>/students/<family>-<budget>/<name>/{model.ckpt, history.csv, manifest.json}
//! <workdir>/report/{table2.csv, gaps.csv, series.json}
//! ```

use super::teacher::{teacher_dropout, train_teacher, TeacherHyper};
use super::{student_hyper, Preset, ScaleKind};
use crate::arch::{build_model, parse, BuildOptions};
use crate::data::{
    cifar::{TEST_FILE, TRAIN_FILES},
    generate_transfer_set, load_cifar10, AugmentConfig, CifarSplits, LoadOptions, TransferFile,
};
use crate::distill::{
    hex, select_ensemble, train_hard_twin, train_student, Ensemble, Family, Report, StudentRow, StudentRun,
};
use crate::error::{Error, Result};
use crate::hpo::{run_search, teacher_space, SearchOptions, SearchSummary, TrialLedger, TrialStatus};
use crate::tensor::{write_checkpoint, ModelGraph};
use crate::train::{evaluate, write_history_csv, EvalSet, StopReason};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

const EVAL_BATCH: usize = 500;

/// Where and how an experiment runs.
#[derive(Clone, Debug)]
pub struct Context {
    pub workdir: PathBuf,
    pub data_dir: PathBuf,
    pub preset: Preset,
    pub seed: u64,
    /// Redo stages whose outputs already exist.
    pub force: bool,
}

/// A stage result, and whether it was read back instead of recomputed.
#[derive(Clone, Debug)]
pub struct Staged<T> {
    pub value: T,
    pub reused: bool,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_vec_pretty(value).expect("manifest serializes");
    body.push(b'\n');
    write_atomic(path, &body)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(Some(path.to_path_buf()), e.to_string()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Test-split accuracy and validation accuracy of `model`.
fn accuracies(model: &ModelGraph<f32>, val: &EvalSet, test: &EvalSet) -> Result<(f64, f64)> {
    Ok((evaluate(model, val)?.accuracy, evaluate(model, test)?.accuracy))
}

/// In-memory splits plus their evaluation tensors.
pub struct Splits {
    pub data: CifarSplits,
    pub val: EvalSet,
    pub test: EvalSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub data_dir: PathBuf,
    pub scale: ScaleKind,
    pub seed: u64,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub files_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherManifest {
    pub name: String,
    pub arch: String,
    pub point: Vec<f64>,
    pub hyper: TeacherHyper,
    pub dropout: Vec<f64>,
    pub seed: u64,
    pub params: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_seconds: f64,
    pub checkpoint_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub members: Vec<String>,
    pub fingerprint: String,
    pub greedy: bool,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferManifest {
    pub records: u64,
    pub epochs: u32,
    pub source_images: u64,
    pub fingerprint: String,
    pub augment: AugmentConfig,
    pub seed: u64,
    pub sha256: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Regress the ensemble's logits.
    Soft,
    /// Same images with their source labels.
    Hard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentManifest {
    pub name: String,
    pub family: Family,
    pub budget: u64,
    pub arch: String,
    pub params: usize,
    pub point: Vec<f64>,
    pub seed: u64,
    pub target: Target,
    pub transfer_fingerprint: String,
    pub epochs: usize,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_seconds: f64,
    pub checkpoint_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub index: usize,
    pub name: String,
    pub val_error: f64,
    pub point: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HpoSummary {
    pub stage: String,
    pub trials: usize,
    pub failed: usize,
    pub best: Vec<SummaryEntry>,
}

pub fn cell_name(family: Family, budget: u64) -> String {
    format!("{family}-{budget}")
}

impl Context {
    pub fn new(workdir: impl Into<PathBuf>, data_dir: impl Into<PathBuf>, preset: Preset, seed: u64) -> Self {
        Self {
            workdir: workdir.into(),
            data_dir: data_dir.into(),
            preset,
            seed,
            force: false,
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.workdir.join(rel)
    }

    pub fn teacher_dir(&self, name: &str) -> PathBuf {
        self.path("teachers").join(name)
    }

    pub fn student_dir(&self, family: Family, budget: u64, name: &str) -> PathBuf {
        self.path("students").join(cell_name(family, budget)).join(name)
    }

    pub fn transfer_path(&self) -> PathBuf {
        self.path("transfer").join("transfer.bin")
    }

    pub fn hpo_dir(&self, stage: &str) -> PathBuf {
        self.path("hpo").join(stage)
    }

    /// Reuse a manifest if it exists and agrees on the inputs `same` compares.
    fn reuse<T: DeserializeOwned>(&self, path: &Path, same: impl Fn(&T) -> bool) -> Result<Option<T>> {
        if self.force || !path.exists() {
            return Ok(None);
        }
        let m: T = read_json(path)?;
        if same(&m) {
            Ok(Some(m))
        } else {
            Err(Error::invalid(format!(
                "{} exists with different inputs; rerun with --force to replace it",
                path.display()
            )))
        }
    }

    fn load_options(&self) -> LoadOptions {
        LoadOptions {
            seed: self.seed,
            validation: self.preset.validation,
            records_per_file: self.preset.records_per_file,
        }
    }

    /// Load the archive with this context's split.
    pub fn load_splits(&self) -> Result<Splits> {
        let mut data = load_cifar10(&self.data_dir, &self.load_options())?;
        if let Some(n) = self.preset.train_images {
            if n > data.train.len() {
                return Err(Error::invalid(format!(
                    "preset wants {n} training images, the archive leaves {}",
                    data.train.len()
                )));
            }
            data.train = data.train.take(n)?;
        }
        let val = EvalSet::from_dataset(&data.validation);
        let test = EvalSet::from_dataset(&data.test);
        Ok(Splits { data, val, test })
    }

    fn files_digest(&self) -> Result<String> {
        let dir = if self.data_dir.join(TEST_FILE).exists() {
            self.data_dir.clone()
        } else {
            self.data_dir.join("cifar-10-batches-bin")
        };
        let mut h = Sha256::new();
        for name in TRAIN_FILES.iter().chain(&[TEST_FILE]) {
            let p = dir.join(name);
            h.update(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
        }
        Ok(hex(&h.finalize()))
    }

    /// Check the archive loads with the preset's split and record it.
    pub fn ingest(&self) -> Result<Staged<DatasetManifest>> {
        self.preset.validate()?;
        let splits = self.load_splits()?;
        let m = DatasetManifest {
            data_dir: self.data_dir.clone(),
            scale: self.preset.scale,
            seed: self.seed,
            train: splits.data.train.len(),
            validation: splits.data.validation.len(),
            test: splits.data.test.len(),
            files_sha256: self.files_digest()?,
        };
        let path = self.path("dataset.json");
        if let Some(old) = self.reuse(&path, |o: &DatasetManifest| *o == m)? {
            return Ok(Staged {
                value: old,
                reused: true,
            });
        }
        write_json(&path, &m)?;
        Ok(Staged {
            value: m,
            reused: false,
        })
    }

    /// Train one teacher from a point of the teacher space.
    pub fn train_teacher(
        &self,
        splits: &Splits,
        name: &str,
        point: &[f64],
        seed: u64,
    ) -> Result<Staged<TeacherManifest>> {
        let space = teacher_space();
        let hyper = TeacherHyper::from_point(&space, point)?;
        let dir = self.teacher_dir(name);
        let mpath = dir.join("manifest.json");
        if let Some(m) = self.reuse(&mpath, |m: &TeacherManifest| m.point == point && m.seed == seed)? {
            return Ok(Staged { value: m, reused: true });
        }
        let scale = self.preset.scale;
        let (spec, model, outcome) = train_teacher(
            scale,
            &hyper,
            &splits.data.train,
            &splits.val,
            self.preset.teacher_epochs,
            self.preset.batch_size,
            seed,
        )?;
        let ckpt = write_checkpoint(&model);
        write_atomic(&dir.join("model.ckpt"), &ckpt)?;
        write_history_csv(&dir.join("history.csv"), &outcome.history)?;
        let (val_accuracy, test_accuracy) = accuracies(&model, &splits.val, &splits.test)?;
        let m = TeacherManifest {
            name: name.to_string(),
            arch: spec.to_string(),
            point: point.to_vec(),
            dropout: teacher_dropout(scale, &hyper),
            hyper,
            seed,
            params: model.param_count(),
            epochs: outcome.history.len(),
            best_epoch: outcome.best_epoch,
            stop_reason: outcome.stop_reason,
            val_accuracy,
            test_accuracy,
            wall_seconds: outcome.wall_seconds,
            checkpoint_sha256: sha256_hex(&ckpt),
        };
        write_json(&mpath, &m)?;
        Ok(Staged {
            value: m,
            reused: false,
        })
    }

    pub fn load_teacher(&self, name: &str) -> Result<(TeacherManifest, ModelGraph<f32>)> {
        let dir = self.teacher_dir(name);
        let m: TeacherManifest = read_json(&dir.join("manifest.json"))?;
        let model = load_model(&m.arch, &m.dropout, &dir.join("model.ckpt"))?;
        Ok((m, model))
    }

    /// Names of all trained teachers, sorted.
    pub fn teacher_names(&self) -> Result<Vec<String>> {
        list_dirs(&self.path("teachers"))
    }

    fn summarize(&self, stage: &str, ledger: &TrialLedger, name_of: impl Fn(usize) -> String) -> Result<HpoSummary> {
        let s = HpoSummary {
            stage: stage.to_string(),
            trials: ledger.len(),
            failed: ledger
                .trials()
                .iter()
                .filter(|t| t.status == TrialStatus::Failed)
                .count(),
            best: ledger
                .top(5)
                .into_iter()
                .map(|t| SummaryEntry {
                    index: t.index,
                    name: name_of(t.index),
                    val_error: t.value.expect("successful trial"),
                    point: t.point.clone(),
                })
                .collect(),
        };
        write_json(&self.hpo_dir(stage).join("summary.json"), &s)?;
        Ok(s)
    }

    /// Search the teacher space; trial `i` becomes teacher `hpo-<i>`.
    pub fn hpo_teachers(
        &self,
        splits: &Splits,
        trials: usize,
        parallelism: usize,
    ) -> Result<(SearchSummary, HpoSummary)> {
        let mut ledger = TrialLedger::open(&self.hpo_dir("teacher").join("ledger.jsonl"), &teacher_space())?;
        let mut opts = SearchOptions::new(trials, self.seed);
        opts.parallelism = parallelism;
        let out = run_search(&mut ledger, &opts, |r| {
            let m = self.train_teacher(splits, &trial_name(r.index), &r.point, r.seed)?;
            Ok(1.0 - m.value.val_accuracy)
        })?;
        let summary = self.summarize("teacher", &ledger, trial_name)?;
        Ok((out, summary))
    }

    /// Combine teachers into the ensemble. With `greedy`, members are chosen by forward
    /// selection on validation accuracy up to `max_size`; otherwise all are used.
    pub fn build_ensemble(
        &self,
        splits: &Splits,
        candidates: &[String],
        max_size: usize,
        greedy: bool,
    ) -> Result<Staged<EnsembleManifest>> {
        if candidates.is_empty() {
            return Err(Error::invalid("no teacher candidates for the ensemble"));
        }
        let mpath = self.path("ensemble").join("manifest.json");
        let mut models = Vec::with_capacity(candidates.len());
        for name in candidates {
            models.push(self.load_teacher(name)?.1);
        }
        let (ensemble, chosen) = if greedy {
            let (e, idx, _) = select_ensemble(models, &splits.val, max_size)?;
            (e, idx)
        } else {
            (Ensemble::new(models)?, (0..candidates.len()).collect())
        };
        let members: Vec<String> = chosen.iter().map(|&i| candidates[i].clone()).collect();
        let fingerprint = ensemble.fingerprint_hex();
        if let Some(m) = self.reuse(&mpath, |m: &EnsembleManifest| {
            m.members == members && m.fingerprint == fingerprint
        })? {
            return Ok(Staged { value: m, reused: true });
        }
        let acc = |set: &EvalSet| -> Result<f64> {
            let z = ensemble.logits_batched(&set.inputs, EVAL_BATCH)?;
            Ok(crate::train::score_logits(&z, &set.labels)?.accuracy)
        };
        let m = EnsembleManifest {
            members,
            fingerprint,
            greedy,
            val_accuracy: acc(&splits.val)?,
            test_accuracy: acc(&splits.test)?,
        };
        write_json(&mpath, &m)?;
        Ok(Staged {
            value: m,
            reused: false,
        })
    }

    pub fn load_ensemble(&self) -> Result<(EnsembleManifest, Ensemble)> {
        let m: EnsembleManifest = read_json(&self.path("ensemble").join("manifest.json"))?;
        let models = m
            .members
            .iter()
            .map(|n| self.load_teacher(n).map(|t| t.1))
            .collect::<Result<Vec<_>>>()?;
        let e = Ensemble::new(models)?;
        if e.fingerprint_hex() != m.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: m.fingerprint,
                found: e.fingerprint_hex(),
            });
        }
        Ok((m, e))
    }

    /// Pre-generate the ensemble-labelled transfer set. Augmentation follows the first
    /// ensemble member's settings.
    pub fn gen_transfer(&self, splits: &Splits, epochs: u32) -> Result<Staged<TransferManifest>> {
        let (em, ensemble) = self.load_ensemble()?;
        let (lead, _) = self.load_teacher(&em.members[0])?;
        let path = self.transfer_path();
        let mpath = self.path("transfer").join("manifest.json");
        if let Some(m) = self.reuse(&mpath, |m: &TransferManifest| {
            m.fingerprint == em.fingerprint && m.epochs == epochs && m.seed == self.seed
        })? {
            if path.exists() {
                return Ok(Staged { value: m, reused: true });
            }
        }
        let header = generate_transfer_set(
            &splits.data.train,
            epochs,
            &lead.hyper.augment,
            self.seed,
            ensemble.fingerprint(),
            &path,
            EVAL_BATCH,
            |x| ensemble.logits(x),
        )?;
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m = TransferManifest {
            records: header.count,
            epochs,
            source_images: header.source_len(),
            fingerprint: em.fingerprint,
            augment: header.config,
            seed: self.seed,
            sha256: sha256_hex(&bytes),
        };
        write_json(&mpath, &m)?;
        Ok(Staged {
            value: m,
            reused: false,
        })
    }

    /// Train one student (or its hard-target twin) from a point of the student space.
    #[allow(clippy::too_many_arguments)]
    pub fn train_student(
        &self,
        splits: &Splits,
        family: Family,
        budget: u64,
        name: &str,
        point: &[f64],
        seed: u64,
        target: Target,
    ) -> Result<Staged<StudentManifest>> {
        let (_, ensemble) = self.load_ensemble()?;
        let fingerprint = ensemble.fingerprint();
        let dir = self.student_dir(family, budget, name);
        let mpath = dir.join("manifest.json");
        let fp_hex = hex(&fingerprint);
        if let Some(m) = self.reuse(&mpath, |m: &StudentManifest| {
            m.point == point && m.seed == seed && m.target == target && m.transfer_fingerprint == fp_hex
        })? {
            return Ok(Staged { value: m, reused: true });
        }
        let hyper = student_hyper(family, budget, self.preset.student_lr, point)?;
        let run = StudentRun {
            family,
            budget,
            seed,
            batch_size: self.preset.batch_size,
            max_epochs: self.preset.student_epochs,
            lr_range: self.preset.student_lr,
        };
        let transfer = TransferFile::open(&self.transfer_path())?;
        let trained = match target {
            Target::Soft => train_student(&run, &hyper, transfer, &fingerprint, &splits.val)?,
            Target::Hard => {
                if transfer.header().fingerprint != fingerprint {
                    return Err(Error::FingerprintMismatch {
                        expected: fp_hex,
                        found: hex(&transfer.header().fingerprint),
                    });
                }
                train_hard_twin(&run, &hyper, transfer, splits.data.train.labels.clone(), &splits.val)?
            }
        };
        let ckpt = write_checkpoint(&trained.model);
        write_atomic(&dir.join("model.ckpt"), &ckpt)?;
        write_history_csv(&dir.join("history.csv"), &trained.outcome.history)?;
        let (val_accuracy, test_accuracy) = accuracies(&trained.model, &splits.val, &splits.test)?;
        let m = StudentManifest {
            name: name.to_string(),
            family,
            budget,
            arch: trained.spec.to_string(),
            params: trained.model.param_count(),
            point: point.to_vec(),
            seed,
            target,
            transfer_fingerprint: fp_hex,
            epochs: trained.outcome.history.len(),
            best_epoch: trained.outcome.best_epoch,
            val_accuracy,
            test_accuracy,
            wall_seconds: trained.outcome.wall_seconds,
            checkpoint_sha256: sha256_hex(&ckpt),
        };
        write_json(&mpath, &m)?;
        Ok(Staged {
            value: m,
            reused: false,
        })
    }

    pub fn load_student(&self, family: Family, budget: u64, name: &str) -> Result<(StudentManifest, ModelGraph<f32>)> {
        let dir = self.student_dir(family, budget, name);
        let m: StudentManifest = read_json(&dir.join("manifest.json"))?;
        let model = load_model(&m.arch, &[], &dir.join("model.ckpt"))?;
        Ok((m, model))
    }

    /// Search one (family, budget) cell; trial `i` becomes student `hpo-<i>`.
    pub fn hpo_students(
        &self,
        splits: &Splits,
        family: Family,
        budget: u64,
        trials: usize,
        parallelism: usize,
    ) -> Result<(SearchSummary, HpoSummary)> {
        let stage = format!("student-{}", cell_name(family, budget));
        let space = crate::hpo::student_space(family, budget, self.preset.student_lr)?;
        let mut ledger = TrialLedger::open(&self.hpo_dir(&stage).join("ledger.jsonl"), &space)?;
        let mut opts = SearchOptions::new(trials, self.seed);
        opts.parallelism = parallelism;
        let out = run_search(&mut ledger, &opts, |r| {
            let m = self.train_student(
                splits,
                family,
                budget,
                &trial_name(r.index),
                &r.point,
                r.seed,
                Target::Soft,
            )?;
            Ok(1.0 - m.value.val_accuracy)
        })?;
        let summary = self.summarize(&stage, &ledger, trial_name)?;
        Ok((out, summary))
    }

    /// Every student manifest in the workdir.
    pub fn student_manifests(&self) -> Result<Vec<StudentManifest>> {
        let root = self.path("students");
        let mut out = Vec::new();
        for cell in list_dirs(&root)? {
            for name in list_dirs(&root.join(&cell))? {
                let p = root.join(&cell).join(&name).join("manifest.json");
                if p.exists() {
                    out.push(read_json(&p)?);
                }
            }
        }
        Ok(out)
    }

    /// Collect results into the report tables. Each cell reports its best soft student
    /// by validation accuracy; the hard accuracy comes from `<best>-hard` when present.
    pub fn report(&self) -> Result<Report> {
        let all = self.student_manifests()?;
        let mut cells: Vec<(Family, u64)> = all.iter().map(|m| (m.family, m.budget)).collect();
        cells.sort_unstable();
        cells.dedup();
        let mut rows = Vec::new();
        for (family, budget) in cells {
            let mut soft: Vec<&StudentManifest> = all
                .iter()
                .filter(|m| m.family == family && m.budget == budget && m.target == Target::Soft)
                .collect();
            if soft.is_empty() {
                continue;
            }
            soft.sort_by(|a, b| b.val_accuracy.total_cmp(&a.val_accuracy).then(a.name.cmp(&b.name)));
            let best = soft[0];
            let twin = format!("{}-hard", best.name);
            let hard = all
                .iter()
                .find(|m| m.family == family && m.budget == budget && m.target == Target::Hard && m.name == twin);
            rows.push(StudentRow {
                family,
                budget,
                params: best.params as u64,
                arch: best.arch.clone(),
                soft_accuracy: 100.0 * best.test_accuracy,
                hard_accuracy: hard.map(|h| 100.0 * h.test_accuracy),
                top: soft.iter().take(5).map(|m| 100.0 * m.test_accuracy).collect(),
            });
        }
        let mut teacher_accuracy = Vec::new();
        for n in self.teacher_names()? {
            let p = self.teacher_dir(&n).join("manifest.json");
            if p.exists() {
                let m: TeacherManifest = read_json(&p)?;
                teacher_accuracy.push(100.0 * m.test_accuracy);
            }
        }
        let ep = self.path("ensemble").join("manifest.json");
        let ensemble_accuracy = if ep.exists() {
            Some(100.0 * read_json::<EnsembleManifest>(&ep)?.test_accuracy)
        } else {
            None
        };
        let report = Report {
            teacher_accuracy,
            ensemble_accuracy,
            rows,
        };
        report.write_dir(&self.path("report"))?;
        Ok(report)
    }
}

pub fn trial_name(index: usize) -> String {
    format!("hpo-{index:03}")
}

fn list_dirs(dir: &Path) -> Result<Vec<String>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// Rebuild a model from its architecture string and checkpoint file.
pub fn load_model(arch: &str, dropout: &[f64], ckpt: &Path) -> Result<ModelGraph<f32>> {
    let spec = parse(arch)?;
    let mut model = build_model(
        &spec,
        &BuildOptions {
            init_scale: 1.0,
            dropout: dropout.to_vec(),
        },
        &mut crate::rng::RngStream::new(0),
    )?;
    let bytes = std::fs::read(ckpt).map_err(|e| Error::io(ckpt, e))?;
    model.load_checkpoint(&bytes)?;
    Ok(model)
}
