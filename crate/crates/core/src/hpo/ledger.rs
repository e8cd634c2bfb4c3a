use super::Space;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    /// The run failed; `value` holds the worst error seen before it, if any.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub point: Vec<f64>,
    pub unit_point: Vec<f64>,
    pub value: Option<f64>,
    pub status: TrialStatus,
    pub wall_seconds: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct SpaceFile {
    hash: String,
    space: Space,
}

/// Append-only trial record. Backed by a JSON-lines file when opened from a path,
/// with the space definition in a `.space.json` file alongside it.
#[derive(Debug)]
pub struct TrialLedger {
    space: Space,
    trials: Vec<Trial>,
    path: Option<PathBuf>,
}

pub fn space_path(ledger: &Path) -> PathBuf {
    let mut s = ledger.as_os_str().to_owned();
    s.push(".space.json");
    PathBuf::from(s)
}

impl TrialLedger {
    pub fn in_memory(space: Space) -> Self {
        Self {
            space,
            trials: Vec::new(),
            path: None,
        }
    }

    /// Open or create the ledger at `path`. A ledger written for a different space
    /// is refused.
    pub fn open(path: &Path, space: &Space) -> Result<Self> {
        let sp = space_path(path);
        let hash = space.hash();
        if sp.exists() {
            let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
            let found: SpaceFile =
                serde_json::from_str(&text).map_err(|e| Error::format(Some(sp.clone()), e.to_string()))?;
            if found.hash != hash || found.space.hash() != hash {
                return Err(Error::SpaceMismatch {
                    expected: hash,
                    found: found.hash,
                });
            }
        } else {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let body = serde_json::to_string_pretty(&SpaceFile {
                hash: hash.clone(),
                space: space.clone(),
            })
            .expect("space serializes");
            std::fs::write(&sp, body).map_err(|e| Error::io(&sp, e))?;
        }
        let mut ledger = Self {
            space: space.clone(),
            trials: Vec::new(),
            path: Some(path.to_path_buf()),
        };
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let complete = text.rfind('\n').map_or(0, |i| i + 1);
            for (n, line) in text[..complete].lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let t: Trial = serde_json::from_str(line)
                    .map_err(|e| Error::format(Some(path.to_path_buf()), format!("line {}: {e}", n + 1)))?;
                ledger.check(&t)?;
                ledger.trials.push(t);
            }
            if complete < text.len() {
                // A torn final line from an interrupted write; drop it.
                let f = OpenOptions::new()
                    .write(true)
                    .open(path)
                    .map_err(|e| Error::io(path, e))?;
                f.set_len(complete as u64).map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(ledger)
    }

    fn check(&self, t: &Trial) -> Result<()> {
        if t.index != self.trials.len() {
            return Err(Error::invalid(format!(
                "trial index {} appended after {} trials",
                t.index,
                self.trials.len()
            )));
        }
        let unit = self.space.transform_point(&t.point)?;
        if t.unit_point.len() != unit.len() || unit.iter().zip(&t.unit_point).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::invalid(format!(
                "trial {} unit point disagrees with its point",
                t.index
            )));
        }
        if t.status == TrialStatus::Ok && !t.value.is_some_and(f64::is_finite) {
            return Err(Error::invalid(format!(
                "trial {} succeeded without a finite value",
                t.index
            )));
        }
        Ok(())
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&mut self, t: Trial) -> Result<()> {
        self.check(&t)?;
        if let Some(path) = &self.path {
            let mut f: File = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let mut line = serde_json::to_string(&t).expect("trial serializes");
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
            f.sync_data().map_err(|e| Error::io(path, e))?;
        }
        self.trials.push(t);
        Ok(())
    }

    pub fn worst_value(&self) -> Option<f64> {
        self.trials
            .iter()
            .filter(|t| t.status == TrialStatus::Ok)
            .filter_map(|t| t.value)
            .reduce(f64::max)
    }

    /// Unit points with values; failed runs count as the worst successful value.
    pub fn observations(&self) -> Vec<(Vec<f64>, f64)> {
        let worst = self.worst_value();
        self.trials
            .iter()
            .filter_map(|t| {
                let v = match t.status {
                    TrialStatus::Ok => t.value,
                    TrialStatus::Failed => worst,
                };
                v.map(|v| (t.unit_point.clone(), v))
            })
            .collect()
    }

    /// Successful trials, lowest value first.
    pub fn top(&self, k: usize) -> Vec<&Trial> {
        let mut ok: Vec<&Trial> = self.trials.iter().filter(|t| t.status == TrialStatus::Ok).collect();
        ok.sort_by(|a, b| {
            a.value
                .unwrap()
                .total_cmp(&b.value.unwrap())
                .then(a.index.cmp(&b.index))
        });
        ok.truncate(k);
        ok
    }

    pub fn best(&self) -> Option<&Trial> {
        self.top(1).into_iter().next()
    }
}
