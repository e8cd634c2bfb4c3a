//! Result tables written by the experiment driver.

use super::Family;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// One trained student with its hard-target twin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentRow {
    pub family: Family,
    pub budget: u64,
    pub params: u64,
    pub arch: String,
    /// Test accuracy in percent.
    pub soft_accuracy: f64,
    pub hard_accuracy: Option<f64>,
    /// Test accuracy of up to five best runs by validation accuracy, best first.
    #[serde(default)]
    pub top: Vec<f64>,
}

impl StudentRow {
    pub fn gap(&self) -> Option<f64> {
        self.hard_accuracy.map(|h| self.soft_accuracy - h)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Report {
    pub teacher_accuracy: Vec<f64>,
    pub ensemble_accuracy: Option<f64>,
    pub rows: Vec<StudentRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

impl Report {
    /// Sorted by budget then family.
    pub fn sorted_rows(&self) -> Vec<&StudentRow> {
        let mut rows: Vec<&StudentRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| (r.budget, r.family));
        rows
    }

    /// Accuracy per family (rows) and budget (columns).
    pub fn table_csv(&self) -> String {
        let mut budgets: Vec<u64> = self.rows.iter().map(|r| r.budget).collect();
        budgets.sort_unstable();
        budgets.dedup();
        let mut families: Vec<Family> = self.rows.iter().map(|r| r.family).collect();
        families.sort_unstable();
        families.dedup();
        let mut out = String::from("family");
        for b in &budgets {
            let _ = write!(out, ",{b}");
        }
        out.push('\n');
        for f in families {
            out.push_str(&f.to_string());
            for &b in &budgets {
                let cell = self.rows.iter().find(|r| r.family == f && r.budget == b);
                let _ = write!(out, ",{}", fmt_opt(cell.map(|r| r.soft_accuracy)));
            }
            out.push('\n');
        }
        out
    }

    pub fn gaps_csv(&self) -> String {
        let mut out = String::from("family,budget,params,soft,hard,gap\n");
        for r in self.sorted_rows() {
            let _ = writeln!(
                out,
                "{},{},{},{:.2},{},{}",
                r.family,
                r.budget,
                r.params,
                r.soft_accuracy,
                fmt_opt(r.hard_accuracy),
                fmt_opt(r.gap())
            );
        }
        out
    }

    /// Accuracy against parameter count, one series per family.
    pub fn series_json(&self) -> serde_json::Value {
        let mut families: Vec<Family> = self.rows.iter().map(|r| r.family).collect();
        families.sort_unstable();
        families.dedup();
        let series: Vec<serde_json::Value> = families
            .into_iter()
            .map(|f| {
                let points: Vec<serde_json::Value> = self
                    .sorted_rows()
                    .into_iter()
                    .filter(|r| r.family == f)
                    .map(|r| {
                        let mean = (!r.top.is_empty()).then(|| r.top.iter().sum::<f64>() / r.top.len() as f64);
                        serde_json::json!({
                            "params": r.params,
                            "budget": r.budget,
                            "accuracy": r.soft_accuracy,
                            "fifth": r.top.get(4),
                            "mean_top5": mean,
                        })
                    })
                    .collect();
                serde_json::json!({"family": f.to_string(), "points": points})
            })
            .collect();
        serde_json::json!({
            "teachers": self.teacher_accuracy,
            "ensemble": self.ensemble_accuracy,
            "series": series,
        })
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        write("table2.csv", self.table_csv())?;
        write("gaps.csv", self.gaps_csv())?;
        let json = serde_json::to_string_pretty(&self.series_json()).map_err(|e| Error::format(None, e.to_string()))?;
        write("series.json", json)
    }
}
