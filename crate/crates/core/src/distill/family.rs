//! Student families and their width bounds.

use crate::arch::{parse, solve_dependent_width, widths_from_ratios, widths_from_scalars, ArchSpec};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The four budgets of the full-scale grid.
pub const FULL_BUDGETS: [u64; 4] = [1_000_000, 3_160_000, 10_000_000, 31_600_000];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    /// Fully connected student with 1-5 hidden layers.
    Mlp(u8),
    /// Convolutional student with 1-4 conv layers and one hidden fc layer.
    Cnn(u8),
}

impl Family {
    pub fn all() -> Vec<Family> {
        (1..=5).map(Family::Mlp).chain((1..=4).map(Family::Cnn)).collect()
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            Family::Mlp(1..=5) | Family::Cnn(1..=4) => Ok(self),
            _ => Err(Error::invalid(format!("no student family {self}"))),
        }
    }

    pub fn conv_layers(self) -> usize {
        match self {
            Family::Mlp(_) => 0,
            Family::Cnn(c) => c as usize,
        }
    }

    /// Families with zero or one conv layer carry a linear bottleneck, except deeper
    /// MLPs, whose layers are all nonlinear.
    pub fn has_bottleneck(self) -> bool {
        matches!(self, Family::Mlp(1) | Family::Cnn(1))
    }

    /// Whether widths come from per-layer ratios rather than bounded scalars.
    pub fn uses_ratios(self) -> bool {
        matches!(self, Family::Mlp(d) if d >= 2)
    }

    /// Architecture with placeholders `{0}`, `{1}`, ... for searched widths and a
    /// dependent slot.
    fn template(self) -> &'static str {
        match self {
            Family::Mlp(1) => "lfc-{0}fc",
            Family::Cnn(1) => "{0}c:5-mp:3-lfc-{1}fc",
            Family::Cnn(2) => "{0}c:5-mp-{1}c:5-mp-fc",
            Family::Cnn(3) => "{0}c:5-mp-{1}c:5-mp-{2}c:5-mp-fc",
            Family::Cnn(4) => "{0}c:5-mp-{1}c:5-{2}c:5-mp-{3}c:5-mp-fc",
            _ => "",
        }
    }

    /// Searched width slots (layer count for ratio families).
    pub fn width_slots(self) -> usize {
        match self {
            Family::Mlp(d) => d as usize,
            Family::Cnn(1) => 2,
            Family::Cnn(c) => c as usize,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Mlp(d) => write!(f, "mlp-{d}"),
            Family::Cnn(c) => write!(f, "cnn-{c}"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unknown student family `{s}` (expected mlp-1..5 or cnn-1..4)"));
        let (kind, n) = s.split_once('-').ok_or_else(bad)?;
        let n: u8 = n.parse().map_err(|_| bad())?;
        match kind {
            "mlp" => Family::Mlp(n),
            "cnn" => Family::Cnn(n),
            _ => return Err(bad()),
        }
        .validate()
        .map_err(|_| bad())
    }
}

/// Bounds on the searched widths for a (family, budget) cell. The four full-scale
/// budgets use fixed per-cell bounds; smaller budgets get desk bounds.
pub fn width_bounds(family: Family, budget: u64) -> Result<Vec<(usize, usize)>> {
    family.validate()?;
    if family.uses_ratios() {
        return Ok(Vec::new());
    }
    let cell = FULL_BUDGETS.iter().position(|&b| b == budget);
    let b = |lo, hi| (lo, hi);
    let rows: Vec<(usize, usize)> = match (family, cell) {
        (Family::Mlp(1), Some(0)) => vec![b(500, 5000)],
        (Family::Mlp(1), Some(1)) => vec![b(1000, 20000)],
        (Family::Mlp(1), Some(2)) => vec![b(5000, 30000)],
        (Family::Mlp(1), Some(3)) => vec![b(5000, 45000)],
        (Family::Cnn(1), Some(0)) => vec![b(40, 150), b(200, 1600)],
        (Family::Cnn(1), Some(1)) => vec![b(50, 300), b(100, 4000)],
        (Family::Cnn(1), Some(2)) => vec![b(50, 450), b(500, 20000)],
        (Family::Cnn(1), Some(3)) => vec![b(200, 600), b(1000, 4100)],
        (Family::Cnn(2), Some(0)) => vec![b(20, 120), b(20, 120)],
        (Family::Cnn(2), Some(1)) => vec![b(50, 250), b(20, 120)],
        (Family::Cnn(2), Some(2)) => vec![b(50, 350), b(20, 120)],
        (Family::Cnn(2), Some(3)) => vec![b(50, 800), b(20, 120)],
        (Family::Cnn(3), Some(0)) => vec![b(20, 110); 3],
        (Family::Cnn(3), Some(1)) => vec![b(40, 200); 3],
        (Family::Cnn(3), Some(2)) => vec![b(50, 350); 3],
        (Family::Cnn(3), Some(3)) => vec![b(50, 650); 3],
        (Family::Cnn(4), Some(0)) => vec![b(25, 100); 4],
        (Family::Cnn(4), Some(1)) => vec![b(50, 150), b(50, 150), b(50, 200), b(50, 200)],
        (Family::Cnn(4), Some(2)) => vec![b(50, 300), b(50, 300), b(50, 350), b(50, 350)],
        (Family::Cnn(4), Some(3)) => vec![b(50, 500), b(50, 500), b(50, 650), b(50, 650)],
        // Desk cells: small filter banks so a CPU run finishes in minutes.
        (Family::Mlp(1), None) => vec![b(100, 1000)],
        (Family::Cnn(1), None) => vec![b(8, 32), b(50, 400)],
        (Family::Cnn(c), None) => vec![b(8, 32); c as usize],
        _ => unreachable!("validated family"),
    };
    Ok(rows)
}

fn fill(template: &str, widths: &[usize]) -> String {
    let mut s = template.to_string();
    for (i, w) in widths.iter().enumerate() {
        s = s.replace(&format!("{{{i}}}"), &w.to_string());
    }
    s
}

/// Architecture for explicit searched widths, with the dependent width solved.
pub fn student_spec_from_widths(family: Family, budget: u64, widths: &[usize]) -> Result<ArchSpec> {
    family.validate()?;
    if family.uses_ratios() {
        if widths.len() != family.width_slots() || widths.contains(&0) {
            return Err(Error::invalid(format!(
                "{family} needs {} positive widths",
                family.width_slots()
            )));
        }
        let body: Vec<String> = widths.iter().map(|w| format!("{w}fc")).collect();
        let spec = parse(&body.join("-"))?;
        let n = crate::arch::count_params(&spec)?;
        if n > budget {
            return Err(Error::BudgetTooSmall { budget, minimum: n });
        }
        return Ok(spec);
    }
    let bounds = width_bounds(family, budget)?;
    if widths.len() != bounds.len() {
        return Err(Error::invalid(format!(
            "{family} takes {} searched widths, got {}",
            bounds.len(),
            widths.len()
        )));
    }
    for (i, (&w, &(lo, hi))) in widths.iter().zip(&bounds).enumerate() {
        if w < lo || w > hi {
            return Err(Error::invalid(format!(
                "{family} width {i} = {w} outside bounds [{lo}, {hi}] for budget {budget}"
            )));
        }
    }
    solve_dependent_width(&parse(&fill(family.template(), widths))?, budget)
}

/// Architecture from searched scalars in `[0,1]` (or layer ratios for deep MLPs).
pub fn student_spec(family: Family, budget: u64, scalars: &[f64]) -> Result<ArchSpec> {
    family.validate()?;
    if family.uses_ratios() {
        let widths = widths_from_ratios(scalars, budget, crate::data::IMAGE_LEN)?;
        return student_spec_from_widths(family, budget, &widths);
    }
    let widths = widths_from_scalars(scalars, &width_bounds(family, budget)?)?;
    student_spec_from_widths(family, budget, &widths)
}
