use crate::distill::{width_bounds, Family};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// How a searched coordinate `x` in `[lo, hi]` maps to the value handed to training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Linear,
    /// value = e^-x
    ExpNegative,
    /// value = 1 - e^-x
    OneMinusExp,
}

impl Scale {
    fn value(self, x: f64) -> f64 {
        match self {
            Scale::Linear => x,
            Scale::ExpNegative => (-x).exp(),
            Scale::OneMinusExp => -(-x).exp_m1(),
        }
    }

    fn coordinate(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::ExpNegative => -v.ln(),
            Scale::OneMinusExp => -(-v).ln_1p(),
        }
    }
}

/// One searched dimension. `lo` and `hi` bound the optimized coordinate, not the value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDef {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl ParamDef {
    pub fn linear(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            lo,
            hi,
            scale: Scale::Linear,
        }
    }

    /// Log-scale dimension given by the range of its values.
    pub fn from_values(name: &str, scale: Scale, v_lo: f64, v_hi: f64) -> Self {
        let (a, b) = (scale.coordinate(v_lo), scale.coordinate(v_hi));
        Self {
            name: name.into(),
            lo: a.min(b),
            hi: a.max(b),
            scale,
        }
    }

    /// Value range, ascending.
    pub fn value_range(&self) -> (f64, f64) {
        let (a, b) = (self.scale.value(self.lo), self.scale.value(self.hi));
        (a.min(b), a.max(b))
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::invalid(format!(
                "dimension `{}` has bounds [{}, {}]",
                self.name, self.lo, self.hi
            )));
        }
        if self.scale == Scale::OneMinusExp && self.lo < 0.0 {
            return Err(Error::invalid(format!("dimension `{}` maps below zero", self.name)));
        }
        Ok(())
    }

    pub fn to_unit(&self, value: f64) -> Result<f64> {
        let (v_lo, v_hi) = self.value_range();
        let tol = 1e-12 * v_lo.abs().max(v_hi.abs()).max(1.0);
        if !(value >= v_lo - tol && value <= v_hi + tol) {
            return Err(Error::invalid(format!(
                "`{}` = {value} is outside [{v_lo}, {v_hi}]",
                self.name
            )));
        }
        let x = self.scale.coordinate(value.clamp(v_lo, v_hi));
        Ok(((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0))
    }

    pub fn from_unit(&self, u: f64) -> Result<f64> {
        if !(-1e-12..=1.0 + 1e-12).contains(&u) {
            return Err(Error::invalid(format!(
                "unit coordinate {u} for `{}` is outside [0, 1]",
                self.name
            )));
        }
        let x = self.lo + u.clamp(0.0, 1.0) * (self.hi - self.lo);
        let (v_lo, v_hi) = self.value_range();
        Ok(self.scale.value(x).clamp(v_lo, v_hi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Space {
    pub name: String,
    pub dims: Vec<ParamDef>,
}

impl Space {
    pub fn new(name: impl Into<String>, dims: Vec<ParamDef>) -> Result<Self> {
        let s = Self {
            name: name.into(),
            dims,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::invalid(format!("space `{}` has no dimensions", self.name)));
        }
        for (i, d) in self.dims.iter().enumerate() {
            d.validate()?;
            if self.dims[..i].iter().any(|e| e.name == d.name) {
                return Err(Error::invalid(format!("dimension `{}` appears twice", d.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dims.len() {
            return Err(Error::invalid(format!(
                "point has {n} coordinates, space `{}` has {}",
                self.name,
                self.dims.len()
            )));
        }
        Ok(())
    }

    pub fn transform_point(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_len(values.len())?;
        self.dims.iter().zip(values).map(|(d, &v)| d.to_unit(v)).collect()
    }

    pub fn untransform_point(&self, unit: &[f64]) -> Result<Vec<f64>> {
        self.check_len(unit.len())?;
        self.dims.iter().zip(unit).map(|(d, &u)| d.from_unit(u)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("space serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Space = serde_json::from_str(text).map_err(|e| Error::format(None, e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        crate::distill::hex(&Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn value(&self, point: &[f64], name: &str) -> Result<f64> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::invalid(format!("space `{}` has no dimension `{name}`", self.name)))?;
        point
            .get(i)
            .copied()
            .ok_or_else(|| Error::invalid("point is shorter than the space"))
    }
}

/// Dimension names of the teacher space, in order.
pub const TEACHER_DIMS: [&str; 18] = [
    "lr",
    "momentum",
    "weight_decay",
    "init_scale",
    "do_c1",
    "do_c2",
    "do_c3",
    "do_f1",
    "do_f2",
    "d_h",
    "d_s",
    "d_v",
    "a_s",
    "a_v",
    "c1",
    "c2",
    "c3",
    "h1",
];

pub fn teacher_space() -> Space {
    let lin = ParamDef::linear;
    Space::new(
        "teacher",
        vec![
            ParamDef {
                name: "lr".into(),
                lo: 3.0,
                hi: 4.6,
                scale: Scale::ExpNegative,
            },
            ParamDef::from_values("momentum", Scale::OneMinusExp, 0.80, 0.91),
            lin("weight_decay", 5e-5, 4e-4),
            lin("init_scale", 0.8, 1.35),
            lin("do_c1", 0.1, 0.3),
            lin("do_c2", 0.25, 0.35),
            lin("do_c3", 0.3, 0.44),
            lin("do_f1", 0.2, 0.65),
            lin("do_f2", 0.2, 0.65),
            lin("d_h", 0.03, 0.11),
            lin("d_s", 0.2, 0.3),
            lin("d_v", 0.0, 0.2),
            lin("a_s", 0.2, 0.3),
            lin("a_v", 0.03, 0.2),
            lin("c1", 0.0, 1.0),
            lin("c2", 0.0, 1.0),
            lin("c3", 0.0, 1.0),
            lin("h1", 0.0, 1.0),
        ],
    )
    .expect("built-in space is valid")
}

/// Student space: learning rate, momentum, input and init scales, then one width
/// scalar (or layer ratio) per searched slot, named `w0`, `w1`, ...
pub fn student_space(family: Family, budget: u64, lr_range: (f64, f64)) -> Result<Space> {
    use crate::distill::{INIT_SCALE_RANGE, INPUT_SCALE_RANGE, MOMENTUM_RANGE};
    family.validate()?;
    width_bounds(family, budget)?;
    let mut dims = vec![
        ParamDef::from_values("lr", Scale::ExpNegative, lr_range.0, lr_range.1),
        ParamDef::from_values("momentum", Scale::OneMinusExp, MOMENTUM_RANGE.0, MOMENTUM_RANGE.1),
        ParamDef::linear("input_scale", INPUT_SCALE_RANGE.0, INPUT_SCALE_RANGE.1),
        ParamDef::linear("init_scale", INIT_SCALE_RANGE.0, INIT_SCALE_RANGE.1),
    ];
    // Ratios start above zero so a layer never vanishes.
    let w_lo = if family.uses_ratios() { 0.05 } else { 0.0 };
    for i in 0..family.width_slots() {
        dims.push(ParamDef::linear(&format!("w{i}"), w_lo, 1.0));
    }
    Space::new(format!("student-{family}-{budget}"), dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;

    #[test]
    fn learning_rate_exponent_spans_full_range() {
        let s = teacher_space();
        let (lo, hi) = s.dims[0].value_range();
        assert!((lo - (-4.6f64).exp()).abs() < 1e-15 && (lo - 0.010).abs() < 5e-4);
        assert!((hi - (-3.0f64).exp()).abs() < 1e-15 && (hi - 0.050).abs() < 5e-4);
        let m = &s.dims[1];
        assert!((m.lo - 5f64.ln()).abs() < 1e-12);
        assert!((m.hi - (1.0 / 0.09f64).ln()).abs() < 1e-12);
        assert_eq!(s.len(), 18);
        let names: Vec<&str> = s.dims.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, TEACHER_DIMS);
    }

    #[test]
    fn linear_unit_dim_is_identity() {
        let d = ParamDef::linear("x", 0.0, 1.0);
        for u in [0.0, 0.25, 0.7, 1.0] {
            assert_eq!(d.from_unit(u).unwrap(), u);
            assert_eq!(d.to_unit(u).unwrap(), u);
        }
    }

    #[test]
    fn round_trip_on_random_points() {
        let s = student_space(Family::Cnn(2), 1_000_000, crate::distill::LR_RANGE).unwrap();
        let t = teacher_space();
        let mut rng = RngStream::new(9);
        for _ in 0..10_000 {
            for space in [&s, &t] {
                let v: Vec<f64> = space
                    .dims
                    .iter()
                    .map(|d| {
                        let (a, b) = d.value_range();
                        rng.gen_range(a..=b)
                    })
                    .collect();
                let back = space.untransform_point(&space.transform_point(&v).unwrap()).unwrap();
                for (a, b) in v.iter().zip(&back) {
                    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn out_of_bounds_names_dimension() {
        let t = teacher_space();
        let mut v = t.untransform_point(&[0.5; 18]).unwrap();
        v[2] = 1.0;
        let e = t.transform_point(&v).unwrap_err().to_string();
        assert!(e.contains("weight_decay"), "{e}");
        assert!(t.untransform_point(&[1.5; 18]).is_err());
    }

    #[test]
    fn hash_tracks_definition() {
        let a = teacher_space();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.dims[3].hi = 1.4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(Space::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn student_space_matches_ranges() {
        let s = student_space(Family::Cnn(1), 100_000, crate::distill::LR_RANGE).unwrap();
        assert_eq!(s.len(), 6);
        let (lo, hi) = s.dims[0].value_range();
        assert!((lo - 0.0013).abs() < 1e-15 && (hi - 0.016).abs() < 1e-15);
        let (lo, hi) = s.dims[1].value_range();
        assert!((lo - 0.68).abs() < 1e-12 && (hi - 0.97).abs() < 1e-12);
    }
}
