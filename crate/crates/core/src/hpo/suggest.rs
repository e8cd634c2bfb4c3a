use super::gp::GpSurrogate;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::Rng;

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131,
];

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best` of a Gaussian with mean `mu` and standard
/// deviation `sigma`. At `sigma == 0` this is the limit `max(best - mu, 0)`.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    let gain = best - mu;
    if !(sigma > 1e-12 * gain.abs().max(1e-300)) {
        return gain.max(0.0);
    }
    let u = gain / sigma;
    (gain * normal_cdf(u) + sigma * normal_pdf(u)).max(0.0)
}

/// Radical inverse of `i` in `base`.
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Halton point `index` (starting at 1) with a Cranley-Patterson rotation.
pub fn halton(index: u64, shift: &[f64]) -> Vec<f64> {
    assert!(shift.len() <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
    shift
        .iter()
        .zip(PRIMES)
        .map(|(s, p)| (radical_inverse(index, p) + s).fract())
        .collect()
}

pub fn random_shift(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen::<f64>()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuggestConfig {
    /// Low-discrepancy points proposed before the first GP fit.
    pub n_init: usize,
    pub candidates: usize,
    /// Best candidates refined by coordinate search.
    pub refine: usize,
}

impl Default for SuggestConfig {
    fn default() -> Self {
        Self {
            n_init: 8,
            candidates: 2048,
            refine: 5,
        }
    }
}

/// Coordinate search on EI from `start`, shrinking the step when no move helps.
fn coordinate_ascent(f: &dyn Fn(&[f64]) -> f64, start: &[f64]) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut fx = f(&x);
    let mut step = 0.05;
    let mut iters = 0;
    while step > 1e-4 && iters < 400 {
        iters += 1;
        let mut moved = false;
        for d in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] = (y[d] + dir * step).clamp(0.0, 1.0);
                if y[d] == x[d] {
                    continue;
                }
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Next unit-cube point to evaluate.
///
/// `observed` pairs unit points with objective values; `pending` points are being
/// evaluated and stand in at their posterior mean. The first `n_init` proposals
/// follow a shifted Halton sequence determined by `design_shift`; later ones maximize
/// expected improvement. `rng` drives the GP restarts and candidate rotation.
pub fn suggest_next(
    observed: &[(Vec<f64>, f64)],
    pending: &[Vec<f64>],
    dim: usize,
    design_shift: &[f64],
    cfg: &SuggestConfig,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if dim == 0 || design_shift.len() != dim {
        return Err(Error::invalid("design shift must match the space dimension"));
    }
    let taken = observed.len() + pending.len();
    if observed.len() < 2 || taken < cfg.n_init {
        return Ok(halton(taken as u64 + 1, design_shift));
    }
    let x: Vec<Vec<f64>> = observed.iter().map(|(p, _)| p.clone()).collect();
    let y: Vec<f64> = observed.iter().map(|(_, v)| *v).collect();
    let mut gp = GpSurrogate::fit(x.clone(), &y, rng)?;
    let best = y.iter().copied().fold(f64::INFINITY, f64::min);
    if !pending.is_empty() {
        let mut fx = x;
        let mut fy = y;
        for p in pending {
            fx.push(p.clone());
            fy.push(gp.predict(p).0);
        }
        gp = GpSurrogate::with_params(fx, &fy, gp.params().clone())?;
    }
    let ei = |u: &[f64]| {
        let (m, v) = gp.predict(u);
        expected_improvement(m, v.sqrt(), best)
    };
    let rotation = random_shift(rng, dim);
    let offset = rng.gen_range(0..1u64 << 20);
    let mut scored: Vec<(f64, Vec<f64>)> = (0..cfg.candidates as u64)
        .map(|i| {
            let u = halton(offset + i + 1, &rotation);
            (ei(&u), u)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let incumbent = observed
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| p.clone())
        .expect("observations present");
    let mut starts: Vec<Vec<f64>> = scored.iter().take(cfg.refine).map(|(_, u)| u.clone()).collect();
    starts.push(incumbent);
    let mut out = scored.swap_remove(0);
    for s in starts {
        let (u, v) = coordinate_ascent(&ei, &s);
        if v > out.0 {
            out = (v, u);
        }
    }
    Ok(out.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_closed_forms() {
        assert!((expected_improvement(1.0, 1.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert_eq!(expected_improvement(0.5, 0.0, 0.4), 0.0);
        assert_eq!(expected_improvement(0.4, 0.0, 0.4), 0.0);
        let mut prev = 0.0;
        for k in 1..50 {
            let e = expected_improvement(1.2, k as f64 * 0.1, 1.0);
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn ei_is_never_negative() {
        let mut rng = RngStream::new(5);
        for _ in 0..10_000 {
            let mu = rng.gen_range(-5.0..5.0);
            let s = rng.gen_range(0.0..3.0);
            let b = rng.gen_range(-5.0..5.0);
            assert!(expected_improvement(mu, s, b) >= 0.0);
        }
        // Far above the incumbent the tail underflows to exactly zero, never below.
        assert_eq!(expected_improvement(100.0, 1.0, 0.0), 0.0);
    }

    #[test]
    fn halton_matches_radical_inverse() {
        let z = [0.0, 0.0];
        assert_eq!(halton(1, &z), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(2, &z), vec![0.25, 2.0 / 3.0]);
        assert_eq!(halton(3, &z), vec![0.75, 1.0 / 9.0]);
        let p = halton(7, &[0.9, 0.9]);
        assert!(p.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn initial_design_is_quasi_random() {
        let shift = [0.1, 0.2];
        let mut rng = RngStream::new(1);
        let first = suggest_next(&[], &[], 2, &shift, &SuggestConfig::default(), &mut rng).unwrap();
        assert_eq!(first, halton(1, &shift));
    }

    #[test]
    fn quadratic_minimum_is_found() {
        // Oracle: dense grid argmin of the same surface.
        let f = |u: f64| (u - 0.63).powi(2);
        let grid = (0..=10_000)
            .map(|i| i as f64 / 1e4)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        let obs: Vec<(Vec<f64>, f64)> = (0..10)
            .map(|i| {
                let u = (i as f64 + 0.5) / 10.0;
                (vec![u], f(u))
            })
            .collect();
        let mut rng = RngStream::new(7);
        let cfg = SuggestConfig {
            n_init: 2,
            ..SuggestConfig::default()
        };
        let s = suggest_next(&obs, &[], 1, &[0.0], &cfg, &mut rng).unwrap();
        assert!((s[0] - grid).abs() < 0.1, "{s:?} vs {grid}");
    }

    #[test]
    fn pending_points_steer_away() {
        let f = |u: f64| (u - 0.5).powi(2);
        let obs: Vec<(Vec<f64>, f64)> = [0.05, 0.3, 0.45, 0.6, 0.95].iter().map(|&u| (vec![u], f(u))).collect();
        let cfg = SuggestConfig {
            n_init: 2,
            ..SuggestConfig::default()
        };
        let a = suggest_next(&obs, &[], 1, &[0.0], &cfg, &mut RngStream::new(3)).unwrap();
        let b = suggest_next(&obs, std::slice::from_ref(&a), 1, &[0.0], &cfg, &mut RngStream::new(3)).unwrap();
        assert!((a[0] - b[0]).abs() > 1e-3, "{a:?} {b:?}");
    }
}
