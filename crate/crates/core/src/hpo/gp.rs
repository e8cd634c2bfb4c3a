//! Gaussian-process surrogate on the unit hypercube.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::Rng;

const SQRT5: f64 = 2.236_067_977_499_79;
const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Kernel hyperparameters in standardized output units.
#[derive(Clone, Debug, PartialEq)]
pub struct GpParams {
    pub lengthscales: Vec<f64>,
    /// Prior variance of the latent function.
    pub amplitude: f64,
    /// Observation noise variance.
    pub noise: f64,
}

impl GpParams {
    pub fn default_for(dim: usize) -> Self {
        Self {
            lengthscales: vec![0.5; dim],
            amplitude: 1.0,
            noise: 1e-6,
        }
    }
}

/// Box on the log-hyperparameters searched by [`GpSurrogate::fit`].
const LOG_LENGTH: (f64, f64) = (-4.6, 3.0); // 0.01 .. 20
const LOG_AMP: (f64, f64) = (-3.0, 3.0);
const LOG_NOISE: (f64, f64) = (-18.4, 0.0); // 1e-8 .. 1

pub fn matern52(a: &[f64], b: &[f64], params: &GpParams) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&params.lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    let r = r2.sqrt();
    params.amplitude * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
}

/// In-place lower Cholesky factor of a row-major `n x n` matrix. Returns false if
/// the matrix is not numerically positive definite.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    true
}

/// Solve `L v = b`.
fn forward_sub(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solve `L^T v = b`.
fn back_sub(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

struct Factor {
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

fn factorize(x: &[Vec<f64>], z: &[f64], params: &GpParams) -> Result<Factor> {
    let n = x.len();
    let mut base = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = matern52(&x[i], &x[j], params);
            base[i * n + j] = k;
            base[j * n + i] = k;
        }
    }
    let mut jitter = 1e-10 * params.amplitude;
    for _ in 0..12 {
        let mut a = base.clone();
        for i in 0..n {
            a[i * n + i] += params.noise + jitter;
        }
        if cholesky(&mut a, n) {
            let mut alpha = z.to_vec();
            forward_sub(&a, n, &mut alpha);
            back_sub(&a, n, &mut alpha);
            return Ok(Factor { chol: a, alpha, jitter });
        }
        jitter *= 10.0;
    }
    Err(Error::NonFinite("GP covariance is not positive definite".into()))
}

fn log_marginal(f: &Factor, z: &[f64]) -> f64 {
    let n = z.len();
    let fit: f64 = z.iter().zip(&f.alpha).map(|(a, b)| a * b).sum();
    let logdet: f64 = (0..n).map(|i| f.chol[i * n + i].ln()).sum();
    -0.5 * fit - logdet - 0.5 * n as f64 * LOG_2PI
}

#[derive(Clone, Debug)]
pub struct GpSurrogate {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_std: f64,
    params: GpParams,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

fn standardize(y: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = if var.sqrt() > 1e-12 * mean.abs().max(1.0) {
        var.sqrt()
    } else {
        1.0
    };
    (mean, std, y.iter().map(|v| (v - mean) / std).collect())
}

fn check_data(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::invalid(format!(
            "GP needs matching points and values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|p| p.len() != d) {
        return Err(Error::invalid("GP points must share a positive dimension"));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GP data contains non-finite values".into()));
    }
    Ok(d)
}

/// Unconstrained Nelder-Mead minimization with the standard coefficients.
fn nelder_mead(f: &mut dyn FnMut(&[f64]) -> f64, start: &[f64], step: f64, max_evals: usize) -> (Vec<f64>, f64) {
    let p = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(p + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..p {
        let mut v = start.to_vec();
        v[i] += step;
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let mut evals = p + 1;
    let cmp = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);
    while evals < max_evals {
        simplex.sort_by(cmp);
        if (simplex[p].1 - simplex[0].1).abs() < 1e-9 * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let mut centroid = vec![0.0; p];
        for (v, _) in &simplex[..p] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / p as f64;
            }
        }
        let toward =
            |t: f64, worst: &[f64]| -> Vec<f64> { centroid.iter().zip(worst).map(|(c, w)| c + t * (w - c)).collect() };
        let worst = simplex[p].0.clone();
        let xr = toward(-1.0, &worst);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = toward(-2.0, &worst);
            let fe = f(&xe);
            evals += 1;
            simplex[p] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[p - 1].1 {
            simplex[p] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[p].1 {
                let xc = toward(-0.5, &worst);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = toward(0.5, &worst);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < simplex[p].1.min(fr) {
                simplex[p] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    for (x, b) in s.0.iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    s.1 = f(&s.0);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(cmp);
    simplex.swap_remove(0)
}

fn clamp_theta(theta: &[f64], d: usize) -> GpParams {
    let c = |v: f64, (lo, hi): (f64, f64)| v.clamp(lo, hi).exp();
    GpParams {
        lengthscales: theta[..d].iter().map(|&t| c(t, LOG_LENGTH)).collect(),
        amplitude: c(theta[d], LOG_AMP),
        noise: c(theta[d + 1], LOG_NOISE),
    }
}

/// Distance outside the search box, used as a penalty so the simplex stays inside.
fn box_excess(theta: &[f64], d: usize) -> f64 {
    let out = |v: f64, (lo, hi): (f64, f64)| (lo - v).max(0.0) + (v - hi).max(0.0);
    theta[..d].iter().map(|&t| out(t, LOG_LENGTH)).sum::<f64>() + out(theta[d], LOG_AMP) + out(theta[d + 1], LOG_NOISE)
}

impl GpSurrogate {
    /// Condition on data with fixed hyperparameters.
    pub fn with_params(x: Vec<Vec<f64>>, y: &[f64], params: GpParams) -> Result<Self> {
        let d = check_data(&x, y)?;
        if params.lengthscales.len() != d {
            return Err(Error::invalid("one lengthscale per dimension is required"));
        }
        let (y_mean, y_std, z) = standardize(y);
        let f = factorize(&x, &z, &params)?;
        Ok(Self {
            x,
            y_mean,
            y_std,
            params,
            chol: f.chol,
            alpha: f.alpha,
            jitter: f.jitter,
        })
    }

    /// Type-II maximum likelihood over log lengthscales, amplitude and noise with a
    /// multi-start simplex search. Constant outputs keep the default hyperparameters.
    pub fn fit(x: Vec<Vec<f64>>, y: &[f64], rng: &mut RngStream) -> Result<Self> {
        let d = check_data(&x, y)?;
        let (_, _, z) = standardize(y);
        if x.len() < 2 || z.iter().all(|v| v.abs() < 1e-12) {
            return Self::with_params(x, y, GpParams::default_for(d));
        }
        let mut objective = |theta: &[f64]| -> f64 {
            let p = clamp_theta(theta, d);
            let penalty = 1e3 * box_excess(theta, d);
            match factorize(&x, &z, &p) {
                Ok(f) => -log_marginal(&f, &z) + penalty,
                Err(_) => 1e30,
            }
        };
        let mut starts = vec![{
            let mut t = vec![(0.3f64).ln(); d];
            t.push(0.0);
            t.push((1e-3f64).ln());
            t
        }];
        for _ in 0..2 {
            let mut t: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.5..1.0)).collect();
            t.push(rng.gen_range(-1.0..1.0));
            t.push(rng.gen_range(-12.0..-3.0));
            starts.push(t);
        }
        let max_evals = (150 * (d + 2)).min(3000);
        let mut best: Option<(Vec<f64>, f64)> = None;
        for s in &starts {
            let (t, v) = nelder_mead(&mut objective, s, 0.7, max_evals);
            if best.as_ref().is_none_or(|b| v < b.1) {
                best = Some((t, v));
            }
        }
        let (theta, _) = best.expect("at least one start");
        Self::with_params(x, y, clamp_theta(&theta, d))
    }

    pub fn params(&self) -> &GpParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    /// Diagonal jitter that made the covariance factorizable.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Log marginal likelihood of the standardized outputs.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.x.len();
        let fit: f64 = {
            // z = L L^T alpha, so z . alpha = |L^T alpha|^2.
            let mut s = 0.0;
            for i in 0..n {
                let v: f64 = (i..n).map(|k| self.chol[k * n + i] * self.alpha[k]).sum();
                s += v * v;
            }
            s
        };
        let logdet: f64 = (0..n).map(|i| self.chol[i * n + i].ln()).sum();
        -0.5 * fit - logdet - 0.5 * n as f64 * LOG_2PI
    }

    /// Posterior mean and variance of the latent function in original units.
    pub fn predict(&self, u: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let mut k: Vec<f64> = self.x.iter().map(|p| matern52(p, u, &self.params)).collect();
        let mean: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        forward_sub(&self.chol, n, &mut k);
        let explained: f64 = k.iter().map(|v| v * v).sum();
        let var = (self.params.amplitude - explained).max(0.0);
        (self.y_mean + self.y_std * mean, var * self.y_std * self.y_std)
    }

    /// Prior mean and variance in original units.
    pub fn prior(&self) -> (f64, f64) {
        (self.y_mean, self.params.amplitude * self.y_std * self.y_std)
    }
}
