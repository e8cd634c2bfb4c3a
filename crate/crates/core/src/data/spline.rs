//! Separable natural cubic spline resampling.

use super::{CHANNELS, SIDE};
use std::sync::OnceLock;

/// Row-major `SIDE x s` matrix mapping `s` samples onto `SIDE` evenly spaced points
/// spanning the same extent.
fn build_matrix(s: usize) -> Vec<f64> {
    let mut m = vec![0.0; SIDE * s];
    for j in 0..s {
        let mut f = vec![0.0; s];
        f[j] = 1.0;
        let curv = natural_second_derivatives(&f);
        for o in 0..SIDE {
            m[o * s + j] = eval(&f, &curv, o as f64 * (s - 1) as f64 / (SIDE - 1) as f64);
        }
    }
    m
}

/// Second derivatives of the natural interpolating spline through `f` at unit spacing.
fn natural_second_derivatives(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on M[i-1] + 4 M[i] + M[i+1] = 6 (f[i+1] - 2 f[i] + f[i-1]).
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (f[i + 2] - 2.0 * f[i + 1] + f[i]);
        if i == 0 {
            c[0] = 1.0 / 4.0;
            d[0] = rhs / 4.0;
        } else {
            let denom = 4.0 - c[i - 1];
            c[i] = 1.0 / denom;
            d[i] = (rhs - d[i - 1]) / denom;
        }
    }
    for i in (0..k).rev() {
        m[i + 1] = if i + 1 == k { d[i] } else { d[i] - c[i] * m[i + 2] };
    }
    m
}

fn eval(f: &[f64], m: &[f64], x: f64) -> f64 {
    let n = f.len();
    if n == 1 {
        return f[0];
    }
    let i = (x.floor() as usize).min(n - 2);
    let t = x - i as f64;
    let u = 1.0 - t;
    u * f[i] + t * f[i + 1] + ((u * u * u - u) * m[i] + (t * t * t - t) * m[i + 1]) / 6.0
}

fn matrix(s: usize) -> &'static [f64] {
    static CACHE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        (0..=SIDE)
            .map(|s| if s == 0 { Vec::new() } else { build_matrix(s) })
            .collect()
    });
    &all[s]
}

/// Resample `src` (length `s`) onto `SIDE` points. The first sample is subtracted and
/// added back so constant signals come through exactly.
fn resample(weights: &[f64], src: &[f64], dst: &mut [f64]) {
    let s = src.len();
    let base = src[0];
    for (o, out) in dst.iter_mut().enumerate() {
        let row = &weights[o * s..(o + 1) * s];
        let acc: f64 = row.iter().zip(src).map(|(w, v)| w * (v - base)).sum();
        *out = base + acc;
    }
}

/// Upscale an `s x s` crop per channel (`(3, s, s)` row-major) to `3 x 32 x 32`.
pub fn resize_square(crop: &[f32], s: usize) -> Vec<f32> {
    assert!((1..=SIDE).contains(&s), "crop side {s} out of range");
    assert_eq!(crop.len(), CHANNELS * s * s);
    if s == SIDE {
        return crop.to_vec();
    }
    let w = matrix(s);
    let mut out = vec![0.0f32; CHANNELS * SIDE * SIDE];
    let mut rows = vec![0.0f64; s * SIDE];
    let mut src = vec![0.0f64; s];
    let mut dst = vec![0.0f64; SIDE];
    for c in 0..CHANNELS {
        let plane = &crop[c * s * s..(c + 1) * s * s];
        // Horizontal pass: s rows of s -> s rows of 32.
        for r in 0..s {
            for (k, v) in src.iter_mut().enumerate() {
                *v = plane[r * s + k] as f64;
            }
            resample(w, &src, &mut dst);
            rows[r * SIDE..(r + 1) * SIDE].copy_from_slice(&dst);
        }
        // Vertical pass.
        for col in 0..SIDE {
            for (r, v) in src.iter_mut().enumerate() {
                *v = rows[r * SIDE + col];
            }
            resample(w, &src, &mut dst);
            for (r, &v) in dst.iter().enumerate() {
                out[c * SIDE * SIDE + r * SIDE + col] = v as f32;
            }
        }
    }
    out
}
