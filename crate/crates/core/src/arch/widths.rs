use super::{parse, ArchSpec};
use crate::error::{Error, Result};
use crate::tensor::NUM_CLASSES;

/// Filter / unit bounds for the teacher groups (2 convs, 2 convs, 4 convs, 2 fc).
pub const TEACHER_BOUNDS: [(usize, usize); 4] = [(32, 96), (64, 192), (128, 384), (512, 1536)];

/// Map scalars in [0,1] to integer widths, `round(lo + s * (hi - lo))` with halves rounded up.
pub fn widths_from_scalars(scalars: &[f64], bounds: &[(usize, usize)]) -> Result<Vec<usize>> {
    if scalars.len() != bounds.len() {
        return Err(Error::invalid(format!(
            "{} width scalars for {} bounds",
            scalars.len(),
            bounds.len()
        )));
    }
    scalars
        .iter()
        .zip(bounds)
        .map(|(&s, &(lo, hi))| {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid(format!("width scalar {s} outside [0,1]")));
            }
            if lo > hi {
                return Err(Error::invalid(format!("width bounds [{lo},{hi}] reversed")));
            }
            let v = lo as f64 + s * (hi - lo) as f64;
            Ok((v + 0.5).floor() as usize)
        })
        .collect()
}

/// Teacher architecture from its four width scalars.
pub fn teacher_spec(scalars: &[f64; 4]) -> Result<ArchSpec> {
    let w = widths_from_scalars(scalars, &TEACHER_BOUNDS)?;
    parse(&format!("{}c^2-mp-{}c^2-mp-{}c^4-mp-{}fc^2", w[0], w[1], w[2], w[3]))
}

/// Parameters of a fully connected ReLU stack over `inputs` features plus the output layer.
pub fn mlp_param_count(inputs: usize, widths: &[usize]) -> u64 {
    let mut fin = inputs as u64;
    let mut total = 0;
    for &w in widths.iter().chain(std::iter::once(&NUM_CLASSES)) {
        total += fin * w as u64 + w as u64;
        fin = w as u64;
    }
    total
}

fn scaled(ratios: &[f64], t: usize) -> Vec<usize> {
    ratios
        .iter()
        .map(|r| ((t as f64 * r).floor() as usize).max(1))
        .collect()
}

/// Hidden widths for a fully connected stack from relative layer sizes.
///
/// Ratios are normalized to sum to one and scaled by the largest integer factor `t`
/// that keeps the model within budget (`width_i = max(1, floor(t * r_i))`). Leftover
/// budget is then spent one unit at a time on the largest layer.
pub fn widths_from_ratios(ratios: &[f64], budget: u64, inputs: usize) -> Result<Vec<usize>> {
    if ratios.len() < 2 {
        return Err(Error::invalid("ratio allocation needs at least two layers"));
    }
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::invalid(format!("ratios must lie in [0,1], got {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("at least one ratio must be positive"));
    }
    let norm: Vec<f64> = ratios.iter().map(|r| r / total).collect();
    let fits = |t: usize| mlp_param_count(inputs, &scaled(&norm, t)) <= budget;
    let minimum = mlp_param_count(inputs, &vec![1; ratios.len()]);
    if minimum > budget {
        return Err(Error::BudgetTooSmall { budget, minimum });
    }
    let (mut lo, mut hi) = (0usize, 1usize);
    while fits(hi) {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut widths = scaled(&norm, lo);
    let largest = (0..widths.len())
        .max_by_key(|&i| (widths[i], std::cmp::Reverse(i)))
        .expect("non-empty");
    loop {
        widths[largest] += 1;
        if mlp_param_count(inputs, &widths) > budget {
            widths[largest] -= 1;
            break;
        }
    }
    Ok(widths)
}
