use super::{ArchSpec, NodeKind, Width};
use crate::error::{Error, Result};
use serde::Serialize;

/// Parameters and output shape of one unrolled layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerCount {
    pub layer: String,
    pub params: u64,
    pub output: Vec<usize>,
}

fn unresolved(spec: &ArchSpec) -> Error {
    Error::invalid(format!("architecture `{spec}` has an unresolved dependent width"))
}

/// Per-layer parameter breakdown with same-padded convolutions on a 3x32x32 input.
pub fn layer_params(spec: &ArchSpec) -> Result<Vec<LayerCount>> {
    let [mut c, mut h, mut w] = spec.input_shape();
    let mut flat: Option<usize> = None;
    let mut out = Vec::new();
    for kind in spec.unrolled() {
        let (layer, params, output) = match kind {
            NodeKind::Conv { filters, kernel } => {
                let f = filters.fixed().ok_or_else(|| unresolved(spec))?;
                if flat.is_some() {
                    return Err(Error::invalid("convolution after a fully connected layer"));
                }
                let p = (c * kernel * kernel * f + f) as u64;
                c = f;
                (format!("{f}c:{kernel}"), p, vec![c, h, w])
            }
            NodeKind::MaxPool { window } => {
                if flat.is_some() || window > h || window > w {
                    return Err(Error::invalid(format!(
                        "pool window {window} does not fit a {h}x{w} map"
                    )));
                }
                h /= window;
                w /= window;
                (format!("mp:{window}"), 0, vec![c, h, w])
            }
            NodeKind::Fc { units: u } | NodeKind::Bottleneck { units: u } => {
                let u = u.fixed().ok_or_else(|| unresolved(spec))?;
                let fin = flat.unwrap_or(c * h * w);
                flat = Some(u);
                let tag = if matches!(kind, NodeKind::Fc { .. }) {
                    "fc"
                } else {
                    "lfc"
                };
                (format!("{u}{tag}"), (fin * u + u) as u64, vec![u])
            }
            NodeKind::Output { classes } => {
                let fin = flat.unwrap_or(c * h * w);
                flat = Some(classes);
                (format!("{classes}out"), (fin * classes + classes) as u64, vec![classes])
            }
        };
        out.push(LayerCount { layer, params, output });
    }
    Ok(out)
}

/// Exact number of weights and biases.
pub fn count_params(spec: &ArchSpec) -> Result<u64> {
    Ok(layer_params(spec)?.iter().map(|l| l.params).sum())
}

/// Largest dependent width whose model fits in `budget` parameters.
pub fn solve_dependent_width(template: &ArchSpec, budget: u64) -> Result<ArchSpec> {
    if template.dependent_index().is_none() {
        return Err(Error::invalid(format!(
            "architecture `{template}` has no dependent width"
        )));
    }
    debug_assert!(
        template
            .nodes()
            .iter()
            .filter(|n| n.kind.width() == Some(Width::Dependent))
            .count()
            == 1
    );
    let count = |w: usize| count_params(&template.resolve(w)?);
    let minimum = count(1)?;
    if minimum > budget {
        return Err(Error::BudgetTooSmall { budget, minimum });
    }
    let (mut lo, mut hi) = (1usize, 2usize);
    while count(hi)? <= budget {
        lo = hi;
        hi *= 2;
    }
    // count(lo) fits, count(hi) does not.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if count(mid)? <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    template.resolve(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::parse;

    fn within(count: u64, reported: f64, tol: f64) -> bool {
        ((count as f64) / reported - 1.0).abs() <= tol
    }

    #[test]
    fn teacher_rows_match_reported_sizes() {
        let rows = [
            ("76c^2-mp-126c^2-mp-148c^4-mp-1200fc^2", 5.3e6),
            ("96c^2-mp-171c^2-mp-128c^4-mp-512fc^2", 2.5e6),
            ("54c^2-mp-158c^2-mp-189c^4-mp-1044fc^2", 5.8e6),
        ];
        for (s, reported) in rows {
            let n = count_params(&parse(s).unwrap()).unwrap();
            assert!(within(n, reported, 0.03), "{s}: {n}");
        }
    }

    #[test]
    fn hand_counted_teacher() {
        // conv: 3*9*76+76, 76*9*76+76, 76*9*126+126, 126*9*126+126,
        // 126*9*148+148, 3 x (148*9*148+148); fc: 2368*1200+1200, 1200*1200+1200, 1200*10+10
        let n = count_params(&parse("76c^2-mp-126c^2-mp-148c^4-mp-1200fc^2").unwrap()).unwrap();
        assert_eq!(n, 5_339_350);
    }

    #[test]
    fn single_output_layer() {
        let spec = ArchSpec::from_nodes(Vec::new());
        assert!(spec.is_err());
        let s = parse("3072lfc").unwrap();
        let l = layer_params(&s).unwrap();
        assert_eq!(l.last().unwrap().params, 3072 * 10 + 10);
        assert_eq!(l[0].params, 3072 * 3072 + 3072);
    }

    #[test]
    fn repeated_equals_unrolled() {
        let a = parse("16c^3-mp-20fc^2").unwrap();
        let b = parse("16c-16c-16c-mp-20fc-20fc").unwrap();
        assert_eq!(count_params(&a).unwrap(), count_params(&b).unwrap());
    }

    #[test]
    fn dependent_needs_resolution() {
        let t = parse("1000fc-lfc").unwrap();
        assert!(count_params(&t).is_err());
    }

    #[test]
    fn solve_matches_scan() {
        let t = parse("lfc-1000fc").unwrap();
        let budget = 10_000_000;
        let solved = solve_dependent_width(&t, budget).unwrap();
        let mut best = 0;
        for w in 1..5000 {
            let n = 3072 * w + w + w * 1000 + 1000 + 1000 * 10 + 10;
            if n <= budget as usize {
                best = w;
            }
        }
        assert_eq!(solved.widths()[0], Some(best));
        assert!(count_params(&solved).unwrap() <= budget);
        assert!(count_params(&t.resolve(best + 1).unwrap()).unwrap() > budget);
    }

    #[test]
    fn budget_too_small() {
        let t = parse("500c-mp-fc").unwrap();
        assert!(matches!(
            solve_dependent_width(&t, 1000),
            Err(Error::BudgetTooSmall { budget: 1000, .. })
        ));
    }
}
