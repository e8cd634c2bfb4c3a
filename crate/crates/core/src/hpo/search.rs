use super::suggest::{halton, random_shift, suggest_next, SuggestConfig};
use super::{Space, Trial, TrialLedger, TrialStatus};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::{Rng, RngCore};
use std::time::Instant;

/// One evaluation handed to the objective.
#[derive(Clone, Debug)]
pub struct TrialRequest {
    pub index: usize,
    pub point: Vec<f64>,
    pub unit_point: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    /// Total trials the ledger should hold when the search returns.
    pub trials: usize,
    /// Trials evaluated concurrently per round.
    pub parallelism: usize,
    pub seed: u64,
    pub suggest: SuggestConfig,
}

impl SearchOptions {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            parallelism: 1,
            seed,
            suggest: SuggestConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchSummary {
    pub best: Option<Trial>,
    /// Up to five best successful trials.
    pub top: Vec<Trial>,
    /// Trials evaluated by this call.
    pub ran: usize,
}

fn trial_seed(seed: u64, index: usize) -> u64 {
    RngStream::new(seed).named("trial").split(index as u64).next_u64()
}

/// Errors that mark a bad region of the space rather than a broken setup.
fn is_trial_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::Diverged { .. } | Error::NonFinite(_) | Error::BudgetTooSmall { .. }
    )
}

/// Proposal for trial `index` given the committed ledger and earlier pending points.
/// Depends only on those and the seed, so a resumed search proposes the same point.
pub fn propose(ledger: &TrialLedger, pending: &[Vec<f64>], seed: u64, cfg: &SuggestConfig) -> Result<Vec<f64>> {
    let space = ledger.space();
    let shift = random_shift(&mut RngStream::new(seed).named("design"), space.len());
    let index = ledger.len() + pending.len();
    let observed = ledger.observations();
    // Failed trials with nothing to impute from still use up a design point.
    if index < cfg.n_init || observed.len() < 2 {
        return Ok(halton(index as u64 + 1, &shift));
    }
    let mut rng = RngStream::new(seed).named("suggest").split(index as u64);
    suggest_next(&observed, pending, space.len(), &shift, cfg, &mut rng)
}

/// Suggest, evaluate and record until the ledger holds `opts.trials` trials.
/// Failed evaluations are recorded as the worst value so far; other errors stop the
/// search with everything up to that point persisted.
pub fn run_search<F>(ledger: &mut TrialLedger, opts: &SearchOptions, objective: F) -> Result<SearchSummary>
where
    F: Fn(&TrialRequest) -> Result<f64> + Sync,
{
    let start = ledger.len();
    let width = opts.parallelism.max(1);
    while ledger.len() < opts.trials {
        let round = width.min(opts.trials - ledger.len());
        let mut pending: Vec<Vec<f64>> = Vec::with_capacity(round);
        for _ in 0..round {
            pending.push(propose(ledger, &pending, opts.seed, &opts.suggest)?);
        }
        let space = ledger.space();
        let requests = pending
            .into_iter()
            .enumerate()
            .map(|(k, unit)| {
                let index = ledger.len() + k;
                Ok(TrialRequest {
                    index,
                    point: space.untransform_point(&unit)?,
                    unit_point: unit,
                    seed: trial_seed(opts.seed, index),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let run = |r: &TrialRequest| {
            let t = Instant::now();
            let out = objective(r);
            (out, t.elapsed().as_secs_f64())
        };
        let results: Vec<(Result<f64>, f64)> = if requests.len() == 1 {
            vec![run(&requests[0])]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = requests.iter().map(|r| s.spawn(move || run(r))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("trial thread panicked"))
                    .collect()
            })
        };
        // Committed in index order so the ledger never depends on thread timing.
        for (req, (out, wall)) in requests.into_iter().zip(results) {
            let (value, status, message) = match out {
                Ok(v) if v.is_finite() => (Some(v), TrialStatus::Ok, None),
                Ok(v) => (
                    ledger.worst_value(),
                    TrialStatus::Failed,
                    Some(format!("objective returned {v}")),
                ),
                Err(e) if is_trial_failure(&e) => (ledger.worst_value(), TrialStatus::Failed, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            ledger.append(Trial {
                index: req.index,
                point: req.point,
                unit_point: req.unit_point,
                value,
                status,
                wall_seconds: wall,
                seed: req.seed,
                message,
            })?;
        }
    }
    Ok(SearchSummary {
        best: ledger.best().cloned(),
        top: ledger.top(5).into_iter().cloned().collect(),
        ran: ledger.len() - start,
    })
}

/// Uniform random search baseline; returns the best value after each trial.
pub fn random_search(space: &Space, trials: usize, seed: u64, objective: impl Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
    let mut rng = RngStream::new(seed).named("random-search");
    let mut best = f64::INFINITY;
    let mut trace = Vec::with_capacity(trials);
    for _ in 0..trials {
        let u: Vec<f64> = (0..space.len()).map(|_| rng.gen::<f64>()).collect();
        best = best.min(objective(&space.untransform_point(&u)?));
        trace.push(best);
    }
    Ok(trace)
}

/// Branin-Hoo on `x1 in [-5, 10]`, `x2 in [0, 15]`; global minimum 0.397887.
pub fn branin(x: &[f64]) -> f64 {
    use std::f64::consts::PI;
    let (x1, x2) = (x[0], x[1]);
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

pub const BRANIN_MIN: f64 = 0.397_887_357_729_738;

pub fn branin_space() -> Space {
    Space::new(
        "branin",
        vec![
            super::ParamDef::linear("x1", -5.0, 10.0),
            super::ParamDef::linear("x2", 0.0, 15.0),
        ],
    )
    .expect("valid space")
}
