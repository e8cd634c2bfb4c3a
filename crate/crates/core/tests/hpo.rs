use mimic::hpo::{
    branin, branin_space, propose, random_search, run_search, SearchOptions, SuggestConfig, TrialLedger, TrialStatus,
    BRANIN_MIN,
};
use mimic::Error;

fn gp_best(seed: u64, trials: usize) -> f64 {
    let mut ledger = TrialLedger::in_memory(branin_space());
    let s = run_search(&mut ledger, &SearchOptions::new(trials, seed), |r| Ok(branin(&r.point))).unwrap();
    s.best.unwrap().value.unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn branin_search_beats_random() {
    let t = std::time::Instant::now();
    let gp: Vec<f64> = (0..10).map(|s| gp_best(s, 50)).collect();
    let rs: Vec<f64> = (0..10)
        .map(|s| *random_search(&branin_space(), 50, s, branin).unwrap().last().unwrap())
        .collect();
    eprintln!("gp {gp:?}\nrs {rs:?}\n{:?}", t.elapsed());
    assert!(median(gp[..5].to_vec()) <= BRANIN_MIN + 0.012);
    assert!(median(gp.clone()) < median(rs));
}

#[test]
fn resumed_search_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    let opts = SearchOptions::new(14, 3);
    let mut whole = TrialLedger::in_memory(branin_space());
    run_search(&mut whole, &opts, |r| Ok(branin(&r.point))).unwrap();

    let mut part = TrialLedger::open(&path, &branin_space()).unwrap();
    run_search(&mut part, &SearchOptions::new(9, 3), |r| Ok(branin(&r.point))).unwrap();
    drop(part);
    let mut resumed = TrialLedger::open(&path, &branin_space()).unwrap();
    assert_eq!(resumed.len(), 9);
    let s = run_search(&mut resumed, &opts, |r| {
        assert!(r.index >= 9, "old trial {} re-run", r.index);
        Ok(branin(&r.point))
    })
    .unwrap();
    assert_eq!(s.ran, 5);
    for (a, b) in whole.trials().iter().zip(resumed.trials()) {
        assert_eq!(a.point, b.point);
        assert_eq!(a.seed, b.seed);
    }
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 14);
}

#[test]
fn replayed_ledger_suggests_the_same_point() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.jsonl");
    let mut ledger = TrialLedger::open(&path, &branin_space()).unwrap();
    run_search(&mut ledger, &SearchOptions::new(11, 5), |r| Ok(branin(&r.point))).unwrap();
    let cfg = SuggestConfig::default();
    let a = propose(&ledger, &[], 5, &cfg).unwrap();
    let reopened = TrialLedger::open(&path, &branin_space()).unwrap();
    let b = propose(&reopened, &[], 5, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn space_change_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.jsonl");
    TrialLedger::open(&path, &branin_space()).unwrap();
    let mut other = branin_space();
    other.dims[1].hi = 16.0;
    assert!(matches!(
        TrialLedger::open(&path, &other),
        Err(Error::SpaceMismatch { .. })
    ));
}

#[test]
fn torn_final_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.jsonl");
    let mut ledger = TrialLedger::open(&path, &branin_space()).unwrap();
    run_search(&mut ledger, &SearchOptions::new(3, 1), |r| Ok(branin(&r.point))).unwrap();
    drop(ledger);
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"index\":3,\"poi");
    std::fs::write(&path, text).unwrap();
    let ledger = TrialLedger::open(&path, &branin_space()).unwrap();
    assert_eq!(ledger.len(), 3);
    assert!(ledger.trials().iter().all(|t| t.status == TrialStatus::Ok));
}

#[test]
fn out_of_bounds_trial_is_rejected() {
    let mut ledger = TrialLedger::in_memory(branin_space());
    let bad = mimic::hpo::Trial {
        index: 0,
        point: vec![11.0, 1.0],
        unit_point: vec![1.0, 1.0 / 15.0],
        value: Some(1.0),
        status: TrialStatus::Ok,
        wall_seconds: 0.0,
        seed: 0,
        message: None,
    };
    assert!(ledger.append(bad).is_err());
    assert!(ledger.is_empty());
}

#[test]
fn failing_trials_still_advance_the_design() {
    let mut ledger = TrialLedger::in_memory(branin_space());
    let s = run_search(&mut ledger, &SearchOptions::new(10, 2), |r| {
        if r.index < 9 {
            Err(Error::Diverged {
                epoch: 1,
                message: "test".into(),
            })
        } else {
            Ok(branin(&r.point))
        }
    })
    .unwrap();
    let mut points: Vec<Vec<f64>> = ledger.trials().iter().map(|t| t.unit_point.clone()).collect();
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    assert_eq!(points.len(), 10);
    assert_eq!(
        ledger
            .trials()
            .iter()
            .filter(|t| t.status == TrialStatus::Failed)
            .count(),
        9
    );
    assert_eq!(s.best.unwrap().index, 9);
}
