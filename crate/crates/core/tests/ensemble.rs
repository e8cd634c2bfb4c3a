use mimic::distill::{greedy_select, mean_logits};
use mimic::tensor::{Tensor, NUM_CLASSES};
use mimic::train::score_logits;
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn accuracy(candidates: &[Tensor<f32>], pick: &[usize], labels: &[usize]) -> f64 {
    let each: Vec<Tensor<f32>> = pick.iter().map(|&i| candidates[i].clone()).collect();
    score_logits(&mean_logits(&each).unwrap(), labels).unwrap().accuracy
}

/// Best accuracy over every non-empty subset of at most `max` members.
fn exhaustive(candidates: &[Tensor<f32>], labels: &[usize], max: usize) -> f64 {
    let n = candidates.len();
    (1u32..1 << n)
        .filter(|m| m.count_ones() as usize <= max)
        .map(|m| {
            let pick: Vec<usize> = (0..n).filter(|i| m >> i & 1 == 1).collect();
            accuracy(candidates, &pick, labels)
        })
        .fold(0.0, f64::max)
}

/// Noisy members that each see the label with some strength.
fn members() -> impl Strategy<Value = (Vec<Tensor<f32>>, Vec<usize>, usize)> {
    (2usize..6, 8usize..40, 1usize..5).prop_flat_map(|(n, rows, max)| {
        let labels = prop::collection::vec(0..NUM_CLASSES, rows);
        let noise = prop::collection::vec(prop::collection::vec(-2.0f32..2.0, rows * NUM_CLASSES), n);
        let strength = prop::collection::vec(0.0f32..3.0, n);
        (labels, noise, strength, Just(max)).prop_map(|(labels, noise, strength, max)| {
            let cands = noise
                .into_iter()
                .zip(strength)
                .map(|(mut z, s)| {
                    for (r, &l) in labels.iter().enumerate() {
                        z[r * NUM_CLASSES + l] += s;
                    }
                    Tensor::new(vec![labels.len(), NUM_CLASSES], z).unwrap()
                })
                .collect();
            (cands, labels, max)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn greedy_is_bounded_by_exhaustive((cands, labels, max) in members()) {
        let (chosen, acc) = greedy_select(&cands, &labels, max).unwrap();
        prop_assert!(!chosen.is_empty() && chosen.len() <= max);
        let mut sorted = chosen.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), chosen.len());
        prop_assert_eq!(acc, accuracy(&cands, &chosen, &labels));
        let single = (0..cands.len()).map(|i| accuracy(&cands, &[i], &labels)).fold(0.0, f64::max);
        prop_assert!(acc >= single);
        prop_assert!(acc <= exhaustive(&cands, &labels, max));
    }
}

#[test]
fn greedy_usually_finds_the_exhaustive_optimum() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = members();
    let (mut hits, mut worst) = (0, 0.0f64);
    let cases = 200;
    for _ in 0..cases {
        let (cands, labels, max) = strategy.new_tree(&mut runner).unwrap().current();
        let (_, acc) = greedy_select(&cands, &labels, max).unwrap();
        let best = exhaustive(&cands, &labels, max);
        if acc == best {
            hits += 1;
        }
        worst = worst.max(best - acc);
    }
    assert!(
        hits * 10 >= cases * 7,
        "greedy matched exhaustive in {hits}/{cases} cases"
    );
    assert!(worst <= 0.2, "largest shortfall {worst}");
}

#[test]
fn stops_when_adding_a_member_hurts() {
    // Member 0 is right on every row; the others are confidently wrong.
    let labels = vec![0, 1, 2, 3];
    let mut right = vec![0.0f32; 4 * NUM_CLASSES];
    let mut wrong = vec![0.0f32; 4 * NUM_CLASSES];
    for (r, &l) in labels.iter().enumerate() {
        right[r * NUM_CLASSES + l] = 1.0;
        wrong[r * NUM_CLASSES + 9] = 5.0;
    }
    let t = |z: Vec<f32>| Tensor::new(vec![4, NUM_CLASSES], z).unwrap();
    let cands = vec![t(wrong.clone()), t(right), t(wrong)];
    let (chosen, acc) = greedy_select(&cands, &labels, 3).unwrap();
    assert_eq!(chosen, vec![1]);
    assert_eq!(acc, 1.0);
}
