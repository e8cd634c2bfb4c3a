use crate::error::{Error, Result};
use crate::tensor::{write_checkpoint, ModelGraph, Tensor, NUM_CLASSES};
use crate::train::{score_logits, EvalSet};
use sha2::{Digest, Sha256};

/// Teacher models whose logits are averaged.
pub struct Ensemble {
    members: Vec<ModelGraph<f32>>,
    fingerprint: [u8; 32],
}

/// SHA-256 over the members' checkpoint bytes in order.
pub fn fingerprint_of(members: &[ModelGraph<f32>]) -> [u8; 32] {
    let mut h = Sha256::new();
    for m in members {
        let bytes = write_checkpoint(m);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    h.finalize().into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Ensemble {
    pub fn new(members: Vec<ModelGraph<f32>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("an ensemble needs at least one member"));
        }
        let fingerprint = fingerprint_of(&members);
        Ok(Self { members, fingerprint })
    }

    pub fn members(&self) -> &[ModelGraph<f32>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }

    pub fn fingerprint_hex(&self) -> String {
        hex(&self.fingerprint)
    }

    /// Mean of the members' evaluation-mode logits for `x`.
    pub fn logits(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let each = self.members.iter().map(|m| m.predict(x)).collect::<Result<Vec<_>>>()?;
        mean_logits(&each)
    }

    pub fn logits_batched(&self, x: &Tensor<f32>, batch: usize) -> Result<Tensor<f32>> {
        let each = self
            .members
            .iter()
            .map(|m| m.predict_batched(x, batch))
            .collect::<Result<Vec<_>>>()?;
        mean_logits(&each)
    }
}

fn pairwise_sum(parts: &[&Tensor<f32>]) -> Tensor<f32> {
    match parts {
        [one] => (*one).clone(),
        _ => {
            let (a, b) = parts.split_at(parts.len() / 2);
            let mut left = pairwise_sum(a);
            let right = pairwise_sum(b);
            for (x, &y) in left.data_mut().iter_mut().zip(right.data()) {
                *x += y;
            }
            left
        }
    }
}

/// Elementwise mean, summed pairwise in member order.
pub fn mean_logits(each: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let Some(first) = each.first() else {
        return Err(Error::invalid("cannot average an empty ensemble"));
    };
    if first.ndim() != 2 || first.shape()[1] != NUM_CLASSES {
        return Err(Error::shape(format!("member logits have shape {:?}", first.shape())));
    }
    if each.iter().any(|t| t.shape() != first.shape()) {
        return Err(Error::shape("member logits differ in shape"));
    }
    let refs: Vec<&Tensor<f32>> = each.iter().collect();
    let mut sum = pairwise_sum(&refs);
    if each.len() > 1 {
        let m = each.len() as f32;
        sum.data_mut().iter_mut().for_each(|v| *v /= m);
    }
    Ok(sum)
}

/// Greedy forward selection over precomputed validation logits, without replacement.
/// Returns chosen indices in the order added and the final accuracy.
pub fn greedy_select(candidates: &[Tensor<f32>], labels: &[usize], max_size: usize) -> Result<(Vec<usize>, f64)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no ensemble candidates"));
    }
    let mut chosen: Vec<usize> = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    while chosen.len() < max_size.max(1) {
        let mut round: Option<(usize, f64)> = None;
        for i in (0..candidates.len()).filter(|i| !chosen.contains(i)) {
            let mut pick: Vec<Tensor<f32>> = chosen.iter().map(|&c| candidates[c].clone()).collect();
            pick.push(candidates[i].clone());
            let acc = score_logits(&mean_logits(&pick)?, labels)?.accuracy;
            if round.is_none_or(|(_, a)| acc > a) {
                round = Some((i, acc));
            }
        }
        match round {
            Some((i, acc)) if acc > best_acc => {
                chosen.push(i);
                best_acc = acc;
            }
            _ => break,
        }
    }
    Ok((chosen, best_acc))
}

/// Pick members from `candidates` by greedy forward selection on validation accuracy.
/// Returns the ensemble and the candidate indices used.
pub fn select_ensemble(
    candidates: Vec<ModelGraph<f32>>,
    val: &EvalSet,
    max_size: usize,
) -> Result<(Ensemble, Vec<usize>, f64)> {
    let logits = candidates
        .iter()
        .map(|m| m.predict_batched(&val.inputs, 500))
        .collect::<Result<Vec<_>>>()?;
    let (chosen, acc) = greedy_select(&logits, &val.labels, max_size)?;
    let mut slots: Vec<Option<ModelGraph<f32>>> = candidates.into_iter().map(Some).collect();
    let members = chosen.iter().map(|&i| slots[i].take().expect("chosen once")).collect();
    Ok((Ensemble::new(members)?, chosen, acc))
}
