//! Group-normalised advantages and advantage-distribution diagnostics.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{RolloutGroup, TrainBatch};

/// `(r_i - mean) / std` with the population standard deviation. Groups whose
/// reward spread is at most `eps_std` get all-zero advantages.
pub fn group_advantages<F: Scalar>(rewards: &[F], eps_std: F) -> Result<Vec<F>> {
    if rewards.is_empty() {
        return Err(Error::arg("cannot normalise an empty group"));
    }
    let n = F::from_usize_lossy(rewards.len());
    let mean = rewards.iter().copied().sum::<F>() / n;
    let var = rewards.iter().map(|&r| (r - mean) * (r - mean)).sum::<F>() / n;
    let std = var.sqrt();
    if std <= eps_std {
        return Ok(vec![F::zero(); rewards.len()]);
    }
    Ok(rewards.iter().map(|&r| (r - mean) / std).collect())
}

/// Writes group advantages into every trajectory of `group`.
pub fn assign_advantages<F: Scalar>(group: &mut RolloutGroup<F>, eps_std: F) -> Result<()> {
    let rewards: Vec<F> = group.trajectories.iter().map(|t| t.reward).collect();
    let adv = group_advantages(&rewards, eps_std)?;
    for (t, a) in group.trajectories.iter_mut().zip(adv) {
        t.advantage = a;
    }
    Ok(())
}

/// Fraction of advantages with `|A| < threshold`.
pub fn collapse_fraction_of<F: Scalar>(advantages: &[F], threshold: F) -> Result<f64> {
    if !(threshold > F::zero()) {
        return Err(Error::arg("threshold must be positive"));
    }
    if advantages.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    let hits = advantages.iter().filter(|a| a.abs() < threshold).count();
    Ok(hits as f64 / advantages.len() as f64)
}

pub fn collapse_fraction<F: Scalar>(batch: &TrainBatch<F>, threshold: F) -> Result<f64> {
    let adv: Vec<F> = batch.trajectories().map(|t| t.advantage).collect();
    collapse_fraction_of(&adv, threshold)
}

/// Counts over half-open bins `[e_i, e_{i+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvantageHistogram<F = f64> {
    pub bin_edges: Vec<F>,
    pub counts: Vec<u64>,
    /// Values that fell inside `[e_0, e_last)`; equals the sum of `counts`.
    pub total: u64,
    pub underflow: u64,
    pub overflow: u64,
}

pub fn histogram_of<F: Scalar>(advantages: &[F], bin_edges: &[F]) -> Result<AdvantageHistogram<F>> {
    if bin_edges.len() < 2 {
        return Err(Error::arg("histogram needs at least two edges"));
    }
    if bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::arg("histogram edges must be strictly increasing"));
    }
    let mut counts = vec![0u64; bin_edges.len() - 1];
    let (mut underflow, mut overflow) = (0, 0);
    for &a in advantages {
        if a < bin_edges[0] {
            underflow += 1;
        } else if a >= bin_edges[bin_edges.len() - 1] {
            overflow += 1;
        } else {
            // last edge e with e <= a
            let idx = bin_edges.partition_point(|&e| e <= a) - 1;
            counts[idx] += 1;
        }
    }
    let total = counts.iter().sum();
    Ok(AdvantageHistogram {
        bin_edges: bin_edges.to_vec(),
        counts,
        total,
        underflow,
        overflow,
    })
}

pub fn histogram<F: Scalar>(
    batch: &TrainBatch<F>,
    bin_edges: &[F],
) -> Result<AdvantageHistogram<F>> {
    let adv: Vec<F> = batch.trajectories().map(|t| t.advantage).collect();
    histogram_of(&adv, bin_edges)
}
