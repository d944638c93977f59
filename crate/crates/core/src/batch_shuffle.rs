//! Advantage-based batch shuffle.
//!
//! The selected pairs are re-drawn into `S` sub-batches of `T` pairs each.
//! Within a sub-batch, pairs are drawn sequentially without replacement with
//! probability proportional to `|A_hi| + |A_lo|`; sub-batches are drawn
//! independently, so strong pairs can recur across sub-batches while the total
//! batch size stays `S * T`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::AbsStrategy;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::types::{PairId, Provenance, TrainBatch, TrajectoryPair};

/// `W_j / Σ W`, or uniform when every weight is zero.
pub fn sampling_probabilities<F: Scalar>(pairs: &[TrajectoryPair<F>]) -> Result<Vec<F>> {
    if pairs.is_empty() {
        return Err(Error::arg("no pairs to weight"));
    }
    let weights: Vec<F> = pairs.iter().map(|p| p.weight).collect();
    Ok(normalise(&weights))
}

fn normalise<F: Scalar>(weights: &[F]) -> Vec<F> {
    let total = weights.iter().copied().sum::<F>();
    if total > F::zero() {
        weights.iter().map(|&w| w / total).collect()
    } else {
        vec![F::one() / F::from_usize_lossy(weights.len()); weights.len()]
    }
}

/// Draws `count` distinct indices: pick proportional to the remaining weights,
/// remove, repeat. Falls back to uniform over what is left once the remaining
/// weight is zero.
pub fn draw_without_replacement<F: Scalar, R: Rng + ?Sized>(
    weights: &[F],
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if count > weights.len() {
        return Err(Error::arg(format!(
            "cannot draw {count} distinct items from {}",
            weights.len()
        )));
    }
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut drawn = Vec::with_capacity(count);
    for _ in 0..count {
        let total = remaining.iter().map(|&i| weights[i]).sum::<F>();
        let pos = if total > F::zero() {
            let target = F::from_f64_exact(rng.random::<f64>()) * total;
            let mut acc = F::zero();
            let mut chosen = None;
            let mut last_positive = 0;
            for (pos, &i) in remaining.iter().enumerate() {
                if weights[i] > F::zero() {
                    last_positive = pos;
                    acc = acc + weights[i];
                    if target < acc {
                        chosen = Some(pos);
                        break;
                    }
                }
            }
            chosen.unwrap_or(last_positive)
        } else {
            rng.random_range(0..remaining.len())
        };
        drawn.push(remaining.remove(pos));
    }
    Ok(drawn)
}

/// Reshapes `batch` into `s` sub-batches of `t` pairs.
///
/// Sub-batch `k` is drawn from `stream.fork(k)`. `Reorder` applies a single
/// uniform permutation drawn from `stream`; `Off` returns the batch unchanged.
pub fn shuffle_batch<F: Scalar>(
    batch: &TrainBatch<F>,
    s: usize,
    t: usize,
    strategy: AbsStrategy,
    stream: &RngStream,
) -> Result<TrainBatch<F>> {
    let n = batch.len();
    if s * t != n {
        return Err(Error::arg(format!(
            "S x T = {s} x {t} does not match the batch size {n}"
        )));
    }
    if t > n {
        return Err(Error::arg(format!(
            "T = {t} exceeds the {n} available pairs"
        )));
    }
    let pairs = match strategy {
        AbsStrategy::Off => return Ok(batch.clone()),
        AbsStrategy::Reorder => {
            let mut pairs = batch.pairs.clone();
            pairs.shuffle(&mut stream.rng());
            pairs
        }
        AbsStrategy::Weighted | AbsStrategy::Uniform => draw_sub_batches(
            &batch.pairs,
            s,
            t,
            strategy == AbsStrategy::Weighted,
            stream,
        )?,
    };
    Ok(TrainBatch {
        pairs,
        provenance: Provenance::Reshuffled,
    })
}

/// Draws `s` independent sub-batches of `t` distinct pairs each, weighted by
/// pair weight or uniformly. No constraint ties `s * t` to `pairs.len()`.
pub fn draw_sub_batches<F: Scalar>(
    pairs: &[TrajectoryPair<F>],
    s: usize,
    t: usize,
    weighted: bool,
    stream: &RngStream,
) -> Result<Vec<TrajectoryPair<F>>> {
    let weights: Vec<F> = if weighted {
        pairs.iter().map(|p| p.weight).collect()
    } else {
        vec![F::one(); pairs.len()]
    };
    let mut out = Vec::with_capacity(s * t);
    for k in 0..s {
        let mut rng = stream.fork(k as u64).rng();
        for i in draw_without_replacement(&weights, t, &mut rng)? {
            out.push(pairs[i].clone());
        }
    }
    Ok(out)
}

/// How many times each pair occurs in a (reshuffled) batch.
pub fn exposure_counts<F: Scalar>(batch: &TrainBatch<F>) -> BTreeMap<PairId, usize> {
    let mut counts = BTreeMap::new();
    for p in &batch.pairs {
        *counts.entry(p.id()).or_insert(0) += 1;
    }
    counts
}

/// True when no chunk of `t` consecutive pairs repeats a pair id.
pub fn sub_batches_are_distinct<F: Scalar>(batch: &TrainBatch<F>, t: usize) -> bool {
    batch.pairs.chunks(t.max(1)).all(|chunk| {
        let mut ids: Vec<PairId> = chunk.iter().map(|p| p.id()).collect();
        ids.sort_unstable();
        ids.windows(2).all(|w| w[0] != w[1])
    })
}
