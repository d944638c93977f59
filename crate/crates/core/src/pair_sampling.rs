//! Pairwise trajectory sampling: sort a group by advantage, pair the extremes,
//! keep the most contrastive pairs.

use rand::seq::index;
use rand::Rng;

use crate::config::PtsStrategy;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{RolloutGroup, Trajectory, TrajectoryPair};

/// Indices ordered by advantage descending, ties by original index ascending.
pub fn descending_order<F: Scalar>(trajectories: &[Trajectory<F>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    // sort_by is stable, so equal advantages keep index order
    order.sort_by(|&a, &b| {
        trajectories[b]
            .advantage
            .partial_cmp(&trajectories[a].advantage)
            .expect("advantages are finite")
    });
    order
}

fn check_even<F: Scalar>(group: &RolloutGroup<F>) -> Result<()> {
    let n = group.trajectories.len();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::arg(format!(
            "pairing needs an even group of at least 2, got {n}"
        )));
    }
    Ok(())
}

/// Pairs rank `i` with rank `2N - i + 1`, in order of `i`.
pub fn max_min_pairs<F: Scalar>(group: &RolloutGroup<F>) -> Result<Vec<TrajectoryPair<F>>> {
    check_even(group)?;
    let order = descending_order(&group.trajectories);
    let n = order.len();
    (0..n / 2)
        .map(|i| {
            TrajectoryPair::new(
                group.trajectories[order[i]].clone(),
                group.trajectories[order[n - 1 - i]].clone(),
                i as u32,
            )
        })
        .collect()
}

/// Pairs adjacent ranks `(1,2), (3,4), ...` over the whole group. Used when
/// every rollout goes to the update unselected.
pub fn adjacent_pairs<F: Scalar>(group: &RolloutGroup<F>) -> Result<Vec<TrajectoryPair<F>>> {
    check_even(group)?;
    let order = descending_order(&group.trajectories);
    let ranked: Vec<&Trajectory<F>> = order.iter().map(|&i| &group.trajectories[i]).collect();
    pair_adjacent(&ranked)
}

fn pair_adjacent<F: Scalar>(ranked: &[&Trajectory<F>]) -> Result<Vec<TrajectoryPair<F>>> {
    ranked
        .chunks_exact(2)
        .enumerate()
        .map(|(r, c)| TrajectoryPair::new(c[0].clone(), c[1].clone(), r as u32))
        .collect()
}

/// `M = floor(alpha * N)`.
pub fn selection_size(pair_count: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("alpha {alpha} outside (0, 1]")));
    }
    let m = (alpha * pair_count as f64).floor() as usize;
    if m < 1 {
        return Err(Error::arg(format!(
            "floor({alpha} * {pair_count}) selects no pairs"
        )));
    }
    Ok(m)
}

/// Chooses `M` pairs from a max-min pairing according to `strategy`.
///
/// `pairs` must be the output of [`max_min_pairs`]: hi members are ranks
/// `1..N` and lo members ranks `2N..N+1`, which lets the one-sided
/// strategies recover the full ranking.
pub fn select_pairs<F: Scalar, R: Rng + ?Sized>(
    pairs: &[TrajectoryPair<F>],
    alpha: f64,
    strategy: PtsStrategy,
    rng: &mut R,
) -> Result<Vec<TrajectoryPair<F>>> {
    let m = selection_size(pairs.len(), alpha)?;
    match strategy {
        PtsStrategy::MaxMinTopk => Ok(pairs[..m].to_vec()),
        PtsStrategy::OnlyMax | PtsStrategy::OnlyMin => {
            let ranked: Vec<&Trajectory<F>> = pairs
                .iter()
                .map(|p| &p.hi)
                .chain(pairs.iter().rev().map(|p| &p.lo))
                .collect();
            let kept = if strategy == PtsStrategy::OnlyMax {
                &ranked[..2 * m]
            } else {
                &ranked[ranked.len() - 2 * m..]
            };
            pair_adjacent(kept)
        }
        PtsStrategy::Random => {
            let mut picked = index::sample(rng, pairs.len(), m).into_vec();
            picked.sort_unstable();
            Ok(picked.into_iter().map(|i| pairs[i].clone()).collect())
        }
    }
}
