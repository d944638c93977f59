//! Shared data vocabulary: queries, trajectories, rollout groups, pairs and
//! training batches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A ChainSum task instance. The answer is `(start_value + Σ step_values) mod vocab_size`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub id: u64,
    pub difficulty: usize,
    pub seed: u64,
    pub vocab_size: u32,
    pub start_value: u32,
    pub step_values: Vec<u32>,
}

impl Query {
    pub fn validate(&self) -> Result<()> {
        if self.difficulty < 1 {
            return Err(Error::invariant("query difficulty must be at least 1"));
        }
        if self.step_values.len() != self.difficulty {
            return Err(Error::invariant(format!(
                "query {} has difficulty {} but {} step values",
                self.id,
                self.difficulty,
                self.step_values.len()
            )));
        }
        if self.start_value >= self.vocab_size
            || self.step_values.iter().any(|&v| v >= self.vocab_size)
        {
            return Err(Error::invariant(format!(
                "query {} has values outside [0, {})",
                self.id, self.vocab_size
            )));
        }
        Ok(())
    }

    /// Number of tokens in every response to this query.
    #[inline]
    pub fn response_len(&self) -> usize {
        self.difficulty + 1
    }
}

/// One sampled response with the log-probabilities of the snapshot that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<F = f64> {
    pub query_id: u64,
    /// Position of this rollout inside its group, used for tie-breaking and identity.
    pub rollout_index: u32,
    pub tokens: Vec<u32>,
    pub old_logprobs: Vec<F>,
    pub reward: F,
    pub advantage: F,
}

/// The four values reachable from `0.1 * format + 0.9 * accuracy`.
pub fn is_reachable_reward<F: Scalar>(reward: F) -> bool {
    [0.0, 0.1, 0.9, 1.0].iter().any(|&v| reward == F::lit(v))
}

impl<F: Scalar> Trajectory<F> {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.old_logprobs.len() {
            return Err(Error::invariant(format!(
                "trajectory ({}, {}) has {} tokens but {} log-probabilities",
                self.query_id,
                self.rollout_index,
                self.tokens.len(),
                self.old_logprobs.len()
            )));
        }
        if let Some(lp) = self.old_logprobs.iter().find(|lp| !(**lp <= F::zero())) {
            return Err(Error::invariant(format!(
                "trajectory ({}, {}) has log-probability {lp} > 0",
                self.query_id, self.rollout_index
            )));
        }
        if !is_reachable_reward(self.reward) {
            return Err(Error::invariant(format!(
                "trajectory ({}, {}) has unreachable reward {}",
                self.query_id, self.rollout_index, self.reward
            )));
        }
        if !self.advantage.is_finite() {
            return Err(Error::invariant("advantage must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// All rollouts sampled for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutGroup<F = f64> {
    pub query: Query,
    pub trajectories: Vec<Trajectory<F>>,
}

impl<F: Scalar> RolloutGroup<F> {
    /// Checks membership and the normalisation property of the advantages.
    pub fn validate(&self, eps_std: F) -> Result<()> {
        let n = self.trajectories.len();
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::invariant(format!(
                "rollout group must hold an even number (>= 2) of trajectories, got {n}"
            )));
        }
        for t in &self.trajectories {
            if t.query_id != self.query.id {
                return Err(Error::invariant(format!(
                    "trajectory for query {} inside group for query {}",
                    t.query_id, self.query.id
                )));
            }
            t.validate()?;
        }
        let nf = F::from_usize_lossy(n);
        let rewards: Vec<F> = self.trajectories.iter().map(|t| t.reward).collect();
        let mean = rewards.iter().copied().sum::<F>() / nf;
        let std = (rewards.iter().map(|&r| (r - mean) * (r - mean)).sum::<F>() / nf).sqrt();
        let adv: Vec<F> = self.trajectories.iter().map(|t| t.advantage).collect();
        if std > eps_std {
            let a_mean = adv.iter().copied().sum::<F>() / nf;
            let a_std = (adv.iter().map(|&a| (a - a_mean) * (a - a_mean)).sum::<F>() / nf).sqrt();
            let tol = F::lit(1e-9);
            if a_mean.abs() > tol || (a_std - F::one()).abs() > tol {
                return Err(Error::invariant(format!(
                    "group {} advantages have mean {a_mean} and std {a_std}",
                    self.query.id
                )));
            }
        } else if adv.iter().any(|a| *a != F::zero()) {
            return Err(Error::invariant(format!(
                "degenerate group {} must carry zero advantages",
                self.query.id
            )));
        }
        Ok(())
    }
}

/// Identity of a pair inside one step's batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairId {
    pub query_id: u64,
    pub rank: u32,
}

/// A (higher-advantage, lower-advantage) pair of trajectories from the same group.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPair<F = f64> {
    pub hi: Trajectory<F>,
    pub lo: Trajectory<F>,
    /// Position of the pair in the ordering it was selected from.
    pub rank: u32,
    pub weight: F,
}

impl<F: Scalar> TrajectoryPair<F> {
    pub fn new(hi: Trajectory<F>, lo: Trajectory<F>, rank: u32) -> Result<Self> {
        let weight = hi.advantage.abs() + lo.advantage.abs();
        let pair = Self {
            hi,
            lo,
            rank,
            weight,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn id(&self) -> PairId {
        PairId {
            query_id: self.hi.query_id,
            rank: self.rank,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hi.validate()?;
        self.lo.validate()?;
        if self.hi.query_id != self.lo.query_id {
            return Err(Error::invariant("pair members come from different queries"));
        }
        if !(self.hi.advantage >= self.lo.advantage) {
            return Err(Error::invariant(format!(
                "pair {:?}: hi advantage {} below lo advantage {}",
                self.id(),
                self.hi.advantage,
                self.lo.advantage
            )));
        }
        if !(self.weight >= F::zero()) {
            return Err(Error::invariant(format!(
                "pair {:?} has negative weight {}",
                self.id(),
                self.weight
            )));
        }
        if self.weight != self.hi.advantage.abs() + self.lo.advantage.abs() {
            return Err(Error::invariant(format!(
                "pair {:?} weight {} differs from |hi| + |lo|",
                self.id(),
                self.weight
            )));
        }
        Ok(())
    }

    pub fn members(&self) -> [&Trajectory<F>; 2] {
        [&self.hi, &self.lo]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Raw,
    Reshuffled,
}

/// Ordered pairs handed from pair selection to the shuffle and the trainer.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainBatch<F = f64> {
    pub pairs: Vec<TrajectoryPair<F>>,
    pub provenance: Provenance,
}

impl<F: Scalar> TrainBatch<F> {
    pub fn raw(pairs: Vec<TrajectoryPair<F>>) -> Self {
        Self {
            pairs,
            provenance: Provenance::Raw,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Trajectories in batch order, `hi` before `lo` within each pair.
    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory<F>> + '_ {
        self.pairs.iter().flat_map(|p| p.members())
    }

    pub fn validate(&self) -> Result<()> {
        self.pairs.iter().try_for_each(|p| p.validate())
    }
}
