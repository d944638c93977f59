//! Clipped surrogate objective, mini-batch updates and the per-step pipeline:
//! rollouts, rewards, group advantages, pair selection, batch shuffle and
//! sequential mini-batch updates against a fixed sampling snapshot.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use crate::advantage::{assign_advantages, collapse_fraction_of, histogram_of};
use crate::batch_shuffle::{exposure_counts, shuffle_batch};
use crate::config::{Algorithm, RunConfig};
use crate::env::{compute_reward, eval_pool, sample_query};
use crate::error::{Error, Result};
use crate::metrics::{
    clip_fraction, evaluate, nonzero_gradient_rollout_ratio, token_utilization, EvalReport,
};
use crate::optim::OptimizerState;
use crate::pair_sampling::{adjacent_pairs, max_min_pairs, select_pairs};
use crate::policy::{GenConfig, Policy};
use crate::rng::{Purpose, RngStream};
use crate::scalar::Scalar;
use crate::types::{Query, RolloutGroup, TrainBatch, Trajectory, TrajectoryPair};

/// One token's contribution to the clipped objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateTerm<F = f64> {
    pub value: F,
    pub ratio: F,
    /// The unclipped branch is the minimum and the advantage is non-zero.
    pub active: bool,
    /// The clipped branch is strictly smaller and the advantage is non-zero.
    pub clipped: bool,
}

/// `min(γA, clip(γ, 1-ε, 1+ε) A)` with `γ = exp(new - old)`.
pub fn surrogate_value<F: Scalar>(
    new_logprob: F,
    old_logprob: F,
    advantage: F,
    eps_clip: F,
) -> SurrogateTerm<F> {
    let ratio = (new_logprob - old_logprob).exp();
    let clipped_ratio = ratio.max(F::one() - eps_clip).min(F::one() + eps_clip);
    let unclipped = ratio * advantage;
    let clipped = clipped_ratio * advantage;
    let nonzero = advantage != F::zero();
    let unclipped_wins = unclipped <= clipped;
    SurrogateTerm {
        value: if unclipped_wins { unclipped } else { clipped },
        ratio,
        active: nonzero && unclipped_wins,
        clipped: nonzero && !unclipped_wins,
    }
}

/// Per-trajectory gradient bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct GradInfo {
    pub query_id: u64,
    pub rollout_index: u32,
    pub advantage_zero: bool,
    pub active: Vec<bool>,
    pub clipped: Vec<bool>,
}

impl GradInfo {
    pub fn any_token_active(&self) -> bool {
        self.active.iter().any(|&a| a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossAndGradient<F = f64> {
    pub loss: F,
    /// Dense gradient of `loss`, same layout as the policy's logits.
    pub gradient: Vec<F>,
    pub info: Vec<GradInfo>,
    /// Largest `|new - old|` log-probability gap over the mini-batch.
    pub max_abs_log_ratio: F,
}

/// `-(1 / Σ|o_i|) Σ_i Σ_t min(γ A, clip(γ) A)` and its analytic gradient.
pub fn batch_loss_and_gradient<F: Scalar>(
    policy: &Policy<F>,
    minibatch: &[&Trajectory<F>],
    queries: &HashMap<u64, Query>,
    eps_clip: F,
) -> Result<LossAndGradient<F>> {
    let gen = GenConfig::training();
    let total_tokens: usize = minibatch.iter().map(|t| t.len()).sum();
    let mut gradient = vec![F::zero(); policy.logits().len()];
    let mut info = Vec::with_capacity(minibatch.len());
    let mut objective = F::zero();
    let mut max_gap = F::zero();
    if total_tokens == 0 {
        return Ok(LossAndGradient {
            loss: F::zero(),
            gradient,
            info,
            max_abs_log_ratio: max_gap,
        });
    }
    let norm = F::one() / F::from_usize_lossy(total_tokens);
    let width = policy.num_tokens();
    for traj in minibatch {
        let query = queries
            .get(&traj.query_id)
            .ok_or_else(|| Error::arg(format!("no query with id {}", traj.query_id)))?;
        let new_lp = policy.log_prob(query, &traj.tokens, &gen)?;
        let mut active = Vec::with_capacity(traj.len());
        let mut clipped = Vec::with_capacity(traj.len());
        for (t, (&new, &old)) in new_lp.iter().zip(&traj.old_logprobs).enumerate() {
            let gap = (new - old).abs();
            if gap > max_gap {
                max_gap = gap;
            }
            let term = surrogate_value(new, old, traj.advantage, eps_clip);
            objective = objective + term.value;
            active.push(term.active);
            clipped.push(term.clipped);
            if term.active {
                let score = policy.score_gradient(query, &traj.tokens, t, &gen)?;
                let coef = -(traj.advantage * term.ratio) * norm;
                let slot = &mut gradient[score.row * width..(score.row + 1) * width];
                for (g, s) in slot.iter_mut().zip(score.values) {
                    *g = *g + coef * s;
                }
            }
        }
        info.push(GradInfo {
            query_id: traj.query_id,
            rollout_index: traj.rollout_index,
            advantage_zero: traj.advantage == F::zero(),
            active,
            clipped,
        });
    }
    Ok(LossAndGradient {
        loss: -(objective * norm),
        gradient,
        info,
        max_abs_log_ratio: max_gap,
    })
}

/// Contiguous equal slices of the batch, in order.
pub fn split_minibatches<F: Scalar>(
    batch: &TrainBatch<F>,
    k: usize,
) -> Result<Vec<&[TrajectoryPair<F>]>> {
    if k == 0 || !batch.len().is_multiple_of(k) {
        return Err(Error::arg(format!(
            "{k} mini-batches do not evenly divide {} pairs",
            batch.len()
        )));
    }
    let size = batch.len() / k;
    if size == 0 {
        return Ok(vec![&batch.pairs[..]; k]);
    }
    Ok(batch.pairs.chunks(size).collect())
}

/// Everything measured during one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub mean_reward: f64,
    pub eval: EvalReport,
    pub collapse_frac_0p1: f64,
    /// Fraction of update-batch trajectories with `|A| >= 0.5`.
    pub strong_adv_frac_0p5: f64,
    pub nonzero_rollout_ratio: f64,
    /// Distinct sampled rollouts that produced gradient, over all sampled rollouts.
    pub nonzero_rollout_ratio_all: f64,
    pub token_utilization: f64,
    pub clip_fraction: f64,
    pub histogram: Vec<u64>,
    pub exposure_max: usize,
    /// Distinct selected pairs present in the update batch, over selected pairs.
    pub exposure_coverage: f64,
    pub degenerate_group_frac: f64,
    pub first_minibatch_clip_fraction: f64,
    pub first_minibatch_max_abs_log_ratio: f64,
    pub updates: usize,
}

/// Histogram edges for the logged advantage distribution: `[-4, 4)` in steps of 0.5.
pub fn histogram_edges() -> Vec<f64> {
    (0..=16).map(|i| -4.0 + 0.5 * i as f64).collect()
}

/// The step's artifacts besides metrics, kept for dumps and inspection.
#[derive(Clone, Debug)]
pub struct StepOutcome<F = f64> {
    pub metrics: StepMetrics,
    pub raw_batch: TrainBatch<F>,
    pub update_batch: TrainBatch<F>,
}

/// Owns the policy and optimizer and runs the training loop one step at a time.
#[derive(Clone, Debug)]
pub struct Trainer<F: Scalar = f64> {
    config: RunConfig,
    policy: Policy<F>,
    optimizer: OptimizerState<F>,
    eval_queries: Vec<Query>,
    step: u64,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let policy = Policy::new(config.vocab_size, config.max_difficulty())?;
        Self::with_policy(config, policy)
    }

    pub fn with_policy(config: RunConfig, policy: Policy<F>) -> Result<Self> {
        config.validate()?;
        if policy.vocab_size() != config.vocab_size || policy.max_depth() < config.max_difficulty()
        {
            return Err(Error::arg("policy table does not match the configuration"));
        }
        let optimizer =
            OptimizerState::for_policy(config.optimizer, F::lit(config.learning_rate), &policy);
        let eval_queries = eval_pool(&config);
        Ok(Self {
            config,
            policy,
            optimizer,
            eval_queries,
            step: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn policy(&self) -> &Policy<F> {
        &self.policy
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn eval_queries(&self) -> &[Query] {
        &self.eval_queries
    }

    pub fn evaluate(&self) -> Result<EvalReport> {
        let gen = GenConfig::new(
            F::lit(self.config.eval_temperature),
            F::lit(self.config.eval_top_p),
        )?;
        evaluate(
            &self.policy,
            &self.eval_queries,
            &gen,
            self.config.eval_runs,
            self.config.seed,
            self.config.max_difficulty(),
        )
    }

    /// Samples and scores the rollout groups of `step` from `snapshot`.
    fn rollouts(&self, snapshot: &Policy<F>, step: u64) -> Result<Vec<RolloutGroup<F>>> {
        let cfg = &self.config;
        let gen = GenConfig::training();
        let per_query = cfg.rollouts_per_query();
        let eps_std = F::lit(cfg.eps_std);
        (0..cfg.queries_per_step as u64)
            .into_par_iter()
            .map(|i| {
                let query = sample_query(cfg, step, i);
                let mut rng = RngStream::new(cfg.seed, Purpose::Rollout, step, i).rng();
                let trajectories = (0..per_query as u32)
                    .map(|r| {
                        let mut t = snapshot.sample_trajectory(&query, &gen, r, &mut rng)?;
                        t.reward = compute_reward(&t.tokens, &query)?;
                        Ok(t)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut group = RolloutGroup {
                    query,
                    trajectories,
                };
                assign_advantages(&mut group, eps_std)?;
                Ok(group)
            })
            .collect()
    }

    fn select(&self, groups: &[RolloutGroup<F>], step: u64) -> Result<TrainBatch<F>> {
        let cfg = &self.config;
        let mut pairs = Vec::with_capacity(cfg.update_pairs());
        for (i, group) in groups.iter().enumerate() {
            match cfg.algorithm {
                Algorithm::Grpo => pairs.extend(adjacent_pairs(group)?),
                Algorithm::Pts => {
                    let all = max_min_pairs(group)?;
                    let mut rng =
                        RngStream::new(cfg.seed, Purpose::PairSelect, step, i as u64).rng();
                    pairs.extend(select_pairs(
                        &all,
                        cfg.pts_alpha,
                        cfg.pts_strategy,
                        &mut rng,
                    )?);
                }
            }
        }
        Ok(TrainBatch::raw(pairs))
    }

    /// Runs one full step and evaluates the updated policy.
    pub fn run_training_step(&mut self) -> Result<StepOutcome<F>> {
        let step = self.step + 1;
        let cfg = self.config.clone();
        let snapshot = self.policy.clone();
        let groups = self.rollouts(&snapshot, step)?;

        let sampled: usize = groups.iter().map(|g| g.trajectories.len()).sum();
        let mean_reward = groups
            .iter()
            .flat_map(|g| &g.trajectories)
            .map(|t| t.reward.to_f64_lossless())
            .sum::<f64>()
            / sampled as f64;
        let degenerate = groups
            .iter()
            .filter(|g| g.trajectories.iter().all(|t| t.advantage == F::zero()))
            .count();

        let raw_batch = self.select(&groups, step)?;
        let update_batch = if cfg.shuffle_active() {
            let stream = RngStream::new(cfg.seed, Purpose::Shuffle, step, 0);
            shuffle_batch(
                &raw_batch,
                cfg.shuffle_count,
                cfg.resolved_subbatch_pairs(),
                cfg.abs_strategy,
                &stream,
            )?
        } else {
            raw_batch.clone()
        };

        let queries: HashMap<u64, Query> = groups
            .iter()
            .map(|g| (g.query.id, g.query.clone()))
            .collect();
        let eps = F::lit(cfg.clip_eps);
        let mut infos = Vec::with_capacity(update_batch.len() * 2);
        let mut first_clip = 0.0;
        let mut first_gap = 0.0;
        let minibatches = split_minibatches(&update_batch, cfg.minibatch_count)?;
        let updates = minibatches.len();
        for (k, mb) in minibatches.into_iter().enumerate() {
            let trajs: Vec<&Trajectory<F>> = mb.iter().flat_map(|p| p.members()).collect();
            let out = batch_loss_and_gradient(&self.policy, &trajs, &queries, eps)?;
            if k == 0 {
                first_clip = clip_fraction(&out.info).unwrap_or(0.0);
                first_gap = out.max_abs_log_ratio.to_f64_lossless();
            }
            self.optimizer
                .apply_update(&mut self.policy, &out.gradient)?;
            infos.extend(out.info);
        }
        self.step = step;

        let adv: Vec<f64> = update_batch
            .trajectories()
            .map(|t| t.advantage.to_f64_lossless())
            .collect();
        let active_rollouts: BTreeSet<(u64, u32)> = infos
            .iter()
            .filter(|i| i.any_token_active())
            .map(|i| (i.query_id, i.rollout_index))
            .collect();
        let exposure = exposure_counts(&update_batch);
        let metrics = StepMetrics {
            step,
            mean_reward,
            eval: self.evaluate()?,
            collapse_frac_0p1: collapse_fraction_of(&adv, 0.1)?,
            strong_adv_frac_0p5: 1.0 - collapse_fraction_of(&adv, 0.5)?,
            nonzero_rollout_ratio: nonzero_gradient_rollout_ratio(&infos)?,
            nonzero_rollout_ratio_all: active_rollouts.len() as f64 / sampled as f64,
            token_utilization: token_utilization(&infos)?,
            clip_fraction: clip_fraction(&infos)?,
            histogram: histogram_of(&adv, &histogram_edges())?.counts,
            exposure_max: exposure.values().copied().max().unwrap_or(0),
            exposure_coverage: exposure.len() as f64 / raw_batch.len() as f64,
            degenerate_group_frac: degenerate as f64 / groups.len() as f64,
            first_minibatch_clip_fraction: first_clip,
            first_minibatch_max_abs_log_ratio: first_gap,
            updates,
        };
        Ok(StepOutcome {
            metrics,
            raw_batch,
            update_batch,
        })
    }
}
