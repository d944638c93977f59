//! Step diagnostics (gradient silencing, token utilisation, clipping) and
//! held-out pass@1 evaluation.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::env::{observe, score_accuracy};
use crate::error::{Error, Result};
use crate::policy::{distribution, sample_index, GenConfig, Policy};
use crate::rng::{Purpose, RngStream};
use crate::scalar::Scalar;
use crate::trainer::GradInfo;
use crate::types::Query;

fn non_empty(infos: &[GradInfo]) -> Result<()> {
    if infos.is_empty() {
        return Err(Error::arg("no gradient records"));
    }
    Ok(())
}

fn token_count(infos: &[GradInfo]) -> usize {
    infos.iter().map(|i| i.active.len()).sum()
}

/// Fraction of update occurrences with at least one gradient-carrying token.
pub fn nonzero_gradient_rollout_ratio(infos: &[GradInfo]) -> Result<f64> {
    non_empty(infos)?;
    let active = infos.iter().filter(|i| i.any_token_active()).count();
    Ok(active as f64 / infos.len() as f64)
}

/// Fraction of token positions that carried gradient.
pub fn token_utilization(infos: &[GradInfo]) -> Result<f64> {
    non_empty(infos)?;
    let total = token_count(infos);
    if total == 0 {
        return Ok(0.0);
    }
    let active: usize = infos
        .iter()
        .map(|i| i.active.iter().filter(|&&a| a).count())
        .sum();
    Ok(active as f64 / total as f64)
}

/// Fraction of token positions whose gradient was removed by clipping.
pub fn clip_fraction(infos: &[GradInfo]) -> Result<f64> {
    non_empty(infos)?;
    let total = token_count(infos);
    if total == 0 {
        return Ok(0.0);
    }
    let clipped: usize = infos
        .iter()
        .map(|i| i.clipped.iter().filter(|&&c| c).count())
        .sum();
    Ok(clipped as f64 / total as f64)
}

/// Held-out accuracy, overall and per difficulty.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub pass1: f64,
    /// Index `d - 1` holds the accuracy at difficulty `d`; `None` when the
    /// pool has no query of that difficulty.
    pub per_difficulty: Vec<Option<f64>>,
}

/// `hits[r][q]` for run `r` and query `q`. Each (run, query id) pair owns its stream.
fn correctness<F: Scalar>(
    policy: &Policy<F>,
    queries: &[Query],
    gen: &GenConfig<F>,
    runs: usize,
    seed: u64,
) -> Result<Vec<Vec<bool>>> {
    if queries.is_empty() {
        return Err(Error::arg("empty evaluation set"));
    }
    if runs == 0 {
        return Err(Error::arg("need at least one evaluation run"));
    }
    for q in queries {
        q.validate()?;
        if q.difficulty > policy.max_depth() || q.vocab_size != policy.vocab_size() {
            return Err(Error::arg(format!(
                "query {} does not fit the policy table",
                q.id
            )));
        }
    }
    // same draws as Policy::sample_trajectory, without recomputing each row's softmax
    let dists: Vec<Vec<F>> = (0..policy.num_rows())
        .map(|r| distribution(policy.row(r), gen))
        .collect();
    (0..runs as u64)
        .map(|run| {
            queries
                .par_iter()
                .map(|q| {
                    let mut rng = RngStream::new(seed, Purpose::EvalSample, run, q.id).rng();
                    let mut tokens = Vec::with_capacity(q.response_len());
                    for t in 0..q.response_len() {
                        let row = policy.row_of(observe(q, t)?)?;
                        tokens.push(sample_index(&dists[row], &mut rng) as u32);
                    }
                    Ok(score_accuracy(&tokens, q)? == 1)
                })
                .collect()
        })
        .collect()
}

fn mean_accuracy(hits: &[Vec<bool>]) -> f64 {
    let per_run: Vec<f64> = hits
        .iter()
        .map(|run| run.iter().filter(|&&h| h).count() as f64 / run.len() as f64)
        .collect();
    per_run.iter().sum::<f64>() / per_run.len() as f64
}

/// Mean over `runs` seeded passes of single-sample accuracy.
pub fn eval_pass_at_1<F: Scalar>(
    policy: &Policy<F>,
    queries: &[Query],
    gen: &GenConfig<F>,
    runs: usize,
    seed: u64,
) -> Result<f64> {
    Ok(mean_accuracy(&correctness(
        policy, queries, gen, runs, seed,
    )?))
}

/// Pass@1 restricted to each difficulty present in `queries`.
pub fn per_difficulty_accuracy<F: Scalar>(
    policy: &Policy<F>,
    queries: &[Query],
    gen: &GenConfig<F>,
    runs: usize,
    seed: u64,
) -> Result<BTreeMap<usize, f64>> {
    let hits = correctness(policy, queries, gen, runs, seed)?;
    Ok(split_by_difficulty(queries, &hits))
}

fn split_by_difficulty(queries: &[Query], hits: &[Vec<bool>]) -> BTreeMap<usize, f64> {
    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, q) in queries.iter().enumerate() {
        buckets.entry(q.difficulty).or_default().push(i);
    }
    buckets
        .into_iter()
        .map(|(d, idx)| {
            let sub: Vec<Vec<bool>> = hits
                .iter()
                .map(|run| idx.iter().map(|&i| run[i]).collect())
                .collect();
            (d, mean_accuracy(&sub))
        })
        .collect()
}

/// Overall and per-difficulty accuracy from one set of samples.
pub fn evaluate<F: Scalar>(
    policy: &Policy<F>,
    queries: &[Query],
    gen: &GenConfig<F>,
    runs: usize,
    seed: u64,
    max_difficulty: usize,
) -> Result<EvalReport> {
    let hits = correctness(policy, queries, gen, runs, seed)?;
    let by_d = split_by_difficulty(queries, &hits);
    Ok(EvalReport {
        pass1: mean_accuracy(&hits),
        per_difficulty: (1..=max_difficulty)
            .map(|d| by_d.get(&d).copied())
            .collect(),
    })
}
