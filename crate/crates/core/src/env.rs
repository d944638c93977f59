//! ChainSum: a verifiable-reward task whose answer is a modular running sum.
//!
//! A query of difficulty `d` expects `d` THINK tokens followed by the answer
//! token `(start + Σ steps) mod V`. The policy observes the running sum after
//! each step, so the final observation already carries the answer; what has to
//! be learned is the mapping from observation to token.

use rand::Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream};
use crate::scalar::Scalar;
use crate::types::Query;

/// Offset separating held-out query ids from training ids.
pub const EVAL_ID_BASE: u64 = 1 << 62;

/// Token id of the reasoning filler for a vocabulary of `vocab_size` answers.
#[inline]
pub fn think_token(vocab_size: u32) -> u32 {
    vocab_size
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Observation {
    pub step_index: usize,
    pub running_value: u32,
}

/// Samples the `index`-th training query of `step`.
pub fn sample_query(config: &RunConfig, step: u64, index: u64) -> Query {
    let stream = RngStream::new(config.seed, Purpose::TrainQuery, step, index);
    let id = step * config.queries_per_step as u64 + index;
    draw_query(&stream, id, config.vocab_size, &config.difficulty_mix)
}

/// The fixed held-out pool, drawn from its own seed namespace.
pub fn eval_pool(config: &RunConfig) -> Vec<Query> {
    (0..config.eval_queries as u64)
        .map(|i| {
            let stream = RngStream::new(config.seed, Purpose::EvalQuery, 0, i);
            draw_query(
                &stream,
                EVAL_ID_BASE + i,
                config.vocab_size,
                &config.difficulty_mix,
            )
        })
        .collect()
}

fn draw_query(stream: &RngStream, id: u64, vocab_size: u32, mix: &[(usize, f64)]) -> Query {
    let mut rng = stream.rng();
    let seed = rng.random::<u64>();
    let total: f64 = mix.iter().map(|&(_, p)| p).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut difficulty = mix.last().map(|&(d, _)| d).unwrap_or(1);
    for &(d, p) in mix {
        acc += p;
        if u < acc {
            difficulty = d;
            break;
        }
    }
    let start_value = rng.random_range(0..vocab_size);
    let step_values = (0..difficulty)
        .map(|_| rng.random_range(0..vocab_size))
        .collect();
    Query {
        id,
        difficulty,
        seed,
        vocab_size,
        start_value,
        step_values,
    }
}

pub fn observe(query: &Query, step_index: usize) -> Result<Observation> {
    if step_index > query.difficulty {
        return Err(Error::OutOfBounds(format!(
            "step {step_index} beyond difficulty {}",
            query.difficulty
        )));
    }
    let v = u64::from(query.vocab_size);
    let sum = query.step_values[..step_index]
        .iter()
        .fold(u64::from(query.start_value) % v, |acc, &s| {
            (acc + u64::from(s)) % v
        });
    Ok(Observation {
        step_index,
        running_value: sum as u32,
    })
}

pub fn oracle_answer(query: &Query) -> u32 {
    let v = u64::from(query.vocab_size);
    let sum = query
        .step_values
        .iter()
        .fold(u64::from(query.start_value) % v, |acc, &s| {
            (acc + u64::from(s)) % v
        });
    sum as u32
}

fn check_len(tokens: &[u32], query: &Query) -> Result<()> {
    if tokens.len() != query.response_len() {
        return Err(Error::LengthMismatch {
            expected: query.response_len(),
            actual: tokens.len(),
        });
    }
    Ok(())
}

/// 1 iff every token before the last is THINK and the last is an answer token.
pub fn score_format(tokens: &[u32], query: &Query) -> Result<u8> {
    check_len(tokens, query)?;
    let think = think_token(query.vocab_size);
    let (last, prefix) = tokens.split_last().expect("length checked");
    Ok(u8::from(
        prefix.iter().all(|&t| t == think) && *last < query.vocab_size,
    ))
}

/// 1 iff the final token is the oracle answer.
pub fn score_accuracy(tokens: &[u32], query: &Query) -> Result<u8> {
    check_len(tokens, query)?;
    Ok(u8::from(tokens[query.difficulty] == oracle_answer(query)))
}

/// `0.1 * format + 0.9 * accuracy`, evaluated as the exact fraction `(f + 9a) / 10`.
pub fn compute_reward<F: Scalar>(tokens: &[u32], query: &Query) -> Result<F> {
    let format = score_format(tokens, query)?;
    let accuracy = score_accuracy(tokens, query)?;
    let tenths = u32::from(format) + 9 * u32::from(accuracy);
    Ok(F::lit(f64::from(tenths)) / F::lit(10.0))
}
