//! Tabular softmax policy over `(step, running value)` observations.

use rand::Rng;

use crate::env::{observe, Observation};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{Query, Trajectory};

/// Sampling temperature and nucleus mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenConfig<F = f64> {
    pub temperature: F,
    pub top_p: F,
}

impl<F: Scalar> GenConfig<F> {
    pub fn new(temperature: F, top_p: F) -> Result<Self> {
        if !(temperature > F::zero()) {
            return Err(Error::arg("temperature must be positive"));
        }
        if !(top_p > F::zero() && top_p <= F::one()) {
            return Err(Error::arg("top_p must lie in (0, 1]"));
        }
        Ok(Self { temperature, top_p })
    }

    /// Temperature 1, no truncation: the distribution used for training rollouts.
    pub fn training() -> Self {
        Self {
            temperature: F::one(),
            top_p: F::one(),
        }
    }

    pub fn is_exact(&self) -> bool {
        self.temperature == F::one() && self.top_p == F::one()
    }
}

/// Log-probabilities of `softmax(logits / temperature)` after nucleus truncation.
/// Truncated tokens get `-inf`.
pub fn log_distribution<F: Scalar>(logits: &[F], gen: &GenConfig<F>) -> Vec<F> {
    let scaled: Vec<F> = logits.iter().map(|&l| l / gen.temperature).collect();
    let max = scaled.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = max + scaled.iter().map(|&z| (z - max).exp()).sum::<F>().ln();
    let mut logp: Vec<F> = scaled.iter().map(|&z| z - lse).collect();
    if gen.top_p < F::one() {
        let mut order: Vec<usize> = (0..logp.len()).collect();
        order.sort_by(|&a, &b| logp[b].partial_cmp(&logp[a]).unwrap().then(a.cmp(&b)));
        let mut kept_mass = F::zero();
        let mut kept = 0;
        for &i in &order {
            kept_mass = kept_mass + logp[i].exp();
            kept += 1;
            if kept_mass >= gen.top_p {
                break;
            }
        }
        let shift = kept_mass.ln();
        for (rank, &i) in order.iter().enumerate() {
            logp[i] = if rank < kept {
                logp[i] - shift
            } else {
                F::neg_infinity()
            };
        }
    }
    logp
}

/// Probabilities corresponding to [`log_distribution`].
pub fn distribution<F: Scalar>(logits: &[F], gen: &GenConfig<F>) -> Vec<F> {
    log_distribution(logits, gen)
        .into_iter()
        .map(F::exp)
        .collect()
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<F: Scalar, R: Rng + ?Sized>(probs: &[F], rng: &mut R) -> usize {
    let u = F::from_f64_exact(rng.random::<f64>());
    let mut acc = F::zero();
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > F::zero() {
            last_positive = i;
            acc = acc + p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Gradient of `ln π(token | row)` with respect to one row of logits.
#[derive(Clone, Debug, PartialEq)]
pub struct RowGradient<F = f64> {
    pub row: usize,
    pub values: Vec<F>,
}

/// Logit table indexed by `(step_index, running_value, token)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy<F = f64> {
    logits: Vec<F>,
    vocab_size: u32,
    max_depth: usize,
}

impl<F: Scalar> Policy<F> {
    /// All-zero logits, i.e. the uniform policy.
    pub fn new(vocab_size: u32, max_depth: usize) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::arg("vocab_size must be >= 2"));
        }
        if max_depth < 1 {
            return Err(Error::arg("max_depth must be >= 1"));
        }
        let rows = (max_depth + 1) * vocab_size as usize;
        Ok(Self {
            logits: vec![F::zero(); rows * (vocab_size as usize + 1)],
            vocab_size,
            max_depth,
        })
    }

    pub fn from_logits(vocab_size: u32, max_depth: usize, logits: Vec<F>) -> Result<Self> {
        let mut p = Self::new(vocab_size, max_depth)?;
        if logits.len() != p.logits.len() {
            return Err(Error::LengthMismatch {
                expected: p.logits.len(),
                actual: logits.len(),
            });
        }
        p.logits = logits;
        Ok(p)
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Tokens per row: `V` answers plus THINK.
    pub fn num_tokens(&self) -> usize {
        self.vocab_size as usize + 1
    }

    pub fn num_rows(&self) -> usize {
        (self.max_depth + 1) * self.vocab_size as usize
    }

    pub fn logits(&self) -> &[F] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [F] {
        &mut self.logits
    }

    pub fn row_of(&self, obs: Observation) -> Result<usize> {
        if obs.step_index > self.max_depth || obs.running_value >= self.vocab_size {
            return Err(Error::OutOfBounds(format!(
                "observation ({}, {}) outside table of depth {} and vocabulary {}",
                obs.step_index, obs.running_value, self.max_depth, self.vocab_size
            )));
        }
        Ok(obs.step_index * self.vocab_size as usize + obs.running_value as usize)
    }

    pub fn row(&self, row: usize) -> &[F] {
        let w = self.num_tokens();
        &self.logits[row * w..(row + 1) * w]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [F] {
        let w = self.num_tokens();
        &mut self.logits[row * w..(row + 1) * w]
    }

    pub fn action_distribution(&self, obs: Observation, gen: &GenConfig<F>) -> Result<Vec<F>> {
        Ok(distribution(self.row(self.row_of(obs)?), gen))
    }

    fn check_query(&self, query: &Query) -> Result<()> {
        if query.difficulty > self.max_depth {
            return Err(Error::OutOfBounds(format!(
                "query depth {} exceeds policy depth {}",
                query.difficulty, self.max_depth
            )));
        }
        if query.vocab_size != self.vocab_size {
            return Err(Error::arg("query and policy vocabularies differ"));
        }
        Ok(())
    }

    /// Samples `d + 1` tokens; reward and advantage are left at zero.
    pub fn sample_trajectory<R: Rng + ?Sized>(
        &self,
        query: &Query,
        gen: &GenConfig<F>,
        rollout_index: u32,
        rng: &mut R,
    ) -> Result<Trajectory<F>> {
        self.check_query(query)?;
        let len = query.response_len();
        let mut tokens = Vec::with_capacity(len);
        let mut old_logprobs = Vec::with_capacity(len);
        for t in 0..len {
            let row = self.row_of(observe(query, t)?)?;
            let logp = log_distribution(self.row(row), gen);
            let probs: Vec<F> = logp.iter().map(|l| l.exp()).collect();
            let tok = sample_index(&probs, rng);
            tokens.push(tok as u32);
            old_logprobs.push(logp[tok]);
        }
        Ok(Trajectory {
            query_id: query.id,
            rollout_index,
            tokens,
            old_logprobs,
            reward: F::zero(),
            advantage: F::zero(),
        })
    }

    /// Per-token log-probabilities of `tokens` as a response to `query`.
    pub fn log_prob(&self, query: &Query, tokens: &[u32], gen: &GenConfig<F>) -> Result<Vec<F>> {
        self.check_query(query)?;
        if tokens.len() != query.response_len() {
            return Err(Error::LengthMismatch {
                expected: query.response_len(),
                actual: tokens.len(),
            });
        }
        tokens
            .iter()
            .enumerate()
            .map(|(t, &tok)| {
                if tok as usize >= self.num_tokens() {
                    return Err(Error::OutOfBounds(format!(
                        "token {tok} outside vocabulary"
                    )));
                }
                let row = self.row_of(observe(query, t)?)?;
                Ok(log_distribution(self.row(row), gen)[tok as usize])
            })
            .collect()
    }

    /// `onehot(token) - softmax(row)` for the row visited at `token_index`.
    /// Only defined for the untruncated temperature-1 distribution.
    pub fn score_gradient(
        &self,
        query: &Query,
        tokens: &[u32],
        token_index: usize,
        gen: &GenConfig<F>,
    ) -> Result<RowGradient<F>> {
        if !gen.is_exact() {
            return Err(Error::arg(
                "score gradients require temperature 1 and top_p 1",
            ));
        }
        self.check_query(query)?;
        let tok = *tokens
            .get(token_index)
            .ok_or_else(|| Error::OutOfBounds(format!("token index {token_index}")))?
            as usize;
        if tok >= self.num_tokens() {
            return Err(Error::OutOfBounds(format!(
                "token {tok} outside vocabulary"
            )));
        }
        let row = self.row_of(observe(query, token_index)?)?;
        let mut values: Vec<F> = distribution(self.row(row), gen)
            .into_iter()
            .map(|p| -p)
            .collect();
        values[tok] = values[tok] + F::one();
        Ok(RowGradient { row, values })
    }
}
