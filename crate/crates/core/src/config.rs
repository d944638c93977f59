//! Run configuration and its validation rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How pairs are chosen from a max-min pairing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PtsStrategy {
    /// Keep the first `M` pairs of the max-min ordering.
    MaxMinTopk,
    /// Keep the `2M` highest-advantage rollouts, paired adjacently.
    OnlyMax,
    /// Keep the `2M` lowest-advantage rollouts, paired adjacently.
    OnlyMin,
    /// Keep `M` pairs drawn uniformly without replacement.
    Random,
}

/// How the selected pairs are reshaped before the mini-batch split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsStrategy {
    Weighted,
    Uniform,
    Reorder,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// `Grpo` feeds every rollout to the update; `Pts` runs pair selection first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Grpo,
    Pts,
}

/// Named presets covering the baseline, the full method and each ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Grpo,
    PtsOnly,
    PtsAbs,
    OnlyMax,
    OnlyMin,
    RandomSelect,
    RandomShuffle,
    Reorder,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Grpo,
        Mode::PtsOnly,
        Mode::PtsAbs,
        Mode::OnlyMax,
        Mode::OnlyMin,
        Mode::RandomSelect,
        Mode::RandomShuffle,
        Mode::Reorder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Grpo => "grpo",
            Mode::PtsOnly => "pts",
            Mode::PtsAbs => "pts+abs",
            Mode::OnlyMax => "only_max",
            Mode::OnlyMin => "only_min",
            Mode::RandomSelect => "random_select",
            Mode::RandomShuffle => "random_shuffle",
            Mode::Reorder => "reorder",
        }
    }

    fn settings(self) -> (Algorithm, PtsStrategy, AbsStrategy) {
        use AbsStrategy as A;
        use PtsStrategy as P;
        match self {
            Mode::Grpo => (Algorithm::Grpo, P::MaxMinTopk, A::Off),
            Mode::PtsOnly => (Algorithm::Pts, P::MaxMinTopk, A::Off),
            Mode::PtsAbs => (Algorithm::Pts, P::MaxMinTopk, A::Weighted),
            Mode::OnlyMax => (Algorithm::Pts, P::OnlyMax, A::Off),
            Mode::OnlyMin => (Algorithm::Pts, P::OnlyMin, A::Off),
            Mode::RandomSelect => (Algorithm::Pts, P::Random, A::Off),
            Mode::RandomShuffle => (Algorithm::Pts, P::MaxMinTopk, A::Uniform),
            Mode::Reorder => (Algorithm::Pts, P::MaxMinTopk, A::Reorder),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
                Error::config(
                    "mode",
                    format!("unknown mode `{s}`, expected one of {names:?}"),
                )
            })
    }
}

/// Everything needed to reproduce a run. Field names are the JSON keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub vocab_size: u32,
    /// `(difficulty, proportion)` entries; proportions are normalised.
    pub difficulty_mix: Vec<(usize, f64)>,
    pub queries_per_step: usize,
    /// Rollouts per query (`2N`) for pair-selecting modes.
    pub rollout_group_size: usize,
    pub algorithm: Algorithm,
    pub pts_alpha: f64,
    pub pts_strategy: PtsStrategy,
    pub abs_strategy: AbsStrategy,
    pub shuffle_count: usize,
    /// Pairs per shuffle sub-batch; derived from the selection size when absent.
    pub subbatch_pairs: Option<usize>,
    pub minibatch_count: usize,
    pub clip_eps: f64,
    pub eps_std: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub rollout_temperature: f64,
    pub eval_temperature: f64,
    pub eval_top_p: f64,
    pub eval_runs: usize,
    pub eval_queries: usize,
    pub total_steps: usize,
    pub seed: u64,
    /// Replaces the per-query rollout count of the selected algorithm.
    pub rollouts_override: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            vocab_size: 16,
            difficulty_mix: vec![(1, 0.34), (2, 0.33), (3, 0.33)],
            queries_per_step: 32,
            rollout_group_size: 8,
            algorithm: Algorithm::Pts,
            pts_alpha: 0.5,
            pts_strategy: PtsStrategy::MaxMinTopk,
            abs_strategy: AbsStrategy::Weighted,
            shuffle_count: 4,
            subbatch_pairs: None,
            minibatch_count: 4,
            clip_eps: 0.2,
            eps_std: 1e-8,
            learning_rate: 10.0,
            optimizer: OptimizerKind::Sgd,
            rollout_temperature: 1.0,
            eval_temperature: 0.5,
            eval_top_p: 1.0,
            eval_runs: 8,
            eval_queries: 500,
            total_steps: 400,
            seed: 0,
            rollouts_override: None,
        }
    }
}

impl RunConfig {
    pub fn apply_mode(&mut self, mode: Mode) {
        let (algorithm, pts, abs) = mode.settings();
        self.algorithm = algorithm;
        self.pts_strategy = pts;
        self.abs_strategy = abs;
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.apply_mode(mode);
        self
    }

    /// The preset matching the current settings, if any.
    pub fn mode(&self) -> Option<Mode> {
        if self.algorithm == Algorithm::Grpo {
            return Some(Mode::Grpo);
        }
        Mode::ALL
            .into_iter()
            .find(|m| m.settings() == (self.algorithm, self.pts_strategy, self.abs_strategy))
    }

    /// Label written to the `mode` column of the metrics log.
    pub fn mode_label(&self) -> String {
        match self.mode() {
            Some(m) => m.name().to_string(),
            None => format!(
                "pts:{}+abs:{}",
                serde_variant(&self.pts_strategy),
                serde_variant(&self.abs_strategy)
            ),
        }
    }

    pub fn max_difficulty(&self) -> usize {
        self.difficulty_mix
            .iter()
            .map(|&(d, _)| d)
            .max()
            .unwrap_or(1)
    }

    /// `N`, half of the pair-selecting group size.
    pub fn half_group(&self) -> usize {
        self.rollout_group_size / 2
    }

    /// Rollouts sampled per query by the configured algorithm.
    pub fn rollouts_per_query(&self) -> usize {
        self.rollouts_override.unwrap_or(match self.algorithm {
            Algorithm::Grpo => self.half_group(),
            Algorithm::Pts => self.rollout_group_size,
        })
    }

    /// Pairs kept per query: `floor(alpha * N)` under selection, every rollout otherwise.
    pub fn pairs_per_query(&self) -> usize {
        let n = self.rollouts_per_query() / 2;
        match self.algorithm {
            Algorithm::Grpo => n,
            Algorithm::Pts => (self.pts_alpha * n as f64).floor() as usize,
        }
    }

    pub fn update_pairs(&self) -> usize {
        self.pairs_per_query() * self.queries_per_step
    }

    pub fn shuffle_active(&self) -> bool {
        self.algorithm == Algorithm::Pts && self.abs_strategy != AbsStrategy::Off
    }

    /// `T`, either configured or `M * G / S`.
    pub fn resolved_subbatch_pairs(&self) -> usize {
        self.subbatch_pairs
            .unwrap_or_else(|| self.update_pairs() / self.shuffle_count.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::config("vocab_size", "must be at least 2"));
        }
        if self.difficulty_mix.is_empty() {
            return Err(Error::config("difficulty_mix", "must not be empty"));
        }
        for &(d, p) in &self.difficulty_mix {
            if d < 1 {
                return Err(Error::config("difficulty_mix", "difficulties must be >= 1"));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::config("difficulty_mix", "proportions must be >= 0"));
            }
        }
        if self.difficulty_mix.iter().map(|&(_, p)| p).sum::<f64>() <= 0.0 {
            return Err(Error::config(
                "difficulty_mix",
                "proportions must not all be zero",
            ));
        }
        if self.queries_per_step == 0 {
            return Err(Error::config("queries_per_step", "must be positive"));
        }
        if self.rollout_group_size < 2 || !self.rollout_group_size.is_multiple_of(2) {
            return Err(Error::config(
                "rollout_group_size",
                format!("must be even and >= 2, got {}", self.rollout_group_size),
            ));
        }
        if let Some(r) = self.rollouts_override {
            if r < 2 || r % 2 != 0 {
                return Err(Error::config(
                    "rollouts_override",
                    format!("must be even and >= 2, got {r}"),
                ));
            }
        }
        let rollouts = self.rollouts_per_query();
        if rollouts < 2 || !rollouts.is_multiple_of(2) {
            return Err(Error::config(
                "rollout_group_size",
                format!("the selected algorithm samples {rollouts} rollouts per query; need an even count >= 2"),
            ));
        }
        if !(self.pts_alpha > 0.0 && self.pts_alpha <= 1.0) {
            return Err(Error::config("pts_alpha", "must lie in (0, 1]"));
        }
        if self.algorithm == Algorithm::Pts && self.pairs_per_query() < 1 {
            return Err(Error::config(
                "pts_alpha",
                format!(
                    "floor(alpha * N) = floor({} * {}) keeps no pairs",
                    self.pts_alpha,
                    rollouts / 2
                ),
            ));
        }
        if self.shuffle_active() {
            if self.shuffle_count == 0 {
                return Err(Error::config("shuffle_count", "must be positive"));
            }
            let t = self.resolved_subbatch_pairs();
            let total = self.update_pairs();
            if t == 0 || self.shuffle_count * t != total {
                return Err(Error::config(
                    "shuffle_count, subbatch_pairs",
                    format!(
                        "S x T must equal M x G: S = {}, T = {}, M x G = {}",
                        self.shuffle_count, t, total
                    ),
                ));
            }
        }
        if self.minibatch_count == 0 || !self.update_pairs().is_multiple_of(self.minibatch_count) {
            return Err(Error::config(
                "minibatch_count",
                format!(
                    "K = {} must divide the {} update pairs",
                    self.minibatch_count,
                    self.update_pairs()
                ),
            ));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::config("clip_eps", "must lie in (0, 1)"));
        }
        if !(self.eps_std >= 0.0) {
            return Err(Error::config("eps_std", "must be >= 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.rollout_temperature != 1.0 {
            return Err(Error::config(
                "rollout_temperature",
                "training rollouts are sampled at temperature 1 so stored log-probabilities are exact",
            ));
        }
        if !(self.eval_temperature > 0.0) {
            return Err(Error::config("eval_temperature", "must be positive"));
        }
        if !(self.eval_top_p > 0.0 && self.eval_top_p <= 1.0) {
            return Err(Error::config("eval_top_p", "must lie in (0, 1]"));
        }
        if self.eval_runs == 0 {
            return Err(Error::config("eval_runs", "must be >= 1"));
        }
        if self.eval_queries == 0 {
            return Err(Error::config("eval_queries", "must be >= 1"));
        }
        Ok(())
    }
}

fn serde_variant<T: Serialize + fmt::Debug>(v: &T) -> String {
    // Unit variants are named in snake_case by the derive; mirror that here
    // without pulling in a JSON encoder.
    let dbg = format!("{v:?}");
    let mut out = String::new();
    for (i, c) in dbg.chars().enumerate() {
        if c.is_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}
