//! Multi-mode, multi-seed comparison runs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shuffle_rl::{Mode, RunConfig};

use crate::config::Overrides;
use crate::error::{CliError, Result};
use crate::runner::{self, median_of, write_json, RunOptions, RunSummary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: String,
    pub seeds: Vec<u64>,
    /// Per seed, `None` when the threshold was never reached.
    pub steps_to_threshold: Vec<Option<u64>>,
    /// Median with unreached runs ranked last; `None` if the median run is unreached.
    pub median_steps_to_threshold: Option<f64>,
    pub final_eval_pass1: Vec<f64>,
    pub median_final_eval_pass1: f64,
    pub median_init_eval_pass1: f64,
    pub median_strong_adv_frac_first200: f64,
    pub median_nonzero_rollout_ratio_final_quarter: f64,
    pub median_token_utilization_final_quarter: f64,
    pub max_first_minibatch_clip_fraction: f64,
    pub max_first_minibatch_abs_log_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub artifact_version: String,
    pub threshold: f64,
    pub total_steps: usize,
    pub modes: Vec<ModeReport>,
}

impl Comparison {
    pub fn mode(&self, name: &str) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.mode == name)
    }
}

/// Median of steps-to-threshold where `None` sorts after every number.
pub fn median_steps(steps: &[Option<u64>]) -> Option<f64> {
    if steps.is_empty() {
        return None;
    }
    let mut keyed: Vec<f64> = steps
        .iter()
        .map(|s| s.map_or(f64::INFINITY, |v| v as f64))
        .collect();
    keyed.sort_by(f64::total_cmp);
    let n = keyed.len();
    let m = if n % 2 == 1 {
        keyed[n / 2]
    } else {
        (keyed[n / 2 - 1] + keyed[n / 2]) / 2.0
    };
    m.is_finite().then_some(m)
}

/// Directory name for a mode label, keeping only `[A-Za-z0-9_-]`.
pub fn mode_dir_name(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn report(label: String, seeds: &[u64], runs: &[RunSummary]) -> ModeReport {
    let diag = |f: fn(&runner::RunDiagnostics) -> f64| {
        median_of(runs.iter().filter_map(|r| r.diagnostics.as_ref()).map(f))
    };
    let steps: Vec<Option<u64>> = runs.iter().map(|r| r.steps_to_threshold).collect();
    ModeReport {
        mode: label,
        seeds: seeds.to_vec(),
        median_steps_to_threshold: median_steps(&steps),
        steps_to_threshold: steps,
        final_eval_pass1: runs.iter().map(|r| r.final_eval_pass1).collect(),
        median_final_eval_pass1: median_of(runs.iter().map(|r| r.final_eval_pass1)),
        median_init_eval_pass1: median_of(runs.iter().map(|r| r.init_eval_pass1)),
        median_strong_adv_frac_first200: diag(|d| d.strong_adv_frac_first200),
        median_nonzero_rollout_ratio_final_quarter: diag(|d| d.nonzero_rollout_ratio_final_quarter),
        median_token_utilization_final_quarter: diag(|d| d.token_utilization_final_quarter),
        max_first_minibatch_clip_fraction: runs
            .iter()
            .filter_map(|r| r.diagnostics.as_ref())
            .map(|d| d.max_first_minibatch_clip_fraction)
            .fold(0.0, f64::max),
        max_first_minibatch_abs_log_ratio: runs
            .iter()
            .filter_map(|r| r.diagnostics.as_ref())
            .map(|d| d.max_first_minibatch_abs_log_ratio)
            .fold(0.0, f64::max),
    }
}

/// Runs every `(mode, seed)` pair under `out_dir/<mode>/seed_<s>/` and writes
/// `comparison.json` plus a one-row-per-run `comparison.csv`.
///
/// `overrides` are applied after each mode preset (its own `mode` and `seed`
/// are ignored). Runs with the same seed draw the same training queries.
pub fn compare(
    base: &RunConfig,
    overrides: &Overrides,
    modes: &[Mode],
    seeds: &[u64],
    out_dir: &Path,
    threshold: f64,
) -> Result<Comparison> {
    if modes.len() < 2 {
        return Err(CliError::Config(format!(
            "compare needs at least 2 modes, got {}",
            modes.len()
        )));
    }
    if seeds.is_empty() {
        return Err(CliError::Config("compare needs at least one seed".into()));
    }
    let mut configs = Vec::with_capacity(modes.len() * seeds.len());
    for &mode in modes {
        for &seed in seeds {
            let mut config = base.clone();
            let o = Overrides {
                mode: Some(mode),
                seed: Some(seed),
                ..overrides.clone()
            };
            o.apply(&mut config);
            config.validate()?;
            let dir: PathBuf = out_dir
                .join(mode_dir_name(mode.name()))
                .join(format!("seed_{seed}"));
            configs.push((config, dir));
        }
    }
    let runs: Vec<RunSummary> = configs
        .par_iter()
        .map(|(config, dir)| {
            let mut options = RunOptions::new(dir);
            options.threshold = threshold;
            runner::train(config, &options)
        })
        .collect::<Result<_>>()?;

    let reports: Vec<ModeReport> = modes
        .iter()
        .zip(runs.chunks(seeds.len()))
        .map(|(mode, chunk)| report(mode.name().to_string(), seeds, chunk))
        .collect();
    let comparison = Comparison {
        artifact_version: runner::artifact_version(),
        threshold,
        total_steps: base.total_steps,
        modes: reports,
    };
    write_json(&out_dir.join("comparison.json"), &comparison)?;
    write_runs_csv(&out_dir.join("comparison.csv"), &runs)?;
    Ok(comparison)
}

fn write_runs_csv(path: &Path, runs: &[RunSummary]) -> Result<()> {
    let err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record([
        "mode",
        "seed",
        "steps_to_threshold",
        "init_eval_pass1",
        "final_eval_pass1",
        "strong_adv_frac_first200",
        "nonzero_rollout_ratio_final_quarter",
        "token_utilization_final_quarter",
    ])
    .map_err(err)?;
    for r in runs {
        let d = r.diagnostics.as_ref();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            r.mode.clone(),
            r.config.seed.to_string(),
            r.steps_to_threshold
                .map(|s| s.to_string())
                .unwrap_or_default(),
            r.init_eval_pass1.to_string(),
            r.final_eval_pass1.to_string(),
            opt(d.map(|d| d.strong_adv_frac_first200)),
            opt(d.map(|d| d.nonzero_rollout_ratio_final_quarter)),
            opt(d.map(|d| d.token_utilization_final_quarter)),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
