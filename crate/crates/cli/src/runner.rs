//! Drives a training run and writes its artifacts:
//!
//! * `metrics.csv`: one row per step
//! * `summary.json`: resolved config, config hash, accuracies, run diagnostics
//! * `timing.txt`: wall-clock time (kept out of the JSON so reruns are byte-identical)
//! * optional policy checkpoint and per-step batch dumps

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shuffle_rl::codec::{self, BATCH_VERSION, CHECKPOINT_VERSION};
use shuffle_rl::trainer::histogram_edges;
use shuffle_rl::{RunConfig, StepMetrics, Trainer};

use crate::error::{CliError, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.9;

pub fn artifact_version() -> String {
    format!(
        "shuffle-rl {} (batch format v{BATCH_VERSION}, checkpoint v{CHECKPOINT_VERSION})",
        env!("CARGO_PKG_VERSION")
    )
}

/// Hex SHA-256 of the config's canonical JSON encoding.
pub fn config_hash(config: &RunConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serialises");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub dump_batches: Option<PathBuf>,
    pub threshold: f64,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            checkpoint: None,
            dump_batches: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Aggregates used by the comparison report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Mean over the first `min(200, steps)` steps of the fraction of update
    /// trajectories with `|A| >= 0.5`.
    pub strong_adv_frac_first200: f64,
    /// Medians over the last quarter of the run.
    pub nonzero_rollout_ratio_final_quarter: f64,
    pub token_utilization_final_quarter: f64,
    /// Worst case over steps of the first mini-batch's clip fraction.
    pub max_first_minibatch_clip_fraction: f64,
    /// Worst case over steps of `|new - old|` log-probability in the first mini-batch.
    pub max_first_minibatch_abs_log_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub artifact_version: String,
    pub mode: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub init_eval_pass1: f64,
    pub init_per_difficulty: Vec<Option<f64>>,
    pub final_eval_pass1: f64,
    pub final_per_difficulty: Vec<Option<f64>>,
    pub threshold: f64,
    /// First step whose post-update accuracy reached the threshold.
    pub steps_to_threshold: Option<u64>,
    pub total_steps: usize,
    pub diagnostics: Option<RunDiagnostics>,
}

pub fn csv_header(max_difficulty: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "mode", "mean_reward", "eval_pass1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=max_difficulty).map(|d| format!("acc_d{d}")));
    h.extend(
        [
            "collapse_frac_0p1",
            "nonzero_rollout_ratio",
            "token_utilization",
            "clip_fraction",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h.extend((0..histogram_edges().len() - 1).map(|b| format!("hist_bin_{b}")));
    h.extend(
        [
            "strong_adv_frac_0p5",
            "nonzero_rollout_ratio_all",
            "exposure_max",
            "exposure_coverage",
            "degenerate_group_frac",
            "first_minibatch_clip_fraction",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

pub fn csv_row(mode: &str, m: &StepMetrics) -> Vec<String> {
    let mut r = vec![
        m.step.to_string(),
        mode.to_string(),
        m.mean_reward.to_string(),
        m.eval.pass1.to_string(),
    ];
    r.extend(
        m.eval
            .per_difficulty
            .iter()
            .map(|a| a.map(|v| v.to_string()).unwrap_or_default()),
    );
    r.extend([
        m.collapse_frac_0p1.to_string(),
        m.nonzero_rollout_ratio.to_string(),
        m.token_utilization.to_string(),
        m.clip_fraction.to_string(),
    ]);
    r.extend(m.histogram.iter().map(|c| c.to_string()));
    r.extend([
        m.strong_adv_frac_0p5.to_string(),
        m.nonzero_rollout_ratio_all.to_string(),
        m.exposure_max.to_string(),
        m.exposure_coverage.to_string(),
        m.degenerate_group_frac.to_string(),
        m.first_minibatch_clip_fraction.to_string(),
    ]);
    r
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub(crate) fn median_of(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    median(&mut v)
}

fn diagnostics(history: &[StepMetrics]) -> Option<RunDiagnostics> {
    if history.is_empty() {
        return None;
    }
    let early = &history[..history.len().min(200)];
    let late = &history[history.len() * 3 / 4..];
    Some(RunDiagnostics {
        strong_adv_frac_first200: early.iter().map(|m| m.strong_adv_frac_0p5).sum::<f64>()
            / early.len() as f64,
        nonzero_rollout_ratio_final_quarter: median_of(
            late.iter().map(|m| m.nonzero_rollout_ratio),
        ),
        token_utilization_final_quarter: median_of(late.iter().map(|m| m.token_utilization)),
        max_first_minibatch_clip_fraction: history
            .iter()
            .map(|m| m.first_minibatch_clip_fraction)
            .fold(0.0, f64::max),
        max_first_minibatch_abs_log_ratio: history
            .iter()
            .map(|m| m.first_minibatch_max_abs_log_ratio)
            .fold(0.0, f64::max),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Trains for `config.total_steps` steps and writes every artifact.
pub fn train(config: &RunConfig, options: &RunOptions) -> Result<RunSummary> {
    let started = Instant::now();
    config.validate()?;
    create_dir(&options.out_dir)?;
    if let Some(dir) = &options.dump_batches {
        create_dir(dir)?;
    }
    let mode = config.mode_label();
    let mut trainer = Trainer::<f64>::new(config.clone())?;
    let init = trainer.evaluate()?;

    let csv_path = options.out_dir.join("metrics.csv");
    let file = File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", csv_path.display()));
    writer
        .write_record(csv_header(config.max_difficulty()))
        .map_err(csv_err)?;

    let mut history = Vec::with_capacity(config.total_steps);
    let mut reached = None;
    for _ in 0..config.total_steps {
        let outcome = trainer.run_training_step()?;
        let m = &outcome.metrics;
        if reached.is_none() && m.eval.pass1 >= options.threshold {
            reached = Some(m.step);
        }
        writer.write_record(csv_row(&mode, m)).map_err(csv_err)?;
        if let Some(dir) = &options.dump_batches {
            let raw = dir.join(format!("step_{:06}_raw.bin", m.step));
            write_file(&raw, &codec::serialize_batch(&outcome.raw_batch))?;
            if config.shuffle_active() {
                let shuffled = dir.join(format!("step_{:06}_reshuffled.bin", m.step));
                write_file(&shuffled, &codec::serialize_batch(&outcome.update_batch))?;
            }
        }
        history.push(outcome.metrics);
    }
    writer.flush().map_err(|e| CliError::io(&csv_path, e))?;
    drop(writer);

    if let Some(path) = &options.checkpoint {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_file(path, &codec::encode_checkpoint(trainer.policy()))?;
    }

    let last = history
        .last()
        .map(|m| m.eval.clone())
        .unwrap_or_else(|| init.clone());
    let summary = RunSummary {
        artifact_version: artifact_version(),
        mode,
        config_hash: config_hash(config),
        config: config.clone(),
        init_eval_pass1: init.pass1,
        init_per_difficulty: init.per_difficulty,
        final_eval_pass1: last.pass1,
        final_per_difficulty: last.per_difficulty,
        threshold: options.threshold,
        steps_to_threshold: reached,
        total_steps: config.total_steps,
        diagnostics: diagnostics(&history),
    };
    write_json(&options.out_dir.join("summary.json"), &summary)?;
    let timing = options.out_dir.join("timing.txt");
    write_file(
        &timing,
        format!("wall_time_secs {:.3}\n", started.elapsed().as_secs_f64()).as_bytes(),
    )?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub artifact_version: String,
    pub checkpoint: Option<String>,
    pub eval_pass1: f64,
    pub per_difficulty: Vec<Option<f64>>,
    pub eval_runs: usize,
    pub eval_queries: usize,
    pub eval_temperature: f64,
}

/// Evaluates a checkpoint (or the untrained policy) on the held-out pool.
pub fn evaluate(
    config: &RunConfig,
    checkpoint: Option<&Path>,
    out_dir: &Path,
) -> Result<EvalSummary> {
    config.validate()?;
    let trainer = match checkpoint {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
            let policy = codec::decode_checkpoint::<f64>(&bytes)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            Trainer::with_policy(config.clone(), policy)?
        }
        None => Trainer::<f64>::new(config.clone())?,
    };
    let report = trainer.evaluate()?;
    let summary = EvalSummary {
        artifact_version: artifact_version(),
        checkpoint: checkpoint.map(|p| p.display().to_string()),
        eval_pass1: report.pass1,
        per_difficulty: report.per_difficulty,
        eval_runs: config.eval_runs,
        eval_queries: config.eval_queries,
        eval_temperature: config.eval_temperature,
    };
    create_dir(out_dir)?;
    write_json(&out_dir.join("eval.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = csv_header(3);
        assert_eq!(
            &h[..7],
            [
                "step",
                "mode",
                "mean_reward",
                "eval_pass1",
                "acc_d1",
                "acc_d2",
                "acc_d3"
            ]
        );
        assert_eq!(h[7], "collapse_frac_0p1");
        assert_eq!(h[11], "hist_bin_0");
        assert_eq!(h[26], "hist_bin_15");
        assert_eq!(h[27], "strong_adv_frac_0p5");
    }

    #[test]
    fn medians() {
        assert_eq!(median_of([3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_of([4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median_of([]).is_nan());
    }

    #[test]
    fn hash_tracks_config() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
