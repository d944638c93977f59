use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shuffle_rl::{AbsStrategy, Mode};
use shuffle_rl_cli::compare::compare;
use shuffle_rl_cli::config::{parse_config, Overrides};
use shuffle_rl_cli::plot::plot;
use shuffle_rl_cli::runner::{self, RunOptions, DEFAULT_THRESHOLD};
use shuffle_rl_cli::Result;

#[derive(Parser, Debug)]
#[command(
    name = "shuffle-rl",
    version,
    about = "Train, evaluate and compare shuffle-rl runs"
)]
struct Cli {
    /// Rayon worker threads for rollouts and evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a training run and write metrics.csv and summary.json.
    Train {
        #[command(flatten)]
        common: Common,
        /// Write the final policy here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write every step's raw and reshuffled batches into this directory.
        #[arg(long)]
        dump_batches: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Evaluate a checkpoint (or the untrained policy) and write eval.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run several modes over several seeds and write comparison.json.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated mode names, at least two.
        #[arg(long, value_delimiter = ',', required = true)]
        modes: Vec<Mode>,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Draw one column of one or more metrics CSVs as an SVG line chart.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value = "eval_pass1")]
        column: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "SHUFFLE_RL_OUT_DIR", default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    pts_alpha: Option<f64>,
    #[arg(long, value_parser = parse_abs)]
    abs_strategy: Option<AbsStrategy>,
    #[arg(long)]
    shuffle_count: Option<usize>,
    #[arg(long)]
    rollouts_override: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            mode: self.mode,
            pts_alpha: self.pts_alpha,
            abs_strategy: self.abs_strategy,
            shuffle_count: self.shuffle_count,
            rollouts_override: self.rollouts_override,
        }
    }
}

fn parse_abs(s: &str) -> std::result::Result<AbsStrategy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown abs strategy `{s}` (weighted, uniform, reorder, off)"))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            common,
            checkpoint,
            dump_batches,
            threshold,
        } => {
            let config = parse_config(common.config.as_deref(), &common.overrides())?;
            let options = RunOptions {
                out_dir: common.out_dir,
                checkpoint,
                dump_batches,
                threshold,
            };
            let s = runner::train(&config, &options)?;
            println!(
                "{}: init {:.4} final {:.4} steps_to_threshold {}",
                s.mode,
                s.init_eval_pass1,
                s.final_eval_pass1,
                s.steps_to_threshold.map_or("-".into(), |v| v.to_string())
            );
        }
        Command::Eval { common, checkpoint } => {
            let config = parse_config(common.config.as_deref(), &common.overrides())?;
            let s = runner::evaluate(&config, checkpoint.as_deref(), &common.out_dir)?;
            println!("eval_pass1 {:.4}", s.eval_pass1);
        }
        Command::Compare {
            common,
            modes,
            seeds,
            threshold,
        } => {
            // the file alone is validated here; modes and seeds are applied per run
            let base = parse_config(common.config.as_deref(), &Overrides::default())?;
            let overrides = Overrides {
                mode: None,
                seed: None,
                ..common.overrides()
            };
            let c = compare(
                &base,
                &overrides,
                &modes,
                &seeds,
                &common.out_dir,
                threshold,
            )?;
            for m in &c.modes {
                println!(
                    "{}: median steps {} final {:.4}",
                    m.mode,
                    m.median_steps_to_threshold
                        .map_or("-".into(), |v| v.to_string()),
                    m.median_final_eval_pass1
                );
            }
        }
        Command::Plot { csv, column, out } => plot(&csv, &column, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
