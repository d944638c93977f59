//! Loading a [`RunConfig`] from JSON and applying command-line overrides.

use std::fs;
use std::path::Path;

use shuffle_rl::{AbsStrategy, Mode, RunConfig};

use crate::error::{CliError, Result};

/// Values given on the command line; each one beats the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub pts_alpha: Option<f64>,
    pub abs_strategy: Option<AbsStrategy>,
    pub shuffle_count: Option<usize>,
    pub rollouts_override: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        // the preset goes first so explicit strategy flags can refine it
        if let Some(mode) = self.mode {
            config.apply_mode(mode);
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(alpha) = self.pts_alpha {
            config.pts_alpha = alpha;
        }
        if let Some(abs) = self.abs_strategy {
            config.abs_strategy = abs;
        }
        if let Some(s) = self.shuffle_count {
            config.shuffle_count = s;
        }
        if let Some(r) = self.rollouts_override {
            config.rollouts_override = Some(r);
        }
    }
}

/// Parses a JSON config document. Missing fields take their defaults; unknown
/// fields are rejected.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

/// Reads `path` (or starts from defaults), applies `overrides`, validates.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            parse_config_str(&text)?
        }
        None => RunConfig::default(),
    };
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}
