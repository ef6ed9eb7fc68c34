//! Optional TOML configuration. Command-line flags take precedence over the
//! file, which takes precedence over built-in defaults.

use std::fs;
use std::path::Path;

use fmv_core::generate::SamplingConfig;
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const DEFAULT_CONFIG_NAME: &str = "fmv.toml";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub sampling: SamplingConfig,
    pub execute: ExecuteSection,
    pub evaluate: EvaluateSection,
    pub curve: CurveSection,
    pub split: SplitSection,
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecuteSection {
    pub runner: Option<String>,
    pub file_suffix: Option<String>,
    pub timeout_ms: Option<u64>,
    pub max_output_bytes: Option<u64>,
    pub max_memory_bytes: Option<u64>,
    pub parallelism: Option<usize>,
    pub cache_dir: Option<String>,
    pub no_cache: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub resamples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSection {
    pub budgets: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub resamples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub p_correct: Option<f64>,
    pub p_invalid: Option<f64>,
    pub wrong_mode_count: Option<usize>,
    pub wrong_concentration: Option<f64>,
    pub n_inputs: Option<usize>,
    pub cell_corruption: Option<f64>,
    pub seed: Option<u64>,
    pub tasks: Option<usize>,
    pub pool_size: Option<usize>,
    pub budgets: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub resamples: Option<usize>,
}

impl FileConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("{}: {e}", origin.display())))
    }

    /// Loads `explicit` if given, else `<workdir>/fmv.toml` when present.
    pub fn load(explicit: Option<&Path>, workdir: &Path) -> Result<Self> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let p = workdir.join(DEFAULT_CONFIG_NAME);
                if !p.is_file() {
                    return Ok(Self::default());
                }
                p
            }
        };
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path)
    }
}
