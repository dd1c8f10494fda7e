//! Optional TOML config with one table per subcommand. Keys mirror the
//! long flag names.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::commands::{ModeSelectArg, PairingArg, PredictorArg, ToggleArg, UpdateArg, WeightingArg};
use crate::{CliError, CliResult, OUT_DIR_ENV};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub complete: Option<CompleteSection>,
    pub simulate: Option<SimulateSection>,
    pub ingest: Option<IngestSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CompleteSection {
    pub input: Option<PathBuf>,
    pub rank: Option<Vec<usize>>,
    pub beta: Option<Vec<f64>>,
    pub shift: Option<usize>,
    pub mode_select: Option<ModeSelectArg>,
    pub update: Option<UpdateArg>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateSection {
    pub ratings: Option<PathBuf>,
    pub tau: Option<usize>,
    pub order: Option<usize>,
    pub cache: Option<usize>,
    pub bs: Option<usize>,
    pub files: Option<usize>,
    pub rank: Option<Vec<usize>>,
    pub completion: Option<ToggleArg>,
    pub predictor: Option<PredictorArg>,
    pub shift: Option<usize>,
    pub beta: Option<f64>,
    pub max_iter: Option<usize>,
    pub slots: Option<usize>,
    pub mask: Option<f64>,
    pub slot_days: Option<u32>,
    pub pairing: Option<PairingArg>,
    pub gap_hours: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct IngestSection {
    pub ratings: Option<PathBuf>,
    pub top_f: Option<usize>,
    pub bs: Option<usize>,
    pub slot_days: Option<u32>,
    pub pairing: Option<PairingArg>,
    pub gap_hours: Option<f64>,
    pub weighting: Option<WeightingArg>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn load(path: Option<&Path>) -> CliResult<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Flag, then config value, then the built-in default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Output directory: flag, config, environment, then `./out`.
pub fn out_dir(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}
