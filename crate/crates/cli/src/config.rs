use std::path::Path;

use context_fold::harness::{RunConfig, TrainSimConfig};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

/// Contents of a `--config` file. Every section and field is optional; missing
/// values fall back to the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub version: Option<u32>,
    pub run: RunConfig,
    pub train: TrainSimConfig,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub cells: Vec<String>,
    pub task_sets: Vec<String>,
}

pub fn load(path: Option<&Path>) -> Result<ConfigFile, String> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let file: ConfigFile = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    match file.version {
        None | Some(CONFIG_VERSION) => Ok(file),
        Some(v) => Err(format!("{}: unsupported config version {v}", path.display())),
    }
}
