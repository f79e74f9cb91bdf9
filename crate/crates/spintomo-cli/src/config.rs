//! Optional JSON config file; any field a flag does not set falls back to
//! the config, then to the built-in default.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub spin: Option<String>,
    pub axes: Option<String>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub state: Option<String>,
    pub reference: Option<PathBuf>,
    pub noise_pop: Option<f64>,
    pub noise_axis_deg: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub rank_threshold: Option<f64>,
    pub max_iters: Option<usize>,
    pub tof: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    }
}

/// Flag value if given, else the config value.
pub fn merged<T>(flag: Option<T>, config: Option<T>) -> Option<T> {
    flag.or(config)
}
