//! Optional configuration file supplying defaults for any CLI flag.
//! Explicit command-line flags always override file values.

use std::path::Path;

use serde::Deserialize;

use flowseg::Error;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    // profiling
    pub days: Option<usize>,
    // segmentation / streaming
    pub metric: Option<String>,
    pub selectivity: Option<f64>,
    pub pthr: Option<f64>,
    pub nthr: Option<f64>,
    pub window: Option<usize>,
    // association
    pub planar: Option<bool>,
    pub snap: Option<f64>,
    pub jump: Option<f64>,
    pub max_hops: Option<u32>,
    pub spacing: Option<f64>,
    // evaluation / synth
    pub models: Option<String>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub tune: Option<bool>,
    pub epoch: Option<String>,
}

impl FileConfig {
    /// Load from TOML or JSON, chosen by extension (.json is JSON, anything
    /// else is tried as TOML first).
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let is_json = path.extension().and_then(|e| e.to_str()) == Some("json");
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| {
                Error::InvalidParam(format!("config {}: {e}", path.display()))
            })?
        } else {
            toml::from_str(&text).map_err(|e| {
                Error::InvalidParam(format!("config {}: {e}", path.display()))
            })?
        };
        Ok(parsed)
    }
}
