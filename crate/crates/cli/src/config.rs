use std::path::Path;

use serde::Deserialize;
use tiling_core::solve::SolveOptions;
use tiling_core::train::TrainConfig;
use tiling_service::ServiceConfig;

use crate::error::CliError;

/// Solve defaults; command-line flags take precedence.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub runs: Option<usize>,
    pub k: Option<usize>,
    pub options: SolveOptions,
}

/// Contents of the `--config` file. Every section is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub train: Option<TrainConfig>,
    pub solve: SolveSection,
    pub service: Option<ServiceConfig>,
}

impl FileConfig {
    /// Relative paths in the service section resolve against the file's directory.
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
        let mut cfg: FileConfig =
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if let Some(svc) = cfg.service.as_mut() {
            svc.resolve(path.parent().unwrap_or(Path::new(".")));
        }
        Ok(cfg)
    }
}
