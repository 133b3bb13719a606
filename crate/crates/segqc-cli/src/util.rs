//! Shared command plumbing: exit-code classification, output staging, and
//! config echoing.

use std::path::{Path, PathBuf};

use anyhow::anyhow;

/// Exit codes: 0 success, 1 usage, 2 data error, 3 internal.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Data(e) => format!("data error: {e:#}"),
            CliError::Internal(e) => format!("internal error: {e:#}"),
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn data_err(e: impl std::error::Error + Send + Sync + 'static) -> CliError {
    CliError::Data(anyhow!(e))
}

pub fn internal(e: impl std::error::Error + Send + Sync + 'static) -> CliError {
    CliError::Internal(anyhow!(e))
}

/// Stages output files; anything not committed is removed on drop so failed
/// runs leave no partial outputs behind.
pub struct OutputGuard {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(internal)?;
        Ok(OutputGuard { dir: dir.to_path_buf(), written: Vec::new(), committed: false })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        std::fs::write(&p, bytes.as_ref()).map_err(internal)?;
        Ok(p)
    }

    /// Register extra files produced next to `main_path` by library writers
    /// (payloads named after the stem).
    pub fn register(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    pub fn commit(mut self) {
        self.committed = true;
        self.written.clear();
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// Every command writes one of these next to its outputs so a run can be
/// reproduced from its artifacts alone.
pub fn run_config_json(
    command: &str,
    seed: u64,
    config: serde_json::Value,
) -> serde_json::Value {
    serde_json::json!({
        "command": command,
        "seed": seed,
        "config": config,
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(anyhow!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Data(anyhow!("{}: invalid json: {e}", path.display())))
}
