use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::Command;

/// Record of one invocation, written next to its artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// The parsed arguments; enough to rerun the command.
    pub parameters: serde_json::Map<String, Value>,
    pub seed: Option<u64>,
    pub artifact_paths: Vec<PathBuf>,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(cmd: &Command, started: f64, artifacts: Vec<PathBuf>) -> Result<Self> {
        let Value::Object(mut parameters) = serde_json::to_value(cmd)? else {
            bail!("command did not serialize to an object");
        };
        parameters.remove("command");
        Ok(Self {
            command: cmd.name().to_string(),
            parameters,
            seed: cmd.seed(),
            artifact_paths: artifacts,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started,
            finished: now(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        regime::data::write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
    }

    pub fn to_command(&self) -> Result<Command> {
        let mut obj = self.parameters.clone();
        obj.insert("command".into(), Value::String(self.command.clone()));
        serde_json::from_value(Value::Object(obj)).context("manifest parameters do not describe a command")
    }
}
