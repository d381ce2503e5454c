use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Record written next to every output: enough to rerun the command.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub parameters: Value,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_owned(),
            argv: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            parameters: Value::Null,
            duration_seconds: 0.0,
        }
    }

    pub fn input(&mut self, key: &str, path: &Path) -> &mut Self {
        self.inputs.insert(key.to_owned(), path.to_path_buf());
        self
    }

    pub fn output(&mut self, key: &str, path: &Path) -> &mut Self {
        self.outputs.insert(key.to_owned(), path.to_path_buf());
        self
    }

    pub fn parameters(&mut self, value: impl Serialize) -> &mut Self {
        self.parameters = serde_json::to_value(value).expect("parameters serialize");
        self
    }

    /// Stamps the elapsed time and writes pretty JSON to `path`.
    pub fn write(&mut self, path: &Path, started: Instant) -> Result<(), CliError> {
        self.duration_seconds = started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// `out.ext` → `out.manifest.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}
