//! Buffered outputs, atomic writes and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub results: serde_json::Value,
    pub duration_secs: f64,
}

/// Collects everything a command wants to write; nothing touches the disk
/// until [`Run::finish`], so a failed command leaves no partial files.
pub struct Run {
    command: &'static str,
    params: serde_json::Value,
    started: Instant,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
    outputs: Vec<(PathBuf, Vec<u8>)>,
    results: serde_json::Value,
}

impl Run {
    pub fn new(command: &'static str, params: serde_json::Value) -> Self {
        Run {
            command,
            params,
            started: Instant::now(),
            inputs: Vec::new(),
            seed: None,
            outputs: Vec::new(),
            results: serde_json::Value::Null,
        }
    }

    /// Registers an input file; fails with a validation error if it is missing.
    pub fn input(&mut self, path: &Path) -> CliResult<PathBuf> {
        if !path.is_file() {
            return Err(CliError::Validation(format!("file not found: {}", path.display())));
        }
        self.inputs.push(path.to_path_buf());
        Ok(path.to_path_buf())
    }

    pub fn optional_input(&mut self, path: Option<&PathBuf>) -> CliResult<Option<PathBuf>> {
        path.map(|p| self.input(p)).transpose()
    }

    pub fn set_seed(&mut self, seed: Option<u64>) {
        self.seed = seed;
    }

    pub fn set_results(&mut self, results: impl Serialize) -> CliResult<()> {
        self.results = serde_json::to_value(results).map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(())
    }

    /// Renders an output with `render` into memory.
    pub fn output(
        &mut self,
        path: &Path,
        render: impl FnOnce(&mut Vec<u8>) -> otconf::Result<()>,
    ) -> CliResult<()> {
        let mut buf = Vec::new();
        render(&mut buf)?;
        self.outputs.push((path.to_path_buf(), buf));
        Ok(())
    }

    pub fn json_output(&mut self, path: &Path, value: &impl Serialize) -> CliResult<()> {
        let mut buf = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        buf.push(b'\n');
        self.outputs.push((path.to_path_buf(), buf));
        Ok(())
    }

    /// Writes every output and then `<first output>.manifest.json`.
    pub fn finish(self) -> CliResult<PathBuf> {
        let primary = self
            .outputs
            .first()
            .map(|(p, _)| p.clone())
            .ok_or_else(|| CliError::Runtime("command produced no output".into()))?;
        let mut inputs = Vec::with_capacity(self.inputs.len());
        for path in &self.inputs {
            let bytes = fs::read(path)?;
            inputs.push(InputDigest {
                path: path.clone(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        for (path, bytes) in &self.outputs {
            write_atomic(path, bytes)?;
        }
        let manifest = RunManifest {
            command: self.command.to_string(),
            params: self.params,
            inputs,
            seed: self.seed,
            outputs: self.outputs.iter().map(|(p, _)| p.clone()).collect(),
            results: self.results,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let mut name = primary.clone().into_os_string();
        name.push(".manifest.json");
        let manifest_path = PathBuf::from(name);
        let mut buf = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
        buf.push(b'\n');
        write_atomic(&manifest_path, &buf)?;
        Ok(manifest_path)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}
