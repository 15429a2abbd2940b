//! Run manifest: everything needed to repeat a run, plus hashes of what it wrote.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory for outputs, as given for inputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointRecord {
    pub job: String,
    pub initial_state: String,
    pub index: usize,
    pub epsilon: f64,
    pub wall_time: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailureRecord {
    pub job: String,
    pub initial_state: String,
    pub index: usize,
    pub epsilon: f64,
    pub message: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    /// Subcommand that produced the run.
    pub command: String,
    pub config: Config,
    /// Data files read by the run.
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub points: Vec<PointRecord>,
    pub failures: Vec<FailureRecord>,
    pub seeds: Vec<u64>,
    /// Worker threads; results do not depend on it.
    pub threads: usize,
}

impl Manifest {
    pub fn new(command: &str, config: Config, threads: usize) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            points: Vec::new(),
            failures: Vec::new(),
            seeds: Vec::new(),
            threads,
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn record_output(&mut self, out_dir: &Path, name: &str) -> Result<(), CliError> {
        self.outputs.push(FileRecord {
            path: name.to_string(),
            sha256: sha256_file(&out_dir.join(name))?,
        });
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let path = out_dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        m.config.validate()?;
        Ok(m)
    }

    /// Every recorded output exists under `out_dir` with the recorded hash.
    pub fn verify(&self, out_dir: &Path) -> Result<(), CliError> {
        for f in &self.outputs {
            let h = sha256_file(&out_dir.join(&f.path))?;
            if h != f.sha256 {
                return Err(CliError::Io(format!("{}: hash mismatch", f.path)));
            }
        }
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}
