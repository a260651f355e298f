use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub elapsed_seconds: f64,
    /// Command-specific figures (losses, error values, bit rates).
    pub summary: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<FileEntry> {
    let mut f = fs::File::open(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileEntry {
        path: path.to_path_buf(),
        sha256: format!("{:x}", hasher.finalize()),
        bytes,
    })
}

/// Bookkeeping of one command run. Files registered as outputs are
/// deleted again unless the run is committed.
pub struct Run {
    command: String,
    config_sha256: String,
    manifest_dir: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    created_dirs: Vec<PathBuf>,
    started: Instant,
    committed: bool,
}

impl Run {
    pub fn new(command: &str, config_json: &str, out: &Path) -> Self {
        Self {
            command: command.into(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            manifest_dir: out.join("manifests"),
            inputs: Vec::new(),
            outputs: Vec::new(),
            created_dirs: Vec::new(),
            started: Instant::now(),
            committed: false,
        }
    }

    /// Records an input; a missing file is a validation error.
    pub fn input(&mut self, path: &Path) -> Result<PathBuf> {
        if !path.exists() {
            return Err(CliError::Validation(format!("missing input {}", path.display())));
        }
        self.inputs.push(path.to_path_buf());
        Ok(path.to_path_buf())
    }

    /// Creates `dir` (and parents), remembering which levels were new.
    pub fn dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut d = Some(dir);
        while let Some(p) = d {
            if p.as_os_str().is_empty() || p.exists() {
                break;
            }
            missing.push(p.to_path_buf());
            d = p.parent();
        }
        fs::create_dir_all(dir)?;
        self.created_dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn write(&mut self, path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
        self.output(path.clone());
        fs::write(&path, bytes)?;
        Ok(())
    }

    /// Hashes inputs and outputs and writes `manifests/<command>.json`.
    pub fn commit(mut self, summary: serde_json::Value) -> Result<Manifest> {
        let inputs = self.inputs.iter().map(|p| hash_file(p)).collect::<Result<Vec<_>>>()?;
        let outputs = self.outputs.iter().map(|p| hash_file(p)).collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            command: self.command.clone(),
            config_sha256: self.config_sha256.clone(),
            inputs,
            outputs,
            elapsed_seconds: self.started.elapsed().as_secs_f64(),
            summary,
        };
        let dir = self.manifest_dir.clone();
        self.dir(&dir)?;
        let path = dir.join(format!("{}.json", self.command));
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        self.committed = true;
        Ok(manifest)
    }
}

impl Drop for Run {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.outputs {
            let _ = fs::remove_file(p);
        }
        for d in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}
