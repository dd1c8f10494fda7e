use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one run; every file it lists was produced by that run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub config: Value,
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Collects outputs while a command runs.
pub struct ManifestBuilder {
    dir: PathBuf,
    started: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(dir: &Path, command: &str, seed: u64, config: Value) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        Ok(ManifestBuilder {
            dir: dir.to_path_buf(),
            started: Instant::now(),
            manifest: RunManifest {
                command: command.into(),
                version: env!("CARGO_PKG_VERSION"),
                seed,
                config,
                outputs: Vec::new(),
                wall_clock_s: 0.0,
                notes: Vec::new(),
            },
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Creates `name` in the output directory, fills it via `write`, and
    /// records it.
    pub fn write_file(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
    ) -> CliResult<PathBuf> {
        let path = self.path(name);
        let file = std::fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        write(&mut w).and_then(|_| std::io::Write::flush(&mut w)).map_err(|e| io_error(&path, e))?;
        self.record(name);
        Ok(path)
    }

    pub fn record(&mut self, name: &str) {
        self.manifest.outputs.push(name.into());
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.manifest.notes.push(note.into());
    }

    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.manifest.wall_clock_s = self.started.elapsed().as_secs_f64();
        let path = self.dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
        Ok(path)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}
