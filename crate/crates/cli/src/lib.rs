//! Batch experiment driver: one JSON config, one pipeline, a directory of
//! JSON and CSV artifacts plus a hashed manifest.

pub mod config;
mod pipelines;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{ExperimentConfig, GraphKind, InitialKind, InitialSpec, Pipeline};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Core(#[from] heatlab_core::Error),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Check(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    ConfigParse(String),
    #[error("stage {stage} failed: {source}")]
    StageFailure {
        stage: String,
        #[source]
        source: StageError,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::ConfigParse(_) => 1,
            RunError::StageFailure { .. } => 2,
        }
    }
}

pub(crate) fn stage_err(stage: &str) -> impl FnOnce(heatlab_core::Error) -> RunError + '_ {
    move |e| RunError::StageFailure {
        stage: stage.to_string(),
        source: StageError::Core(e),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub pipeline: Pipeline,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// The only nondeterministic part of a run.
    pub stages: Vec<StageTiming>,
    pub files: Vec<FileEntry>,
    pub caveats: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Artifacts and timings collected while a pipeline runs.
#[derive(Default)]
pub(crate) struct Recorder {
    stages: Vec<StageTiming>,
    files: Vec<(String, Vec<u8>)>,
    caveats: Vec<String>,
}

impl Recorder {
    pub(crate) fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T, RunError>) -> Result<T, RunError> {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTiming {
            stage: name.to_string(),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub(crate) fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.files.push((name.to_string(), text.into_bytes()));
    }

    pub(crate) fn csv(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }

    pub(crate) fn caveat(&mut self, text: &str) {
        if !self.caveats.iter().any(|c| c == text) {
            self.caveats.push(text.to_string());
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Run the configured pipeline and write its artifacts and `manifest.json`
/// into `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest, RunError> {
    config.validate()?;
    let mut rec = Recorder::default();
    pipelines::run(config, &mut rec)?;
    let out_dir = config.output_dir.clone();
    let artifacts = std::mem::take(&mut rec.files);
    let files = rec.stage("write", || write_files(&out_dir, &artifacts))?;
    let manifest = RunManifest {
        tool: "heatlab",
        version: VERSION,
        pipeline: config.pipeline,
        seed: config.seed,
        config: config.clone(),
        stages: rec.stages,
        files,
        caveats: rec.caveats,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(out_dir.join(MANIFEST_FILE), text).map_err(|e| io_failure("write", &out_dir, e))?;
    Ok(manifest)
}

fn io_failure(stage: &str, path: &Path, e: std::io::Error) -> RunError {
    RunError::StageFailure {
        stage: stage.to_string(),
        source: StageError::Io(format!("{}: {e}", path.display())),
    }
}

fn write_files(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<FileEntry>, RunError> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure("write", dir, e))?;
    let mut entries = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path: PathBuf = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io_failure("write", &path, e))?;
        entries.push(FileEntry {
            path: name.clone(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn exit_codes() {
        assert_eq!(RunError::ConfigParse("x".into()).exit_code(), 1);
        let e = RunError::StageFailure {
            stage: "solve".into(),
            source: StageError::Check("boom".into()),
        };
        assert_eq!(e.exit_code(), 2);
        assert_eq!(e.to_string(), "stage solve failed: boom");
    }
}
