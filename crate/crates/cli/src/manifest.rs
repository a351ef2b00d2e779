//! Output directories with a reproducibility manifest: the effective
//! configuration, digests of every input and output, and the tool version.
//! No timestamps, so identical runs give identical manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl Into<String>, data: &[u8]) -> Self {
        let hash = Sha256::digest(data);
        Self { path: path.into(), bytes: data.len(), sha256: hash.iter().map(|b| format!("{b:02x}")).collect() }
    }
}

/// An input file read whole, so it can be both parsed and digested.
pub struct Input {
    pub digest: FileDigest,
    pub bytes: Vec<u8>,
}

impl Input {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(CliError::io(path))?;
        Ok(Self { digest: FileDigest::of(path.display().to_string(), &bytes), bytes })
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a C,
    inputs: &'a [FileDigest],
    outputs: &'a [FileDigest],
}

pub struct OutputDir {
    dir: PathBuf,
    written: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, data).map_err(CliError::io(&path))?;
        self.written.push(FileDigest::of(name, data));
        Ok(())
    }

    /// Writes `manifest.json` last, covering everything written before it.
    pub fn finish<C: Serialize>(self, command: &'static str, config: &C, inputs: &[FileDigest]) -> Result<(), CliError> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            inputs,
            outputs: &self.written,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(CliError::io(&path))
    }
}
