//! Atomic file output and the run manifest sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to a command's outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects inputs and outputs of one command run.
pub struct Run {
    manifest: RunManifest,
    manifest_path: Option<PathBuf>,
}

impl Run {
    pub fn new(command: &str, manifest_path: Option<PathBuf>) -> Self {
        Run {
            manifest: RunManifest {
                command: command.to_string(),
                arguments: std::env::args().skip(1).collect(),
                seed: None,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
            manifest_path,
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn read_input(&mut self, path: &Path) -> std::io::Result<String> {
        let bytes = fs::read(path)?;
        self.manifest.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: digest(&bytes),
        });
        String::from_utf8(bytes).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn write_output(&mut self, path: &Path, bytes: &[u8]) -> std::io::Result<()> {
        write_atomic(path, bytes)?;
        self.manifest.outputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: digest(bytes),
        });
        Ok(())
    }

    /// Writes the manifest beside the first output, or to stderr when there is none.
    pub fn finish(self) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        let target = self.manifest_path.or_else(|| {
            self.manifest.outputs.first().map(|o| {
                let mut p = PathBuf::from(&o.path).into_os_string();
                p.push(".manifest.json");
                PathBuf::from(p)
            })
        });
        match target {
            Some(p) => write_atomic(&p, text.as_bytes()),
            None => {
                eprint!("{text}");
                Ok(())
            }
        }
    }
}

/// Write via a temporary file in the destination directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
