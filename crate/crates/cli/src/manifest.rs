//! `run_manifest.json`: what ran, how long each phase took, and a hash of
//! every file produced.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::settings::Flags;
use crate::CliError;

pub const MANIFEST_NAME: &str = "run_manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Flags,
    /// Values the command derived from the flags (effective eta, dims, …).
    pub resolved: serde_json::Map<String, serde_json::Value>,
    pub phases: Vec<Phase>,
    pub outputs: Vec<OutputFile>,
    #[serde(skip)]
    files: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &Flags) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            resolved: Default::default(),
            phases: Vec::new(),
            outputs: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn resolve(&mut self, key: &str, value: impl Serialize) {
        self.resolved
            .insert(key.to_string(), serde_json::to_value(value).expect("value serializes"));
    }

    /// Runs `f` as a named, timed phase.
    pub fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
        let t = Instant::now();
        let r = f()?;
        self.phases.push(Phase {
            name: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok(r)
    }

    pub fn add_file(&mut self, path: impl Into<PathBuf>) {
        self.files.push(path.into());
    }

    /// Hashes every recorded file and writes the manifest into `dir`
    /// atomically. Paths are stored relative to `dir` when possible.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for f in std::mem::take(&mut self.files) {
            let bytes = std::fs::metadata(&f)
                .map_err(|e| CliError::Io(format!("{}: {e}", f.display())))?
                .len();
            let rel = f.strip_prefix(dir).unwrap_or(&f);
            self.outputs.push(OutputFile {
                path: rel.to_string_lossy().replace('\\', "/"),
                bytes,
                sha256: sha256_file(&f)?,
            });
        }
        let path = dir.join(MANIFEST_NAME);
        let json = serde_json::to_vec_pretty(&self).expect("manifest serializes");
        neaw::persist::write_atomic(&path, &json)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn manifest_lists_files() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x.txt");
        std::fs::write(&f, b"abc").unwrap();
        let mut m = RunManifest::new("gen", &Flags::default());
        m.phase("work", || Ok(())).unwrap();
        m.add_file(&f);
        let p = m.finish(dir.path()).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap();
        assert_eq!(v["outputs"][0]["path"], "x.txt");
        assert_eq!(v["outputs"][0]["bytes"], 3);
        assert_eq!(
            v["outputs"][0]["sha256"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(v["phases"][0]["name"], "work");
    }
}
