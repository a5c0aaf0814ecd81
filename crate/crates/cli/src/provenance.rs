use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const PROVENANCE_FILE: &str = "provenance.json";

/// Content hash in git's object format: `sha256("blob <len>\0" ++ bytes)`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(blob_hash(&bytes))
}

/// Record of one command invocation: what ran, with which effective
/// settings, over which exact inputs.
pub struct Provenance {
    command: &'static str,
    config: Value,
    inputs: Vec<PathBuf>,
}

impl Provenance {
    pub fn new(command: &'static str, config: Value) -> Self {
        Provenance {
            command,
            config,
            inputs: Vec::new(),
        }
    }

    pub fn input(mut self, path: impl Into<PathBuf>) -> Self {
        self.inputs.push(path.into());
        self
    }

    pub fn inputs(mut self, paths: impl IntoIterator<Item = PathBuf>) -> Self {
        self.inputs.extend(paths);
        self
    }

    pub fn to_json(&self) -> Result<Value> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| Ok(json!({ "path": p.display().to_string(), "hash": file_hash(p)? })))
            .collect::<Result<Vec<_>>>()?;
        Ok(json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "inputs": inputs,
        }))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json()?)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    /// `<dir>/provenance.json`.
    pub fn write_in(&self, dir: &Path) -> Result<()> {
        self.write(&dir.join(PROVENANCE_FILE))
    }

    /// `<file>.provenance.json` next to a single-file artifact.
    pub fn write_beside(&self, file: &Path) -> Result<()> {
        let mut name = file.as_os_str().to_owned();
        name.push(".provenance.json");
        self.write(Path::new(&name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_git_sha256_object_ids() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            blob_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
        // Empty blob in a sha256 repository.
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
