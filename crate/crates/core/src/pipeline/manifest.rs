//! `manifest.json`: what a command read, with which config, and what it wrote.
//!
//! Entries are sorted and carry content hashes only, so identical runs write
//! identical manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

impl Manifest {
    pub fn new(command: impl Into<String>) -> Self {
        Manifest {
            command: command.into(),
            ..Default::default()
        }
    }

    /// Records an input file under the label it was given on the command line
    /// or in the config.
    pub fn input(&mut self, label: impl Into<String>, path: &Path) -> Result<()> {
        self.inputs.push(FileEntry {
            path: label.into(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Records every file below `dir` as an input, labeled `label/<relative>`.
    pub fn input_tree(&mut self, label: &str, dir: &Path) -> Result<()> {
        for rel in walk(dir)? {
            self.input(format!("{label}/{rel}"), &dir.join(&rel))?;
        }
        Ok(())
    }

    /// Records an output relative to `out`.
    pub fn output(&mut self, out: &Path, rel: &str) -> Result<()> {
        self.outputs.push(FileEntry {
            path: rel.to_string(),
            sha256: sha256_file(&out.join(rel))?,
        });
        Ok(())
    }

    pub fn write(mut self, out: &Path) -> Result<()> {
        self.inputs.sort();
        self.inputs.dedup();
        self.outputs.sort();
        self.outputs.dedup();
        let path = out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Relative paths (with `/` separators) of all files under `dir`, sorted.
pub fn walk(dir: &Path) -> Result<Vec<String>> {
    fn visit(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                visit(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("below root");
                let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect();
                out.push(parts.join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    visit(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}
