//! Output files are collected in memory, written to a staging directory
//! next to the target and renamed into place once complete.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Default)]
pub struct OutputTree {
    files: BTreeMap<String, Vec<u8>>,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    path: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    files: Vec<ManifestEntry<'a>>,
}

impl OutputTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a file at a `/`-separated relative path.
    pub fn add(&mut self, path: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.insert(path.into(), contents.into());
    }

    pub fn add_json<T: Serialize>(&mut self, path: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(path, text);
        Ok(())
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    fn manifest(&self) -> Result<Vec<u8>, CliError> {
        let files = self
            .files
            .iter()
            .map(|(path, data)| ManifestEntry {
                path,
                bytes: data.len(),
                sha256: hex::encode(Sha256::digest(data)),
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&Manifest { files })?;
        text.push('\n');
        Ok(text.into_bytes())
    }

    /// Writes every file plus the manifest into `dir`. An existing `dir` is
    /// replaced only if it is empty or holds an earlier manifest.
    pub fn commit(&self, dir: &Path) -> Result<(), CliError> {
        if dir.exists() && !replaceable(dir)? {
            return Err(CliError::Config(format!(
                "{} exists and is not an output directory of this tool",
                dir.display()
            )));
        }
        let staging = staging_path(dir);
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        let result = self.write_all(&staging);
        if let Err(e) = result {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&staging, dir).inspect_err(|_| {
            let _ = fs::remove_dir_all(&staging);
        })?;
        Ok(())
    }

    fn write_all(&self, root: &Path) -> Result<(), CliError> {
        fs::create_dir_all(root)?;
        for (path, data) in &self.files {
            let target = root.join(path);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(target, data)?;
        }
        fs::write(root.join(MANIFEST), self.manifest()?)?;
        Ok(())
    }
}

fn replaceable(dir: &Path) -> Result<bool, CliError> {
    if !dir.is_dir() {
        return Ok(false);
    }
    Ok(dir.join(MANIFEST).is_file() || fs::read_dir(dir)?.next().is_none())
}

fn staging_path(dir: &Path) -> PathBuf {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    dir.with_file_name(format!(".{name}.staging-{}", std::process::id()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_digests() {
        let mut t = OutputTree::new();
        t.add("a.txt", "abc");
        let m = String::from_utf8(t.manifest().unwrap()).unwrap();
        assert!(m.contains("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"));
    }

    #[test]
    fn refuses_foreign_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out");
        fs::create_dir(&dir).unwrap();
        fs::write(dir.join("precious.txt"), "keep").unwrap();
        let mut t = OutputTree::new();
        t.add("x.csv", "1\n");
        assert!(t.commit(&dir).is_err());
        assert!(dir.join("precious.txt").exists());
        fs::remove_file(dir.join("precious.txt")).unwrap();
        t.commit(&dir).unwrap();
        t.commit(&dir).unwrap();
        assert!(dir.join("x.csv").is_file() && dir.join(MANIFEST).is_file());
    }
}
