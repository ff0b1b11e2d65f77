//! Writes report files under an output directory and keeps an index of them.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug)]
pub struct Emitter {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl Emitter {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::input(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Renders into memory with `render`, then writes `rel` in one go.
    pub fn write_with<F>(&mut self, rel: &str, render: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
    {
        let mut buf = Vec::new();
        render(&mut buf)?;
        self.write_bytes(rel, &buf)
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        let entry = FileEntry {
            path: rel.to_string(),
            bytes: bytes.len(),
            sha256: hex(&Sha256::digest(bytes)),
        };
        match self.files.iter_mut().find(|f| f.path == rel) {
            Some(f) => *f = entry,
            None => self.files.push(entry),
        }
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_tracks_rewrites() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = Emitter::new(dir.path()).unwrap();
        e.write_bytes("a/b.csv", b"x").unwrap();
        e.write_bytes("a/b.csv", b"").unwrap();
        assert_eq!(e.files().len(), 1);
        assert_eq!(e.files()[0].bytes, 0);
        assert_eq!(
            e.files()[0].sha256,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert!(dir.path().join("a/b.csv").exists());
    }
}
