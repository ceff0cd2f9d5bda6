//! Outputs are written to a scratch directory next to the destination and
//! moved into place only when the whole command succeeds.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use tempfile::TempDir;

pub struct Staging {
    scratch: TempDir,
    dest: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(dest: &Path) -> io::Result<Self> {
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let scratch = tempfile::Builder::new().prefix(".dialogbench-").tempdir_in(parent)?;
        Ok(Staging { scratch, dest: dest.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.scratch.path().join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> io::Result<()> {
        fs::write(self.path(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Registers a file the caller wrote to [`Staging::path`] directly.
    pub fn add(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    /// Moves every staged file into the destination directory.
    pub fn commit(self) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dest)?;
        let mut written = Vec::new();
        for name in &self.files {
            let target = self.dest.join(name);
            fs::rename(self.scratch.path().join(name), &target)?;
            written.push(target);
        }
        Ok(written)
    }
}
