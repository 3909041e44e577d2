//! Failure-atomic output directory handling.
//!
//! Artifact commands either leave a complete set of files behind or none of
//! their own: every file written goes through [`OutputWriter`], and
//! [`OutputWriter::discard`] removes what was written so far — plus the
//! directory itself when this process created it and it is empty again.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct OutputWriter {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl OutputWriter {
    /// Creates (or reuses) `dir` as the output directory.
    pub fn create(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
        })
    }

    /// Writes one file into the output directory, replacing any previous
    /// file of the same name.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    /// Best-effort rollback: removes every file written through this writer,
    /// then the directory if this writer created it (and nothing else is in
    /// it).
    pub fn discard(self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}
