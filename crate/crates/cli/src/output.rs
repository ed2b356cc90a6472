//! Whole-directory outputs that appear all at once or not at all.

use std::path::{Path, PathBuf};

use crate::error::{io_err, CliError};

/// A scratch directory next to the final destination. [`StagedDir::publish`]
/// renames it into place; dropping it unpublished removes it.
pub struct StagedDir {
    tmp: tempfile::TempDir,
    dest: PathBuf,
}

impl StagedDir {
    /// Fails if `dest` exists, so earlier results are never overwritten.
    pub fn new(dest: &Path) -> Result<Self, CliError> {
        if dest.exists() {
            return Err(CliError::Invalid(format!("{} already exists", dest.display())));
        }
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        let tmp = tempfile::Builder::new().prefix(".trapal-staging-").tempdir_in(parent).map_err(io_err(parent))?;
        Ok(Self { tmp, dest: dest.to_owned() })
    }

    pub fn path(&self) -> &Path {
        self.tmp.path()
    }

    pub fn publish(self) -> Result<(), CliError> {
        let staged = self.tmp.keep();
        std::fs::rename(&staged, &self.dest).map_err(|e| {
            let _ = std::fs::remove_dir_all(&staged);
            CliError::Io { path: self.dest.display().to_string(), source: e }
        })
    }
}
