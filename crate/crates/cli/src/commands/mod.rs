pub mod analyze;
pub mod generate;
pub mod report;
pub mod run;

use std::fmt::Arguments;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub quiet: bool,
}

impl Context {
    /// Progress line on standard error unless quiet.
    pub fn say(&self, msg: Arguments<'_>) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
