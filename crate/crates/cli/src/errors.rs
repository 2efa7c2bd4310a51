use std::fmt;
use std::path::{Path, PathBuf};

/// A required file or directory does not exist. Exits with code 2.
#[derive(Debug)]
pub struct MissingPath {
    pub path: PathBuf,
    /// Subcommand that produces the path, if any.
    pub producer: Option<&'static str>,
}

impl MissingPath {
    pub fn new(path: &Path) -> Self {
        Self {
            path: path.to_path_buf(),
            producer: None,
        }
    }

    pub fn produced_by(path: &Path, command: &'static str) -> Self {
        Self {
            path: path.to_path_buf(),
            producer: Some(command),
        }
    }
}

impl fmt::Display for MissingPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} does not exist", self.path.display())?;
        if let Some(cmd) = self.producer {
            write!(f, "; run `mera {cmd}` first")?;
        }
        Ok(())
    }
}

impl std::error::Error for MissingPath {}

/// Invalid configuration or arguments. Exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// An upstream artifact exists but was produced from different inputs.
#[derive(Debug)]
pub struct StaleArtifact {
    pub path: PathBuf,
    pub producer: &'static str,
}

impl fmt::Display for StaleArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} is out of date with the current config; rerun `mera {}`",
            self.path.display(),
            self.producer
        )
    }
}

impl std::error::Error for StaleArtifact {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<MissingPath>() || e.is::<UsageError>()) {
        2
    } else {
        1
    }
}
