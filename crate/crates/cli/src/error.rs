use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit codes of the `c3dm` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Core(#[from] c3dm_core::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use c3dm_core::Error as E;
        match self {
            HarnessError::Config(_) => exit::CONFIG,
            HarnessError::Io { .. } | HarnessError::Csv { .. } => exit::IO,
            HarnessError::Core(e) => match e {
                E::Divergence { .. } | E::NonFiniteAction { .. } => exit::DIVERGENCE,
                E::Io { .. } | E::Json { .. } | E::Format { .. } | E::Version { .. } => exit::IO,
                _ => exit::CONFIG,
            },
        }
    }
}
