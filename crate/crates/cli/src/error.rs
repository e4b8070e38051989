use std::path::PathBuf;

/// Everything a command can fail with.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mssnet_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Archive(#[from] crate::weights::ArchiveError),
    #[error("{}: {detail}", path.display())]
    Config { path: PathBuf, detail: String },
    #[error("dataset {}: {detail}", root.display())]
    Dataset { root: PathBuf, detail: String },
    #[error("{0}")]
    Failed(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for unreadable or unwritable files, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Image { .. } => 2,
            CliError::Archive(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}
