use std::path::Path;

/// Command failure, mapped to the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Io(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Domain(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        CliError::Domain(msg.into())
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<hgpipe_core::Error> for CliError {
    fn from(e: hgpipe_core::Error) -> Self {
        match e {
            hgpipe_core::Error::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<hgpipe_resource::Error> for CliError {
    fn from(e: hgpipe_resource::Error) -> Self {
        match e {
            hgpipe_resource::Error::Core(inner) => inner.into(),
            hgpipe_resource::Error::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<hgpipe_sim::Error> for CliError {
    fn from(e: hgpipe_sim::Error) -> Self {
        match e {
            hgpipe_sim::Error::Resource(inner) => inner.into(),
            hgpipe_sim::Error::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}
