use std::io;

use thiserror::Error;

/// Everything that can go wrong inside the library.
///
/// The variants are grouped so a front end can map them onto a small set of
/// exit codes: [`Error::is_validation`], [`Error::is_io`] and
/// [`Error::is_plugin`] partition them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Validation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("unsupported or malformed image {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("plugin error: {0}")]
    Plugin(String),

    #[error("plugin protocol violation: {0}")]
    Protocol(String),

    #[error("operation not supported: {0}")]
    Unsupported(String),

    /// μ = 0 leaves no admissible gain under the linearized model.
    #[error("singular gain: linearization coefficient is {0}, no admissible lambda")]
    SingularGain(f64),

    #[error("iteration diverged: {0}")]
    Divergence(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Validation,
    Io,
    Plugin,
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        if self.is_io() {
            ErrorKind::Io
        } else if self.is_plugin() {
            ErrorKind::Plugin
        } else {
            ErrorKind::Validation
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape(_)
                | Error::Validation(_)
                | Error::Unsupported(_)
                | Error::SingularGain(_)
                | Error::Divergence(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }

    pub fn is_plugin(&self) -> bool {
        matches!(self, Error::Plugin(_) | Error::Protocol(_))
    }
}
