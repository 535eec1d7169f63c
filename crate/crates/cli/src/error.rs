use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] gpss_core::Error),
}

impl From<gpss_core::ValidationError> for CliError {
    fn from(e: gpss_core::ValidationError) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 2 validation, 3 convergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        use gpss_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Read { .. } => 4,
            CliError::Core(e) => match e {
                E::Validation(_) | E::Domain(_) | E::Hypothesis(_) => 2,
                E::Io(_) | E::Json(_) | E::Csv(_) => 4,
                _ => 3,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(gpss_core::Error::CurveMonotone).exit_code(), 3);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::from(gpss_core::Error::Io(io)).exit_code(), 4);
        let v = gpss_core::ValidationError::DimensionTooSmall { d: 1 };
        assert_eq!(CliError::from(v).exit_code(), 2);
    }
}
