use std::path::PathBuf;

use catmap::qcqp::SolveStatus;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: not an 8-bit RGB image ({found})")]
    NotRgb { path: PathBuf, found: String },

    #[error("config {path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Lib(#[from] catmap::Error),
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_ASSERTION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_MAX_ITER: u8 = 4;

fn lib_code(e: &catmap::Error) -> u8 {
    use catmap::Error as E;
    match e {
        E::Assertion(_) | E::IdentityViolated { .. } | E::NonFinite(_) | E::NonFiniteGradient(_) => EXIT_ASSERTION,
        E::Qcqp { status: SolveStatus::Infeasible, .. } => EXIT_INFEASIBLE,
        E::Qcqp { .. } | E::PivotLimit(_) => EXIT_MAX_ITER,
        E::SolverStep { source, .. } => lib_code(source),
        _ => EXIT_USAGE,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) => lib_code(e),
            _ => EXIT_USAGE,
        }
    }
}

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_failures_get_distinct_codes() {
        let inf = CliError::Lib(catmap::Error::Qcqp {
            status: SolveStatus::Infeasible,
            iteration: 0,
            violation: 1.0,
        });
        let cap = CliError::Lib(catmap::Error::Qcqp {
            status: SolveStatus::MaxIterReached,
            iteration: 3,
            violation: 1e-3,
        });
        assert_eq!(inf.exit_code(), EXIT_INFEASIBLE);
        assert_eq!(cap.exit_code(), EXIT_MAX_ITER);
        let wrapped = CliError::Lib(catmap::Error::SolverStep {
            solver: "alternating",
            iteration: 2,
            source: Box::new(catmap::Error::Assertion("x".into())),
        });
        assert_eq!(wrapped.exit_code(), EXIT_ASSERTION);
        assert_eq!(CliError::Usage("bad".into()).exit_code(), EXIT_USAGE);
    }
}
