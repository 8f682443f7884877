use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A probe gain vanished so its phase is undefined.
    #[error("degenerate probe {index}: |w^H a(x)| = {gain:e}")]
    DegenerateProbe { index: usize, gain: f64 },

    #[error("singular information matrix (condition number {condition:e})")]
    SingularInformation { condition: f64 },

    #[error("offset ({0}, {1}) lies outside the main-lobe box (-1, 1)^2")]
    OutsideMainLobe(f64, f64),

    #[error("rank-deficient sweep projection")]
    RankDeficient,

    #[error("no start converged within {max_iter} iterations")]
    NoConvergence { max_iter: usize },

    #[error("complex residue {0:e} in a quantity that must be real")]
    ComplexResidue(f64),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
