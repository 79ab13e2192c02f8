use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no IMU samples in window ({t1}, {t2}]")]
    NoImuCoverage { t1: f64, t2: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite residual in factor {id} ({kind})")]
    NonFiniteResidual { id: usize, kind: &'static str },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
