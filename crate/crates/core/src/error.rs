use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Not enough rows (or an empty split) for the requested computation.
    InsufficientData(String),
    /// An environment construction left some environment without rows.
    DegenerateEnvironment {
        env: usize,
    },
    ShapeError {
        expected: usize,
        found: usize,
    },
    SingularSystem,
    TimestepError {
        t: usize,
        max: usize,
    },
    TrainingDiverged {
        epoch: usize,
    },
    NonFiniteGradient,
    BudgetError {
        k: usize,
        p: usize,
    },
    InvalidConfig(String),
    /// Malformed serialized model bytes.
    Decode(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InsufficientData(what) => write!(f, "insufficient data: {what}"),
            Error::DegenerateEnvironment { env } => {
                write!(f, "environment {env} would receive no rows")
            }
            Error::ShapeError { expected, found } => {
                write!(f, "shape mismatch: expected {expected}, found {found}")
            }
            Error::SingularSystem => f.write_str("linear system is singular"),
            Error::TimestepError { t, max } => {
                write!(f, "timestep {t} outside 1..={max}")
            }
            Error::TrainingDiverged { epoch } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}")
            }
            Error::NonFiniteGradient => f.write_str("non-finite gradient"),
            Error::BudgetError { k, p } => write!(f, "budget k={k} outside 1..={p}"),
            Error::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
            Error::Decode(what) => write!(f, "cannot decode model: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn ensure_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeError { expected, found })
    }
}
