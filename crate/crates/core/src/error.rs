use thiserror::Error;

/// Errors raised by the simulation and diagnostics routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid spectrum model: {0}")]
    InvalidModel(String),

    #[error("wavevector {0:?} is not part of the model")]
    UnknownWavevector(Vec<i32>),

    #[error("fields belong to different spectrum models")]
    ModelMismatch,

    #[error("conjugate symmetry violated: imaginary residue {residue:e} exceeds {bound:e}")]
    SymmetryViolation { residue: f64, bound: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("chain state must be nonzero")]
    ChainAtZero,

    #[error("requested depth {requested} exceeds the enumeration limit {limit}")]
    DepthOverflow { requested: usize, limit: usize },

    #[error("records have mismatched horizons ({0} vs {1})")]
    HorizonMismatch(f64, f64),

    #[error("empty trajectory record")]
    EmptyRecord,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
