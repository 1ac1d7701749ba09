use thiserror::Error;

/// Errors raised by evaluation, the solvers and the problem parsers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The Gram matrix of the constraint Jacobian is numerically singular,
    /// so the constraint map is not a submersion at this point.
    #[error("constraint Jacobian is rank deficient (reciprocal condition {rcond:e})")]
    RankDeficient { rcond: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("line search exhausted {backtracks} backtracks without an acceptable step")]
    LineSearchFailed { backtracks: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    /// Problem-definition errors, with a location such as `constraints[1][0].powers`.
    #[error("problem definition error at {location}: {message}")]
    Spec { location: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite_vec(v: &nalgebra::DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn check_finite_mat(m: &nalgebra::DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
