use alloc::string::String;

/// Errors raised by the selection toolkit.
///
/// Solver outcomes such as "infeasible" are not errors; they are carried by
/// the outcome types of each module. These variants cover malformed input and
/// numerical breakdowns that prevent an answer from being computed at all.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("gain recovery failed: condition number {condition:.3e} exceeds cap {cap:.1e}")]
    GainRecovery { condition: f64, cap: f64 },

    #[error("enumeration over N = {n} exceeds cap {cap}; use the heuristic or the MI-SDP method")]
    EnumerationCap { n: usize, cap: usize },

    #[error("eigenvalue computation failed")]
    Eigen,
}

pub type Result<T> = core::result::Result<T, Error>;
