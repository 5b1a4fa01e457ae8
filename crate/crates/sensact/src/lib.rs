//! File formats, method runners, verification and benchmarking on top of
//! [`sensact_core`]. The `sensact` binary is a thin layer over this crate.
//!
//! Exit codes used by the binary: 0 success, 2 infeasible (or a failed
//! verification), 3 input error, 4 solver inconclusive.

pub mod bench;
pub mod candidates;
pub mod constraint;
pub mod io;
pub mod methods;
pub mod result;
pub mod system;
pub mod verify;

pub use sensact_core;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Input(String),

    #[error("io: {0}")]
    Io(String),

    #[error("refusing to overwrite {0} (use --force)")]
    Exists(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Core(#[from] sensact_core::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        EXIT_INPUT
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
