//! Simultaneous sensor and actuator selection for static output feedback
//! stabilization of linear dynamic networks.
//!
//! The crate is `no_std` compatible (it needs `alloc`). The default `std`
//! feature only adds wall-clock timing to solver statistics.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod netmodel;
pub mod sdp;
pub mod sof;
pub mod combsearch;
pub mod heuristic;
pub mod misdp;

pub use error::{Error, Result};
