//! Preparation of AKLT-type valence-bond states by measurement-assisted
//! fusion of small blocks, and the measurement-based processing that turns
//! them into graph states.

pub mod bell;
pub mod circuits;
pub mod error;
pub mod gates;
pub mod graphstate;
pub mod io;
pub mod lattice;
pub mod mps;
pub mod numeric;
pub mod percolation;
pub mod pauli;
pub mod protocol;
pub mod qstate;
pub mod rng;
pub mod spin;
pub mod unionfind;
pub mod vbs;

pub use error::{Error, Result};
