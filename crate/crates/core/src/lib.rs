//! Time-dependent Hartree-Fock-Bogoliubov dynamics of a Bose gas on a
//! periodic box, with monitoring of the conservation laws and positivity
//! properties of the flow.

// `!(x > 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod driver;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod meanfield;
pub mod observables;
pub mod oracle;
pub mod scenarios;
pub mod snapshot;
pub mod state;
pub mod verify;

pub use error::{HfbError, Result};
