//! Numerical verification engine for time-functional stationarity of
//! quantum and classical flows.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod functionals;
pub mod hilbert;
pub mod numeric;
pub mod phase;
pub mod systems;
pub mod variation;

pub use error::{Error, Result};
