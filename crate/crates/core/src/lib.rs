#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons also reject NaN

//! Passive control architecture for first-order articulated manikins.

pub mod chain;
pub mod constraints;
pub mod control;
pub mod dynamics;
mod error;
pub mod guides;
pub mod linalg;
pub mod passivity;
mod scalar;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` instantiations used by the simulator and the file formats.
pub type Chain = chain::KinematicChain<f64>;
pub type State = chain::SimState<f64>;
