//! Numerical core for two-player feedback Stackelberg LQ games in which
//! neither player sees the other's past inputs.
//!
//! The pipeline is:
//!
//! 1. [`solver::solve_are`] iterates the coupled Riccati recursion to get the
//!    state-feedback Stackelberg gains `K1` (follower) and `K2` (leader).
//! 2. [`observer`] builds the coupled estimation-error matrix and searches for
//!    observer gains `L1`, `L2` that make it Schur stable.
//! 3. [`sim`] runs the plant, both observers and the observer-feedback law.
//! 4. [`cost`] evaluates infinite-horizon costs exactly through discrete
//!    Lyapunov equations and measures how fast the optimality gap vanishes.
//!
//! The crate is `no_std` and only needs `alloc`. Everything is dense `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod cost;
pub mod error;
pub mod game;
pub mod linalg;
pub mod matrix;
pub mod observer;
pub mod sim;
pub mod solver;
pub mod stability;

pub use error::{Error, LinalgError};
pub use game::{CostWeights, SystemModel};
pub use matrix::Matrix;
pub use stability::StabilityVerdict;
