//! File formats, orchestration and the command-line front end for
//! `stackelberg-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod config;
pub mod random;
pub mod report;
pub mod reproduce;
pub mod run;
pub mod verify;

pub use stackelberg_core as core;
