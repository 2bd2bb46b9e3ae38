//! Calculus on time scales and solvers for delay dynamic equations.

pub mod calculus;
pub mod cli;
pub mod config;
pub mod expr;
pub mod gridfn;
pub mod solver;
pub mod timescale;
pub mod vop;

pub use gridfn::{GridFunction, GridValue};
pub use timescale::{Component, PointClass, Side, TimeScale, TimeScaleError};
