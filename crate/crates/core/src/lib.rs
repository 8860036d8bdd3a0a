//! Finite-element simulation of the forced 2D viscous Burgers equation
//! stabilized around a nonconstant steady state by a nonlinear Neumann
//! boundary feedback law, with convergence and decay diagnostics.

pub mod config;
pub mod control;
pub mod error;
pub mod fem;
pub mod integrator;
pub mod mesh;
pub mod sparse;
pub mod steady;
pub mod study;

pub use error::{Error, Result};
