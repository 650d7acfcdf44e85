//! Normalized ground and excited standing waves of the energy-critical
//! half-wave equation on periodic pseudospectral grids.

pub mod error;
pub mod exec;
pub mod constants;
pub mod functionals;
pub mod grid;
pub mod solvers;
pub mod bubbles;
pub mod experiments;
pub mod io;

pub use error::{Error, Result};
pub use grid::{make_grid, Field, Grid};
