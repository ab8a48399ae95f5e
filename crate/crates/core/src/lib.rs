//! Numerical laboratory for the nonlinear time-elapsed neuron population
//! model: steady states, autonomous, linear and delayed dynamics, the
//! activity map and its period-two orbits, distributed-birth and
//! two-population variants, and a particle oracle.

pub mod delay;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod extensions;
pub mod io;
pub mod grid;
mod kinetics;
pub mod mapdyn;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod steadystate;

pub use error::{Error, Result};
pub use grid::{Density, Grid};
pub use model::{RateModel, Threshold};
