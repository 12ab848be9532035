//! Finite-volume simulator for a haptotaxis model of oncolytic virotherapy:
//! uninfected cells `u` moving up gradients of tissue `v`, infected cells
//! `w` and free virus `z`, on a rectangle with no-flux boundaries.

pub mod cli;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod timestepper;

pub use error::{Error, Result};
