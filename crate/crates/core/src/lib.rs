//! Simulator and verification suite for a two-dimensional
//! chemotaxis-Navier-Stokes system with tensor-valued sensitivity.
//!
//! Cells (`n`) follow an attractant (`c`) they consume, both carried by an
//! incompressible fluid (`u`) that is driven by buoyancy `n ∇φ`. The
//! sensitivity is regularized by cutoffs depending on `eps`; the
//! verification modules check the a priori bounds the regularized system
//! satisfies uniformly in `eps`.

pub mod config;
pub mod diagnostics;
pub mod epsilon;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod solver;
pub mod trudinger_moser;
pub mod weakform;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use grid::{Grid, ScalarField, VectorField};
pub use solver::{run, State, System, Trajectory};
