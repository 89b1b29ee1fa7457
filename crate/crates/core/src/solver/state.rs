use std::f64::consts::PI;

use super::navier_stokes::curl_of_nodes;
use crate::grid::{divergence, Grid, ScalarField, VectorField};

/// Snapshot of the unknowns at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub n: ScalarField,
    pub c: ScalarField,
    pub u: VectorField,
    /// Pressure multiplier, mean zero.
    pub p: ScalarField,
}

impl State {
    pub fn grid(&self) -> Grid {
        self.n.grid()
    }

    pub fn max_divergence(&self) -> f64 {
        divergence(&self.u).values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Time-step limits and linear-solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// Upper bound on the step.
    pub dt: f64,
    /// Courant number, at most 0.5.
    pub cfl: f64,
    /// Implicit fraction of the diffusion operators.
    pub theta: f64,
    pub poisson_tol: f64,
    pub poisson_max_iter: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            cfl: 0.5,
            theta: 0.5,
            poisson_tol: 1e-11,
            poisson_max_iter: 20_000,
        }
    }
}

/// Closed-form initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialData {
    /// `n0 = 1 + cos(πx)cos(πy)/2`, `c0 = (1+y)/4`, `u0 = 0`.
    #[default]
    Default,
    /// Same `n0`, `c0 = (1 + cos(πx))/2`, `u0 = 0`; with zero sensitivity,
    /// consumption and potential both components solve the heat equation.
    Heat,
    /// `n0 ≡ 1`, `c0 ≡ 0`, `u0 = 0`: a stationary state.
    Uniform,
    /// `n0 ≡ 1`, `c0 ≡ 0` and a single vortex `u0 = curl(sin²(πx) sin²(πy)/4)`
    /// that decays under viscosity.
    Vortex,
}

impl InitialData {
    pub fn n0(&self, x: f64, y: f64) -> f64 {
        match self {
            InitialData::Default | InitialData::Heat => 1.0 + 0.5 * (PI * x).cos() * (PI * y).cos(),
            InitialData::Uniform | InitialData::Vortex => 1.0,
        }
    }

    pub fn c0(&self, x: f64, y: f64) -> f64 {
        match self {
            InitialData::Default => (0.5 * (1.0 + y) / 2.0).clamp(0.0, 1.0),
            InitialData::Heat => 0.5 * (1.0 + (PI * x).cos()),
            InitialData::Uniform | InitialData::Vortex => 0.0,
        }
    }

    pub fn state(&self, grid: Grid) -> State {
        State {
            t: 0.0,
            n: ScalarField::from_fn(grid, |x, y| self.n0(x, y)),
            c: ScalarField::from_fn(grid, |x, y| self.c0(x, y)),
            u: match self {
                InitialData::Vortex => curl_of_nodes(grid, vortex_stream),
                _ => VectorField::zeros_no_slip(grid),
            },
            p: ScalarField::zeros(grid),
        }
    }
}

pub fn vortex_stream(x: f64, y: f64) -> f64 {
    0.25 * ((PI * x).sin() * (PI * y).sin()).powi(2)
}
