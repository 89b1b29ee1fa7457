//! Time integration of the regularized chemotaxis-fluid system.
//!
//! Each step is a Lie splitting: fluid, then attractant, then cells.

mod navier_stokes;
pub mod poisson;
mod state;
mod transport;

pub use navier_stokes::{buoyancy, convection, curl_of_nodes, vector_laplacian, velocity_gradient_sq};
pub use state::{InitialData, State, StepControl};

use std::sync::Arc;

use crate::config::RunConfig;
use crate::diagnostics::FunctionalSeries;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{CutoffFamily, ModelParams, Potential};
use poisson::NeumannSpectral;

/// Discretized system for one regularization parameter.
#[derive(Debug, Clone)]
pub struct System {
    grid: Grid,
    model: ModelParams,
    cutoff: CutoffFamily,
    potential: Potential,
    ctl: StepControl,
    spectral: Arc<NeumannSpectral>,
}

impl System {
    pub fn new(grid: Grid, model: ModelParams, eps: f64, ctl: StepControl) -> Result<Self> {
        Ok(Self {
            grid,
            model,
            cutoff: CutoffFamily::new(eps)?,
            potential: Potential::new(model.potential, grid),
            ctl,
            spectral: Arc::new(NeumannSpectral::new(grid)),
        })
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Self::new(cfg.grid(), cfg.model(), cfg.eps, cfg.step_control())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn model(&self) -> &ModelParams {
        &self.model
    }
    pub fn cutoff(&self) -> &CutoffFamily {
        &self.cutoff
    }
    pub fn potential(&self) -> &Potential {
        &self.potential
    }
    pub fn control(&self) -> &StepControl {
        &self.ctl
    }

    /// `cfl · min{h/max|u|, h²/(4(1-θ)), h/max|S_ε∇c|}`, capped by the
    /// configured step. A constraint whose speed vanishes (or, for θ = 1,
    /// the diffusion bound) drops out.
    pub fn cfl_dt(&self, state: &State) -> Result<f64> {
        let h = self.grid.h();
        let cfl = self.ctl.cfl;
        let mut dt = f64::INFINITY;
        let umax = state.u.max_abs();
        if umax > 0.0 {
            dt = dt.min(cfl * h / umax);
        }
        if self.ctl.theta < 1.0 {
            dt = dt.min(cfl * h * h / (4.0 * (1.0 - self.ctl.theta)));
        }
        let chem = self.chemotactic_velocity(&state.n, &state.c)?.max_abs();
        if chem > 0.0 {
            dt = dt.min(cfl * h / chem);
        }
        Ok(dt.min(self.ctl.dt))
    }

    /// One splitting step of length `dt`.
    pub fn advance(&self, state: &State, dt: f64) -> Result<State> {
        let (u, p) = self.ns_step(&state.u, &state.n, &state.p, dt)?;
        let c = self.transport_c(&state.c, &state.n, &u, dt)?;
        let n = self.transport_n(&state.n, &c, &u, dt)?;
        Ok(State {
            t: state.t + dt,
            n,
            c,
            u,
            p,
        })
    }
}

/// Output of [`run`]: snapshots at the snapshot cadence (plus the final
/// time), the functional series at the diagnostics cadence, and the error
/// that stopped the integration early, if any.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: RunConfig,
    pub snapshots: Vec<State>,
    pub series: FunctionalSeries,
    pub steps: usize,
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn grid(&self) -> Grid {
        self.config.grid()
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn initial(&self) -> &State {
        &self.snapshots[0]
    }

    pub fn end_time(&self) -> f64 {
        self.snapshots.last().map_or(0.0, |s| s.t)
    }
}

/// Output instants `k · interval` in `(0, t_end)` followed by `t_end`.
fn schedule(interval: f64, t_end: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 1u64;
    loop {
        let t = k as f64 * interval;
        if t >= t_end * (1.0 - 1e-12) {
            break;
        }
        out.push(t);
        k += 1;
    }
    if t_end > 0.0 {
        out.push(t_end);
    }
    out
}

/// How often a rejected step is retried at half the size.
const MAX_HALVINGS: usize = 8;

/// Integrates from the configured initial data to `t_end`.
///
/// Steps are shortened to land exactly on every output time. A step that
/// fails its positivity or max-principle check is retried with half the
/// step; any remaining failure ends the run and is recorded in the
/// trajectory rather than returned, so the partial output stays usable.
pub fn run(cfg: &RunConfig) -> Result<Trajectory> {
    let sys = System::from_config(cfg)?;
    let mut state = cfg.initial.state(sys.grid());
    let mut series = FunctionalSeries::new(&state);
    let mut snapshots = vec![state.clone()];
    let diag_times = schedule(cfg.diag_interval, cfg.t_end);
    let snap_times = schedule(cfg.snapshot_interval, cfg.t_end);
    let (mut di, mut si) = (0, 0);
    let mut steps = 0;
    let mut failure = None;

    while di < diag_times.len() || si < snap_times.len() {
        let target = match (diag_times.get(di), snap_times.get(si)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        let remaining = target - state.t;
        let mut dt = match sys.cfl_dt(&state) {
            Ok(dt) => dt,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let lands = dt >= remaining;
        if lands {
            dt = remaining;
        } else if 2.0 * dt > remaining {
            // split the remainder evenly instead of leaving a sliver
            dt = 0.5 * remaining;
        }
        let mut attempt = sys.advance(&state, dt);
        let mut halvings = 0;
        while let Err(Error::TimestepTooLarge(_)) = attempt {
            if halvings == MAX_HALVINGS {
                break;
            }
            halvings += 1;
            dt *= 0.5;
            attempt = sys.advance(&state, dt);
        }
        match attempt {
            Ok(next) => state = next,
            Err(e) => {
                failure = Some(format!("t = {:e}: {e}", state.t));
                break;
            }
        }
        steps += 1;
        if lands && halvings == 0 {
            state.t = target;
        }
        if diag_times.get(di).is_some_and(|&t| t == state.t) {
            series.push(&state);
            di += 1;
        }
        if snap_times.get(si).is_some_and(|&t| t == state.t) {
            snapshots.push(state.clone());
            si += 1;
        }
    }
    Ok(Trajectory {
        config: cfg.clone(),
        snapshots,
        series,
        steps,
        failure,
    })
}
