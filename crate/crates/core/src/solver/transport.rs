//! Finite-volume transport of the cell density and the attractant.

use super::poisson::{conjugate_gradient, NeumannHelmholtz};
use super::System;
use crate::error::{Error, Result};
use crate::grid::{laplacian_into, Bc, Grid, ScalarField, VectorField};

/// Relative CG tolerance for the diffusion solves. The operators are
/// well conditioned, so this is cheap and keeps the discrete maximum
/// principle intact far below the diagnostics slack.
const DIFFUSION_TOL: f64 = 1e-14;

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Centered `∂c/∂y` at a cell with the even (Neumann) ghost.
#[inline]
fn dy_center(c: &ScalarField, i: usize, j: usize) -> f64 {
    let g = c.grid();
    let s = if j > 0 { c.at(i, j - 1) } else { c.at(i, j) };
    let n = if j + 1 < g.ny() { c.at(i, j + 1) } else { c.at(i, j) };
    (n - s) / (2.0 * g.hy())
}

#[inline]
fn dx_center(c: &ScalarField, i: usize, j: usize) -> f64 {
    let g = c.grid();
    let w = if i > 0 { c.at(i - 1, j) } else { c.at(i, j) };
    let e = if i + 1 < g.nx() { c.at(i + 1, j) } else { c.at(i, j) };
    (e - w) / (2.0 * g.hx())
}

/// Full gradient `∇c` at an interior vertical face: the normal part by a
/// compact difference, the tangential part averaged from the two cells.
pub(crate) fn grad_at_u_face(c: &ScalarField, i: usize, j: usize) -> [f64; 2] {
    let g = c.grid();
    [
        (c.at(i, j) - c.at(i - 1, j)) / g.hx(),
        0.5 * (dy_center(c, i - 1, j) + dy_center(c, i, j)),
    ]
}

pub(crate) fn grad_at_v_face(c: &ScalarField, i: usize, j: usize) -> [f64; 2] {
    let g = c.grid();
    [
        0.5 * (dx_center(c, i, j - 1) + dx_center(c, i, j)),
        (c.at(i, j) - c.at(i, j - 1)) / g.hy(),
    ]
}

impl System {
    /// `S_ε(x, n, c) ∇c` on every interior face; zero on the walls, where
    /// the spatial cutoff vanishes.
    pub fn chemotactic_velocity(&self, n: &ScalarField, c: &ScalarField) -> Result<VectorField> {
        let g = self.grid;
        let mut out = VectorField::zeros(g);
        if self.model.sensitivity.is_zero() {
            return Ok(out);
        }
        let sens = &self.model.sensitivity;
        for j in 0..g.ny() {
            for i in 1..g.nx() {
                let (x, y) = g.u_face_center(i, j);
                let s = sens.eval_eps(&self.cutoff, x, y, n.avg_u_face(i, j), c.avg_u_face(i, j))?;
                out.u_mut()[g.u_face(i, j)] = s.apply(grad_at_u_face(c, i, j))[0];
            }
        }
        for j in 1..g.ny() {
            for i in 0..g.nx() {
                let (x, y) = g.v_face_center(i, j);
                let s = sens.eval_eps(&self.cutoff, x, y, n.avg_v_face(i, j), c.avg_v_face(i, j))?;
                out.v_mut()[g.v_face(i, j)] = s.apply(grad_at_v_face(c, i, j))[1];
            }
        }
        Ok(out)
    }

    /// One step of `n_t + ∇·(u n + n S_ε ∇c) = Δn`.
    ///
    /// The advective and chemotactic fluxes share one upwinded MUSCL face
    /// value with a minmod limiter, applied explicitly; diffusion follows
    /// with the θ-scheme. Boundary fluxes are identically zero.
    pub fn transport_n(&self, n: &ScalarField, c: &ScalarField, u: &VectorField, dt: f64) -> Result<ScalarField> {
        let chem = self.chemotactic_velocity(n, c)?;
        let speed = u.zip_map(&chem, |a, b| a + b);
        let mut next = n.clone();
        if speed.max_abs() > 0.0 {
            advect_muscl(n, &speed, dt, next.values_mut());
            let min = next.min();
            if min < 0.0 {
                return Err(Error::TimestepTooLarge(format!(
                    "limited transport of n produced min {min:e} at dt = {dt:e}"
                )));
            }
        }
        let out = self.diffuse(&next, dt)?;
        let min = out.min();
        if min < 0.0 {
            return Err(Error::TimestepTooLarge(format!(
                "diffusion of n produced min {min:e} at dt = {dt:e}"
            )));
        }
        Ok(out)
    }

    /// One step of `c_t + u·∇c = Δc - n f(c)`: first-order upwind advection,
    /// θ-scheme diffusion, then the sink in the positivity-preserving form
    /// `c / (1 + dt n f(c)/c)`.
    pub fn transport_c(&self, c: &ScalarField, n: &ScalarField, u: &VectorField, dt: f64) -> Result<ScalarField> {
        let (cmin, cmax) = (c.min(), c.max());
        let mut next = c.clone();
        if u.max_abs() > 0.0 {
            advect_upwind(c, u, dt, next.values_mut());
        }
        let mut out = self.diffuse(&next, dt)?;
        let rate = self.model.consumption;
        for (cv, nv) in out.values_mut().iter_mut().zip(n.values()) {
            let r = rate.rate(*cv);
            if r != 0.0 {
                *cv /= 1.0 + dt * nv * r;
            }
        }
        let (omin, omax) = (out.min(), out.max());
        let slack = 1e-12 * cmax.abs().max(f64::MIN_POSITIVE);
        if omax > cmax + slack || omin < cmin.min(0.0) - slack {
            return Err(Error::TimestepTooLarge(format!(
                "attractant left [{cmin:e}, {cmax:e}]: got [{omin:e}, {omax:e}] at dt = {dt:e}"
            )));
        }
        // round-off below zero only
        for v in out.values_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(out)
    }

    /// θ-scheme for `w_t = Δw` with Neumann walls. The CG iteration starts
    /// from the right-hand side, which keeps `∫w` fixed to round-off.
    pub(crate) fn diffuse(&self, w: &ScalarField, dt: f64) -> Result<ScalarField> {
        let g = self.grid;
        let theta = self.ctl.theta;
        let mut rhs = w.values().to_vec();
        if theta < 1.0 {
            let mut lap = vec![0.0; g.n_cells()];
            laplacian_into(g, w.values(), &mut lap, Bc::Neumann);
            let k = (1.0 - theta) * dt;
            for (r, l) in rhs.iter_mut().zip(&lap) {
                *r += k * l;
            }
        }
        if theta == 0.0 {
            return Ok(ScalarField::from_values(g, rhs));
        }
        let op = NeumannHelmholtz {
            grid: g,
            alpha: 1.0,
            beta: theta * dt,
        };
        let mut x = rhs.clone();
        conjugate_gradient(&op, &rhs, &mut x, DIFFUSION_TOL, self.ctl.poisson_max_iter).or_else(|e| match e {
            // round-off floor of a well-conditioned solve
            Error::PoissonNotConverged { residual, .. } if residual < 1e-12 => Ok(Default::default()),
            e => Err(e),
        })?;
        Ok(ScalarField::from_values(g, x))
    }
}

/// Explicit flux-form update with MUSCL-minmod face values upwinded by the
/// sign of the face speed. Cells beyond the wall mirror the edge cell.
fn advect_muscl(q: &ScalarField, speed: &VectorField, dt: f64, out: &mut [f64]) {
    let g = q.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let qv = |i: isize, j: isize| -> f64 {
        let ii = i.clamp(0, nx as isize - 1) as usize;
        let jj = j.clamp(0, ny as isize - 1) as usize;
        q.at(ii, jj)
    };
    let flux = |a: f64, qll: f64, ql: f64, qr: f64, qrr: f64| -> f64 {
        if a > 0.0 {
            a * (ql + 0.5 * minmod(ql - qll, qr - ql))
        } else if a < 0.0 {
            a * (qr - 0.5 * minmod(qr - ql, qrr - qr))
        } else {
            0.0
        }
    };
    let mut fu = vec![0.0; g.n_u_faces()];
    let mut fv = vec![0.0; g.n_v_faces()];
    for j in 0..ny {
        for i in 1..nx {
            let a = speed.u()[g.u_face(i, j)];
            let (ii, jj) = (i as isize, j as isize);
            fu[g.u_face(i, j)] = flux(a, qv(ii - 2, jj), qv(ii - 1, jj), qv(ii, jj), qv(ii + 1, jj));
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let a = speed.v()[g.v_face(i, j)];
            let (ii, jj) = (i as isize, j as isize);
            fv[g.v_face(i, j)] = flux(a, qv(ii, jj - 2), qv(ii, jj - 1), qv(ii, jj), qv(ii, jj + 1));
        }
    }
    apply_flux_divergence(g, &fu, &fv, dt, out);
}

/// First-order upwind update; for a divergence-free speed the update
/// matrix is doubly stochastic under the CFL bound.
fn advect_upwind(q: &ScalarField, speed: &VectorField, dt: f64, out: &mut [f64]) {
    let g = q.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mut fu = vec![0.0; g.n_u_faces()];
    let mut fv = vec![0.0; g.n_v_faces()];
    for j in 0..ny {
        for i in 1..nx {
            let a = speed.u()[g.u_face(i, j)];
            fu[g.u_face(i, j)] = if a >= 0.0 { a * q.at(i - 1, j) } else { a * q.at(i, j) };
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let a = speed.v()[g.v_face(i, j)];
            fv[g.v_face(i, j)] = if a >= 0.0 { a * q.at(i, j - 1) } else { a * q.at(i, j) };
        }
    }
    apply_flux_divergence(g, &fu, &fv, dt, out);
}

fn apply_flux_divergence(g: Grid, fu: &[f64], fv: &[f64], dt: f64, out: &mut [f64]) {
    let (kx, ky) = (dt / g.hx(), dt / g.hy());
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            out[g.cell(i, j)] -=
                kx * (fu[g.u_face(i + 1, j)] - fu[g.u_face(i, j)]) + ky * (fv[g.v_face(i, j + 1)] - fv[g.v_face(i, j)]);
        }
    }
}
