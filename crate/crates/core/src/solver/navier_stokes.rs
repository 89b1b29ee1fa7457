//! Projection step for the incompressible momentum equation with buoyancy.

use super::poisson::{
    conjugate_gradient, preconditioned_cg, velocity_laplacian_into, Component, NeumannHelmholtz,
    SpectralPreconditioner, VelocityHelmholtz,
};
use super::System;
use crate::error::Result;
use crate::grid::{divergence, grad_neumann, Grid, ScalarField, VectorField};

/// Centered advective form `(u·∇)u` on interior faces; zero on walls.
pub fn convection(u: &VectorField) -> VectorField {
    let g = u.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let uu = u.u();
    let vv = u.v();
    let mut out = VectorField::zeros(g);
    for j in 0..ny {
        for i in 1..nx {
            let k = g.u_face(i, j);
            let c = uu[k];
            let s = if j > 0 { uu[g.u_face(i, j - 1)] } else { -c };
            let n = if j + 1 < ny { uu[g.u_face(i, j + 1)] } else { -c };
            let vbar = 0.25
                * (vv[g.v_face(i - 1, j)] + vv[g.v_face(i, j)] + vv[g.v_face(i - 1, j + 1)] + vv[g.v_face(i, j + 1)]);
            out.u_mut()[k] = c * (uu[k + 1] - uu[k - 1]) / (2.0 * hx) + vbar * (n - s) / (2.0 * hy);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = g.v_face(i, j);
            let c = vv[k];
            let w = if i > 0 { vv[k - 1] } else { -c };
            let e = if i + 1 < nx { vv[k + 1] } else { -c };
            let ubar = 0.25
                * (uu[g.u_face(i, j - 1)] + uu[g.u_face(i + 1, j - 1)] + uu[g.u_face(i, j)] + uu[g.u_face(i + 1, j)]);
            out.v_mut()[k] =
                ubar * (e - w) / (2.0 * hx) + c * (vv[g.v_face(i, j + 1)] - vv[g.v_face(i, j - 1)]) / (2.0 * hy);
        }
    }
    out
}

/// Dirichlet vector Laplacian of a no-slip field.
pub fn vector_laplacian(u: &VectorField) -> VectorField {
    let g = u.grid();
    let mut lu = vec![0.0; g.n_u_faces()];
    let mut lv = vec![0.0; g.n_v_faces()];
    velocity_laplacian_into(g, Component::U, u.u(), &mut lu);
    velocity_laplacian_into(g, Component::V, u.v(), &mut lv);
    VectorField::from_components(g, lu, lv)
}

/// `∫|∇u|²` as `-<u, Δ_h u>`, which counts every face difference once
/// and the wall differences against the odd ghost.
pub fn velocity_gradient_sq(u: &VectorField) -> f64 {
    -u.dot(&vector_laplacian(u))
}

/// Buoyancy `n ∇φ` on interior faces with face-averaged `n`.
pub fn buoyancy(n: &ScalarField, grad_phi: &VectorField) -> VectorField {
    let g = n.grid();
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny() {
        for i in 1..g.nx() {
            let k = g.u_face(i, j);
            out.u_mut()[k] = n.avg_u_face(i, j) * grad_phi.u()[k];
        }
    }
    for j in 1..g.ny() {
        for i in 0..g.nx() {
            let k = g.v_face(i, j);
            out.v_mut()[k] = n.avg_v_face(i, j) * grad_phi.v()[k];
        }
    }
    out
}

impl System {
    /// One projection step: θ-scheme viscous predictor with explicit
    /// convection, buoyancy added after the viscous solve, then projection
    /// `u = u* + dt ∇P` with `-Δ_N P = ∇·u*/dt` (mean-zero `P`).
    ///
    /// `p_guess` warm-starts the pressure iteration.
    pub fn ns_step(
        &self,
        u: &VectorField,
        n: &ScalarField,
        p_guess: &ScalarField,
        dt: f64,
    ) -> Result<(VectorField, ScalarField)> {
        let g = self.grid;
        let theta = self.ctl.theta;
        let mut ustar = if u.max_abs() == 0.0 {
            VectorField::zeros(g)
        } else {
            self.viscous_predictor(u, dt, theta)?
        };
        let force = buoyancy(n, self.potential.grad());
        for (a, f) in ustar.u_mut().iter_mut().zip(force.u()) {
            *a += dt * f;
        }
        for (a, f) in ustar.v_mut().iter_mut().zip(force.v()) {
            *a += dt * f;
        }
        ustar.zero_boundary();

        let rhs: Vec<f64> = divergence(&ustar).values().iter().map(|d| d / dt).collect();
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut p = p_guess.values().to_vec();
        if bnorm == 0.0 {
            p.iter_mut().for_each(|v| *v = 0.0);
        } else {
            // the leftover divergence is dt·(A p - b); ask for it below poisson_tol in max norm
            let tol = self.ctl.poisson_tol.min(0.5 * self.ctl.poisson_tol / (dt * bnorm));
            let op = NeumannHelmholtz {
                grid: g,
                alpha: 0.0,
                beta: 1.0,
            };
            let pre = SpectralPreconditioner {
                solver: &self.spectral,
                alpha: 0.0,
                beta: 1.0,
            };
            preconditioned_cg(&op, &pre, &rhs, &mut p, tol, self.ctl.poisson_max_iter)?;
        }
        let p = ScalarField::from_values(g, p);
        let gp = grad_neumann(&p);
        let out = ustar.zip_map(&gp, |a, b| a + dt * b).with_no_slip();
        Ok((out, p))
    }

    fn viscous_predictor(&self, u: &VectorField, dt: f64, theta: f64) -> Result<VectorField> {
        let g = self.grid;
        let conv = convection(u);
        let lap = if theta < 1.0 { Some(vector_laplacian(u)) } else { None };
        let solve = |comp: Component, cur: &[f64], conv: &[f64], lap: Option<&[f64]>| -> Result<Vec<f64>> {
            let mut rhs: Vec<f64> = cur.iter().zip(conv).map(|(a, c)| a - dt * c).collect();
            if let Some(l) = lap {
                for (r, lv) in rhs.iter_mut().zip(l) {
                    *r += (1.0 - theta) * dt * lv;
                }
            }
            for (k, r) in rhs.iter_mut().enumerate() {
                if super::poisson::is_wall_face(g, comp, k) {
                    *r = 0.0;
                }
            }
            if theta == 0.0 {
                return Ok(rhs);
            }
            let op = VelocityHelmholtz {
                grid: g,
                component: comp,
                beta: theta * dt,
            };
            let mut x = rhs.clone();
            conjugate_gradient(&op, &rhs, &mut x, 1e-13, self.ctl.poisson_max_iter)?;
            Ok(x)
        };
        let nu = solve(Component::U, u.u(), conv.u(), lap.as_ref().map(|l| l.u()))?;
        let nv = solve(Component::V, u.v(), conv.v(), lap.as_ref().map(|l| l.v()))?;
        Ok(VectorField::from_components(g, nu, nv))
    }
}

/// Discretely divergence-free no-slip field from a node-sampled stream
/// function: `u = ∂ψ/∂y`, `v = -∂ψ/∂x`. Nodes are indexed `(i, j)` with
/// `i in 0..=nx`, `j in 0..=ny`.
pub fn curl_of_nodes(g: Grid, psi: impl Fn(f64, f64) -> f64) -> VectorField {
    let (nx, ny) = (g.nx(), g.ny());
    let nodes: Vec<f64> = (0..=ny)
        .flat_map(|j| (0..=nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            let (x, y) = g.node(i, j);
            psi(x, y)
        })
        .collect();
    let at = |i: usize, j: usize| nodes[j * (nx + 1) + i];
    let mut out = VectorField::zeros(g);
    for j in 0..ny {
        for i in 0..=nx {
            out.u_mut()[g.u_face(i, j)] = (at(i, j + 1) - at(i, j)) / g.hy();
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            out.v_mut()[g.v_face(i, j)] = -(at(i + 1, j) - at(i, j)) / g.hx();
        }
    }
    if out.max_boundary_abs() == 0.0 {
        out = out.with_no_slip();
    }
    out
}
