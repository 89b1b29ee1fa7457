//! Conjugate-gradient solves for the pressure Poisson problem and the
//! semi-implicit diffusion steps.

use crate::error::{Error, Result};
use crate::grid::{laplacian_into, Bc, Grid};

/// Symmetric positive (semi-)definite operator on a flat array.
pub trait SymmetricOperator {
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Removes the null-space component; identity for definite operators.
    fn project(&self, _v: &mut [f64]) {}
}

/// `alpha I - beta L` for the cell-centered Neumann Laplacian `L`.
/// `alpha = 0, beta = 1` is the (singular) pressure operator `-L`.
#[derive(Debug, Clone, Copy)]
pub struct NeumannHelmholtz {
    pub grid: Grid,
    pub alpha: f64,
    pub beta: f64,
}

impl SymmetricOperator for NeumannHelmholtz {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        laplacian_into(self.grid, x, y, Bc::Neumann);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = self.alpha * xi - self.beta * *yi;
        }
    }

    fn project(&self, v: &mut [f64]) {
        if self.alpha == 0.0 {
            remove_mean(v);
        }
    }
}

/// Velocity component selector on the staggered grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    U,
    V,
}

/// `I - beta Δ` on one velocity component with homogeneous Dirichlet
/// walls. Wall-normal faces are pinned to zero; tangential walls use odd
/// ghost reflection.
#[derive(Debug, Clone, Copy)]
pub struct VelocityHelmholtz {
    pub grid: Grid,
    pub component: Component,
    pub beta: f64,
}

impl SymmetricOperator for VelocityHelmholtz {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        velocity_laplacian_into(self.grid, self.component, x, y);
        for (k, (yi, xi)) in y.iter_mut().zip(x).enumerate() {
            *yi = if is_wall_face(self.grid, self.component, k) {
                *xi
            } else {
                xi - self.beta * *yi
            };
        }
    }
}

pub(crate) fn is_wall_face(g: Grid, comp: Component, k: usize) -> bool {
    match comp {
        Component::U => {
            let i = k % (g.nx() + 1);
            i == 0 || i == g.nx()
        }
        Component::V => {
            let j = k / g.nx();
            j == 0 || j == g.ny()
        }
    }
}

/// Dirichlet Laplacian of one face component; wall-normal faces get 0.
pub(crate) fn velocity_laplacian_into(g: Grid, comp: Component, x: &[f64], y: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    match comp {
        Component::U => {
            let stride = nx + 1;
            for j in 0..ny {
                y[j * stride] = 0.0;
                y[j * stride + nx] = 0.0;
                for i in 1..nx {
                    let k = j * stride + i;
                    let c = x[k];
                    let s = if j > 0 { x[k - stride] } else { -c };
                    let n = if j + 1 < ny { x[k + stride] } else { -c };
                    y[k] = (x[k - 1] - 2.0 * c + x[k + 1]) * ihx2 + (s - 2.0 * c + n) * ihy2;
                }
            }
        }
        Component::V => {
            for i in 0..nx {
                y[i] = 0.0;
                y[ny * nx + i] = 0.0;
            }
            for j in 1..ny {
                for i in 0..nx {
                    let k = j * nx + i;
                    let c = x[k];
                    let w = if i > 0 { x[k - 1] } else { -c };
                    let e = if i + 1 < nx { x[k + 1] } else { -c };
                    y[k] = (w - 2.0 * c + e) * ihx2 + (x[k - nx] - 2.0 * c + x[k + nx]) * ihy2;
                }
            }
        }
    }
}

pub(crate) fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Approximate inverse used by [`preconditioned_cg`].
pub trait Preconditioner {
    fn precondition(&self, r: &[f64], z: &mut [f64]);
}

/// `z = r`.
pub struct NoPreconditioner;

impl Preconditioner for NoPreconditioner {
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Orthonormal eigenbasis of the 1D Neumann second difference on `n`
/// cells: `cos(πk(j+½)/n)` with eigenvalue `(4/h²) sin²(πk/2n)` of `-D²`.
#[derive(Debug, Clone)]
struct CosineBasis {
    n: usize,
    /// row `k` holds eigenvector `k`
    vectors: Vec<f64>,
    eigen: Vec<f64>,
}

impl CosineBasis {
    fn new(n: usize, h: f64) -> Self {
        use std::f64::consts::PI;
        let mut vectors = vec![0.0; n * n];
        let mut eigen = vec![0.0; n];
        for k in 0..n {
            let row = &mut vectors[k * n..(k + 1) * n];
            for (j, v) in row.iter_mut().enumerate() {
                *v = (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos();
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter_mut().for_each(|v| *v /= norm);
            let s = (PI * k as f64 / (2.0 * n as f64)).sin();
            eigen[k] = 4.0 * s * s / (h * h);
        }
        Self { n, vectors, eigen }
    }
}

/// Exact solver for `alpha I - beta L` with the Neumann Laplacian `L`,
/// by separation of variables in the cosine eigenbasis. The null mode is
/// dropped when `alpha = 0`.
#[derive(Debug, Clone)]
pub struct NeumannSpectral {
    grid: Grid,
    bx: CosineBasis,
    by: CosineBasis,
}

impl NeumannSpectral {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            bx: CosineBasis::new(grid.nx(), grid.hx()),
            by: CosineBasis::new(grid.ny(), grid.hy()),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// `z = (alpha I - beta L)^+ r`.
    pub fn solve(&self, alpha: f64, beta: f64, r: &[f64], z: &mut [f64]) {
        let (nx, ny) = (self.bx.n, self.by.n);
        let (bx, by) = (&self.bx.vectors, &self.by.vectors);
        // t[j][kx] = sum_i r[j][i] bx[kx][i]
        let mut t = vec![0.0; nx * ny];
        for j in 0..ny {
            let rrow = &r[j * nx..(j + 1) * nx];
            for kx in 0..nx {
                let b = &bx[kx * nx..(kx + 1) * nx];
                t[j * nx + kx] = rrow.iter().zip(b).map(|(a, b)| a * b).sum();
            }
        }
        // hat[ky][kx] = sum_j by[ky][j] t[j][kx], scaled by the inverse eigenvalue
        let mut hat = vec![0.0; nx * ny];
        for ky in 0..ny {
            let brow = &by[ky * ny..(ky + 1) * ny];
            let out = &mut hat[ky * nx..(ky + 1) * nx];
            for (j, &w) in brow.iter().enumerate() {
                let trow = &t[j * nx..(j + 1) * nx];
                for (o, tv) in out.iter_mut().zip(trow) {
                    *o += w * tv;
                }
            }
            for (kx, o) in out.iter_mut().enumerate() {
                let d = alpha + beta * (self.bx.eigen[kx] + self.by.eigen[ky]);
                *o = if d == 0.0 { 0.0 } else { *o / d };
            }
        }
        // back: t[j][kx] = sum_ky by[ky][j] hat[ky][kx]
        t.iter_mut().for_each(|v| *v = 0.0);
        for ky in 0..ny {
            let brow = &by[ky * ny..(ky + 1) * ny];
            let hrow = &hat[ky * nx..(ky + 1) * nx];
            for (j, &w) in brow.iter().enumerate() {
                let trow = &mut t[j * nx..(j + 1) * nx];
                for (tv, h) in trow.iter_mut().zip(hrow) {
                    *tv += w * h;
                }
            }
        }
        // z[j][i] = sum_kx t[j][kx] bx[kx][i]
        for j in 0..ny {
            let zrow = &mut z[j * nx..(j + 1) * nx];
            zrow.iter_mut().for_each(|v| *v = 0.0);
            let trow = &t[j * nx..(j + 1) * nx];
            for (kx, &w) in trow.iter().enumerate() {
                let b = &bx[kx * nx..(kx + 1) * nx];
                for (zv, bv) in zrow.iter_mut().zip(b) {
                    *zv += w * bv;
                }
            }
        }
    }
}

/// Preconditioner pairing a [`NeumannSpectral`] solver with the
/// coefficients of a [`NeumannHelmholtz`] operator.
pub struct SpectralPreconditioner<'a> {
    pub solver: &'a NeumannSpectral,
    pub alpha: f64,
    pub beta: f64,
}

impl Preconditioner for SpectralPreconditioner<'_> {
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        self.solver.solve(self.alpha, self.beta, r, z);
    }
}

/// Unpreconditioned CG on `A x = b`, starting from the contents of `x`.
///
/// Stops once `||b - A x|| <= tol ||b||`. Iterates stay in
/// `x0 + K(A, r0)`, so any linear invariant the operator preserves (such
/// as the total sum for the Neumann Helmholtz operator with `alpha = 1`)
/// is preserved to round-off regardless of `tol`.
pub fn conjugate_gradient<A: SymmetricOperator>(
    op: &A,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    preconditioned_cg(op, &NoPreconditioner, b, x, tol, max_iter)
}

/// Preconditioned CG; same stopping rule and warm start as
/// [`conjugate_gradient`]. Search directions are projected like residuals.
pub fn preconditioned_cg<A: SymmetricOperator, M: Preconditioner>(
    op: &A,
    pre: &M,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    debug_assert_eq!(x.len(), n);
    let mut rhs = b.to_vec();
    op.project(&mut rhs);
    op.project(x);
    let bnorm = dot(&rhs, &rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut ap = vec![0.0; n];
    op.apply(x, &mut ap);
    let mut r: Vec<f64> = rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
    op.project(&mut r);
    let mut z = vec![0.0; n];
    pre.precondition(&r, &mut z);
    op.project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rnorm = dot(&r, &r).sqrt();
    let target = tol * bnorm;
    for it in 0..max_iter {
        if rnorm <= target {
            return Ok(CgOutcome {
                iterations: it,
                relative_residual: rnorm / bnorm,
            });
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || rz <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        op.project(&mut r);
        rnorm = dot(&r, &r).sqrt();
        pre.precondition(&r, &mut z);
        op.project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    let rel = rnorm / bnorm;
    if rel <= tol {
        Ok(CgOutcome {
            iterations: max_iter,
            relative_residual: rel,
        })
    } else {
        Err(Error::PoissonNotConverged {
            residual: rel,
            iterations: max_iter,
        })
    }
}
