//! Staggered (MAC) discretization of the unit square.
//!
//! Scalars live at cell centers, the horizontal velocity component on
//! vertical faces and the vertical component on horizontal faces. Cell
//! `(i, j)` has center `((i + 1/2) hx, (j + 1/2) hy)` and is stored at
//! `j * nx + i` (row-major, rows along `y`).

use std::ops::{Add, Mul, Sub};

/// Cell-centered grid on `(0,1)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub const MIN_CELLS: usize = 4;

    /// Panics if either count is below [`Grid::MIN_CELLS`].
    pub fn new(nx: usize, ny: usize) -> Self {
        assert!(
            nx >= Self::MIN_CELLS && ny >= Self::MIN_CELLS,
            "grid needs at least {} cells per direction, got {nx}x{ny}",
            Self::MIN_CELLS
        );
        Self {
            nx,
            ny,
            hx: 1.0 / nx as f64,
            hy: 1.0 / ny as f64,
        }
    }

    pub fn square(n: usize) -> Self {
        Self::new(n, n)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    /// Smallest cell width.
    pub fn h(&self) -> f64 {
        self.hx.min(self.hy)
    }
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }
    /// Number of vertical faces carrying the first velocity component.
    pub fn n_u_faces(&self) -> usize {
        (self.nx + 1) * self.ny
    }
    /// Number of horizontal faces carrying the second velocity component.
    pub fn n_v_faces(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn u_face(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    #[inline]
    pub fn v_face(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }
    pub fn u_face_center(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx, (j as f64 + 0.5) * self.hy)
    }
    pub fn v_face_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, j as f64 * self.hy)
    }
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx, j as f64 * self.hy)
    }

    fn check_same(&self, other: &Grid) {
        assert_eq!(self, other, "fields live on different grids");
    }
}

/// Distance to the boundary of the unit square.
pub fn boundary_distance(x: f64, y: f64) -> f64 {
    x.min(1.0 - x).min(y).min(1.0 - y).max(0.0)
}

/// Values at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_cells()],
        }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    /// Panics if the length does not match the grid.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n_cells(), "scalar field length");
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.cell(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        self.grid.check_same(&other.grid);
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Value on the face between two horizontally adjacent cells, by
    /// arithmetic averaging (`i` indexes the face, `1 <= i < nx`).
    #[inline]
    pub fn avg_u_face(&self, i: usize, j: usize) -> f64 {
        0.5 * (self.at(i - 1, j) + self.at(i, j))
    }
    #[inline]
    pub fn avg_v_face(&self, i: usize, j: usize) -> f64 {
        0.5 * (self.at(i, j - 1) + self.at(i, j))
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.map(|a| a * rhs)
    }
}

/// Face-centered vector field on the staggered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    u: Vec<f64>,
    v: Vec<f64>,
    no_slip: bool,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            u: vec![0.0; grid.n_u_faces()],
            v: vec![0.0; grid.n_v_faces()],
            no_slip: false,
        }
    }

    /// Zero field tagged no-slip.
    pub fn zeros_no_slip(grid: Grid) -> Self {
        Self {
            no_slip: true,
            ..Self::zeros(grid)
        }
    }

    /// Samples each component at its own face centers.
    pub fn from_fn(grid: Grid, fu: impl Fn(f64, f64) -> f64, fv: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                let (x, y) = grid.u_face_center(i, j);
                out.u[grid.u_face(i, j)] = fu(x, y);
            }
        }
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.v_face_center(i, j);
                out.v[grid.v_face(i, j)] = fv(x, y);
            }
        }
        out
    }

    pub fn from_components(grid: Grid, u: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(u.len(), grid.n_u_faces(), "u component length");
        assert_eq!(v.len(), grid.n_v_faces(), "v component length");
        Self {
            grid,
            u,
            v,
            no_slip: false,
        }
    }

    /// Tags the field no-slip and zeroes every boundary face.
    pub fn with_no_slip(mut self) -> Self {
        self.no_slip = true;
        self.zero_boundary();
        self
    }

    pub fn is_no_slip(&self) -> bool {
        self.no_slip
    }

    /// Zeroes all boundary faces: the normal component on the walls and
    /// nothing else, since tangential components are not stored on walls.
    pub fn zero_boundary(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            self.u[g.u_face(0, j)] = 0.0;
            self.u[g.u_face(g.nx, j)] = 0.0;
        }
        for i in 0..g.nx {
            self.v[g.v_face(i, 0)] = 0.0;
            self.v[g.v_face(i, g.ny)] = 0.0;
        }
    }

    /// Largest absolute value on boundary faces.
    pub fn max_boundary_abs(&self) -> f64 {
        let g = self.grid;
        let mut m = 0.0f64;
        for j in 0..g.ny {
            m = m.max(self.u[g.u_face(0, j)].abs());
            m = m.max(self.u[g.u_face(g.nx, j)].abs());
        }
        for i in 0..g.nx {
            m = m.max(self.v[g.v_face(i, 0)].abs());
            m = m.max(self.v[g.v_face(i, g.ny)].abs());
        }
        m
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn u(&self) -> &[f64] {
        &self.u
    }
    pub fn v(&self) -> &[f64] {
        &self.v
    }
    pub fn u_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }
    pub fn v_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Face quadrature of the pointwise product, `∫ a·b`.
    pub fn dot(&self, other: &VectorField) -> f64 {
        self.grid.check_same(&other.grid);
        let su: f64 = self.u.iter().zip(&other.u).map(|(a, b)| a * b).sum();
        let sv: f64 = self.v.iter().zip(&other.v).map(|(a, b)| a * b).sum();
        self.grid.cell_area() * (su + sv)
    }

    /// `∫ |v|^2` by face quadrature.
    pub fn l2_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn zip_map(&self, other: &VectorField, f: impl Fn(f64, f64) -> f64) -> Self {
        self.grid.check_same(&other.grid);
        Self {
            grid: self.grid,
            u: self.u.iter().zip(&other.u).map(|(&a, &b)| f(a, b)).collect(),
            v: self.v.iter().zip(&other.v).map(|(&a, &b)| f(a, b)).collect(),
            no_slip: self.no_slip && other.no_slip,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            u: self.u.iter().map(|a| a * s).collect(),
            v: self.v.iter().map(|a| a * s).collect(),
            no_slip: self.no_slip,
        }
    }
}

/// Boundary treatment for [`laplacian`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bc {
    /// Homogeneous Neumann via even ghost reflection.
    Neumann,
    /// Homogeneous Dirichlet via odd ghost reflection.
    Dirichlet0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    Linf,
    H1Seminorm,
}

/// Midpoint quadrature over the unit square.
pub fn integrate(f: &ScalarField) -> f64 {
    // fixed summation order: mass bookkeeping depends on it
    f.grid.cell_area() * f.values.iter().sum::<f64>()
}

/// Average over the domain; `|Ω| = 1`.
pub fn mean(f: &ScalarField) -> f64 {
    integrate(f)
}

/// Face gradient with zero normal component on the boundary.
pub fn grad_neumann(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let mut out = VectorField::zeros(g);
    let (ihx, ihy) = (1.0 / g.hx, 1.0 / g.hy);
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.u[g.u_face(i, j)] = (f.at(i, j) - f.at(i - 1, j)) * ihx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.v[g.v_face(i, j)] = (f.at(i, j) - f.at(i, j - 1)) * ihy;
        }
    }
    out
}

/// Face-to-center divergence, the negative adjoint of [`grad_neumann`] on
/// fields with vanishing boundary normal component.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let mut out = ScalarField::zeros(g);
    let (ihx, ihy) = (1.0 / g.hx, 1.0 / g.hy);
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.values[g.cell(i, j)] = (v.u[g.u_face(i + 1, j)] - v.u[g.u_face(i, j)]) * ihx
                + (v.v[g.v_face(i, j + 1)] - v.v[g.v_face(i, j)]) * ihy;
        }
    }
    out
}

/// Five-point Laplacian with ghost-cell boundary treatment.
pub fn laplacian(f: &ScalarField, bc: Bc) -> ScalarField {
    let g = f.grid;
    let mut out = ScalarField::zeros(g);
    laplacian_into(g, &f.values, &mut out.values, bc);
    out
}

/// Slice form of [`laplacian`], used by the iterative solvers.
pub(crate) fn laplacian_into(g: Grid, f: &[f64], out: &mut [f64], bc: Bc) {
    let (nx, ny) = (g.nx, g.ny);
    let (ihx2, ihy2) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
    let sign = match bc {
        Bc::Neumann => 1.0,
        Bc::Dirichlet0 => -1.0,
    };
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let c = f[k];
            let w = if i > 0 { f[k - 1] } else { sign * c };
            let e = if i + 1 < nx { f[k + 1] } else { sign * c };
            let s = if j > 0 { f[k - nx] } else { sign * c };
            let n = if j + 1 < ny { f[k + nx] } else { sign * c };
            out[k] = (w - 2.0 * c + e) * ihx2 + (s - 2.0 * c + n) * ihy2;
        }
    }
}

pub fn norm(f: &ScalarField, kind: NormKind) -> f64 {
    match kind {
        NormKind::L1 => integrate(&f.map(f64::abs)),
        NormKind::L2 => integrate(&f.map(|v| v * v)).sqrt(),
        NormKind::Linf => f.values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        NormKind::H1Seminorm => grad_neumann(f).l2_sq().sqrt(),
    }
}
