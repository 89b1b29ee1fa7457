//! Parameter functions of the chemotaxis-fluid system and their
//! regularization.
//!
//! The sensitivity is the tensor `S = a I + b J` with `J` the quarter turn,
//! so `S ∇c` mixes a gradient-following part with a rotational part. The
//! default places the rotational coefficient `b` in a collar of width
//! `delta_b` along the wall. Every choice here is a closed form so that the
//! envelope and sup-norm bookkeeping can be checked exactly.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::grid::{boundary_distance, grad_neumann, Grid, ScalarField, VectorField};

/// Dense 2x2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 { m: [[0.0; 2]; 2] };
    pub const IDENTITY: Mat2 = Mat2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };

    /// `a I + b J` with `J = [[0, -1], [1, 0]]`.
    pub fn rotational(a: f64, b: f64) -> Self {
        Mat2 { m: [[a, -b], [b, a]] }
    }

    pub fn frobenius(&self) -> f64 {
        self.m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = self.m;
        m.iter_mut().flatten().for_each(|x| *x *= s);
        Mat2 { m }
    }
}

/// Smoothed step: 1 on `(-inf, 1]`, 0 on `[2, inf)`, monotone and
/// `C^inf` in between, glued from `exp(-1/t)` pieces:
/// `η(s) = g(2-s) / (g(2-s) + g(s-1))`, `g(t) = exp(-1/t)` for `t > 0`.
pub fn ramp(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else if s >= 2.0 {
        0.0
    } else {
        let g = |t: f64| (-1.0 / t).exp();
        let up = g(2.0 - s);
        up / (up + g(s - 1.0))
    }
}

/// The cutoff pair `(ρ_ε, χ_ε)` for one `ε ∈ (0,1)`.
///
/// `ρ_ε(x) = 1 - η(dist(x, ∂Ω)/ε)` vanishes within `ε` of the wall and is 1
/// beyond `2ε`; `χ_ε(s) = η(ε s)` is 1 below `1/ε` and 0 above `2/ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffFamily {
    eps: f64,
}

impl CutoffFamily {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::EpsOutOfRange(eps));
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn rho(&self, x: f64, y: f64) -> f64 {
        1.0 - ramp(boundary_distance(x, y) / self.eps)
    }

    pub fn chi(&self, n: f64) -> f64 {
        ramp(self.eps * n)
    }
}

/// `S(x,n,c) = a I + b(x) J` with `b(x) = beta0 · w(dist(x,∂Ω)/delta_b)`,
/// `w(s) = η(1+s)` (1 on the wall, 0 from distance `delta_b` on).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    pub a: f64,
    pub beta0: f64,
    pub delta_b: f64,
}

impl Default for Sensitivity {
    fn default() -> Self {
        Self {
            a: 1.0,
            beta0: 0.5,
            delta_b: 0.1,
        }
    }
}

impl Sensitivity {
    pub fn identity() -> Self {
        Self {
            a: 1.0,
            beta0: 0.0,
            delta_b: 0.1,
        }
    }

    pub fn zero() -> Self {
        Self {
            a: 0.0,
            beta0: 0.0,
            delta_b: 0.1,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.beta0 == 0.0
    }

    /// Rotational weight profile on `[0, inf)`.
    pub fn collar_weight(s: f64) -> f64 {
        ramp(1.0 + s)
    }

    /// Coefficients `(a, b)` at a point. The default forms do not depend on
    /// `n` or `c`.
    pub fn coefficients(&self, x: f64, y: f64) -> (f64, f64) {
        let b = if self.beta0 == 0.0 {
            0.0
        } else {
            self.beta0 * Self::collar_weight(boundary_distance(x, y) / self.delta_b)
        };
        (self.a, b)
    }

    pub fn eval(&self, x: f64, y: f64, n: f64, c: f64) -> Result<Mat2> {
        check_nonneg("n", n)?;
        check_nonneg("c", c)?;
        let (a, b) = self.coefficients(x, y);
        Ok(Mat2::rotational(a, b))
    }

    /// `S_ε = ρ_ε(x) χ_ε(n) S(x,n,c)`.
    pub fn eval_eps(&self, cut: &CutoffFamily, x: f64, y: f64, n: f64, c: f64) -> Result<Mat2> {
        let s = self.eval(x, y, n, c)?;
        Ok(s.scale(cut.rho(x, y) * cut.chi(n)))
    }

    /// The certified envelope for this sensitivity.
    pub fn envelope(&self) -> Envelope {
        Envelope::constant(SQRT_2 * (self.a.abs() + self.beta0.abs()))
    }
}

/// Nondecreasing bound `S_0(c)` on the Frobenius norm of the sensitivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    level: f64,
}

impl Envelope {
    pub fn constant(level: f64) -> Self {
        assert!(level >= 0.0, "envelope must be nonnegative");
        Self { level }
    }

    pub fn eval(&self, _c: f64) -> f64 {
        self.level
    }
}

/// Attractant consumption rate `f`, with `f(0) = 0` and `f >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Consumption {
    /// `f(c) = c`
    #[default]
    Linear,
    /// `f ≡ 0`
    Zero,
}

impl Consumption {
    pub fn eval(&self, c: f64) -> Result<f64> {
        check_nonneg("c", c)?;
        Ok(match self {
            Consumption::Linear => c,
            Consumption::Zero => 0.0,
        })
    }

    /// `f(c)/c`, extended continuously to `c = 0`.
    pub fn rate(&self, _c: f64) -> f64 {
        match self {
            Consumption::Linear => 1.0,
            Consumption::Zero => 0.0,
        }
    }
}

/// Closed-form gravitational potentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PotentialKind {
    /// `φ = -y`
    #[default]
    Gravity,
    /// `φ = -y + 0.1 sin(πx)`
    GravityWavy,
    /// `φ ≡ 0`
    Flat,
}

impl PotentialKind {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            PotentialKind::Gravity => -y,
            PotentialKind::GravityWavy => -y + 0.1 * (PI * x).sin(),
            PotentialKind::Flat => 0.0,
        }
    }

    pub fn gradient(&self, x: f64, _y: f64) -> [f64; 2] {
        match self {
            PotentialKind::Gravity => [0.0, -1.0],
            PotentialKind::GravityWavy => [0.1 * PI * (PI * x).cos(), -1.0],
            PotentialKind::Flat => [0.0, 0.0],
        }
    }

    /// `sup |∇φ|` over the closed square.
    pub fn grad_sup(&self) -> f64 {
        match self {
            PotentialKind::Gravity => 1.0,
            PotentialKind::GravityWavy => (1.0 + 0.01 * PI * PI).sqrt(),
            PotentialKind::Flat => 0.0,
        }
    }

    /// `sup |H_φ|`; the only nonzero Hessian entry of the wavy form is
    /// `φ_xx = -0.1 π² sin(πx)`.
    pub fn hessian_sup(&self) -> f64 {
        match self {
            PotentialKind::GravityWavy => 0.1 * PI * PI,
            _ => 0.0,
        }
    }
}

/// A potential sampled on a grid together with its cached norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    phi: ScalarField,
    grad: VectorField,
    grad_sup: f64,
    hessian_sup: f64,
}

impl Potential {
    pub fn new(kind: PotentialKind, grid: Grid) -> Self {
        let phi = ScalarField::from_fn(grid, |x, y| kind.value(x, y));
        // discrete gradient, so a uniform density yields a pure gradient force
        let grad = grad_neumann(&phi);
        Self {
            kind,
            phi,
            grad,
            grad_sup: kind.grad_sup(),
            hessian_sup: kind.hessian_sup(),
        }
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }
    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }
    pub fn grad(&self) -> &VectorField {
        &self.grad
    }
    pub fn grad_sup(&self) -> f64 {
        self.grad_sup
    }
    pub fn hessian_sup(&self) -> f64 {
        self.hessian_sup
    }
}

pub fn potential_defaults(grid: Grid) -> Potential {
    Potential::new(PotentialKind::Gravity, grid)
}

/// Complete parameter set of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelParams {
    pub sensitivity: Sensitivity,
    pub consumption: Consumption,
    pub potential: PotentialKind,
}

impl ModelParams {
    pub fn envelope(&self) -> Envelope {
        self.sensitivity.envelope()
    }
}

fn check_nonneg(what: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeArgument { what, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ramp_shape() {
        assert_eq!(ramp(-3.0), 1.0);
        assert_eq!(ramp(1.0), 1.0);
        assert_eq!(ramp(2.0), 0.0);
        assert_eq!(ramp(7.0), 0.0);
        assert!((ramp(1.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for k in 0..=1000 {
            let v = ramp(1.0 + k as f64 / 1000.0);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn default_sensitivity_diagonal_in_interior() {
        let s = Sensitivity::default().eval(0.5, 0.5, 1.0, 0.3).unwrap();
        assert_eq!(s, Mat2::rotational(1.0, 0.0));
        assert_eq!(s.m[0][1], 0.0);
        // on the wall the rotational part is at full strength
        let w = Sensitivity::default().eval(0.0, 0.5, 1.0, 0.3).unwrap();
        assert_eq!(w, Mat2::rotational(1.0, 0.5));
    }

    #[test]
    fn identity_sensitivity() {
        let s = Sensitivity::identity();
        for &(x, y) in &[(0.0, 0.0), (0.02, 0.7), (0.5, 0.5)] {
            assert_eq!(s.eval(x, y, 3.0, 0.1).unwrap(), Mat2::IDENTITY);
        }
    }

    #[test]
    fn sensitivity_rejects_negative_arguments() {
        let s = Sensitivity::default();
        assert!(matches!(
            s.eval(0.5, 0.5, -1.0, 0.0),
            Err(Error::NegativeArgument { what: "n", .. })
        ));
        assert!(s.eval(0.5, 0.5, 0.0, -0.1).is_err());
    }

    #[test]
    fn envelope_audit() {
        let s = Sensitivity::default();
        let env = s.envelope();
        assert!((env.eval(0.0) - SQRT_2 * 1.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..10_000 {
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            let (n, c) = (rng.gen_range(0.0..50.0), rng.gen_range(0.0..5.0));
            let m = s.eval(x, y, n, c).unwrap();
            assert!(m.frobenius() <= env.eval(c) * (1.0 + 1e-15));
            let eps = rng.gen_range(0.01..0.99);
            let me = s.eval_eps(&CutoffFamily::new(eps).unwrap(), x, y, n, c).unwrap();
            assert!(me.frobenius() <= m.frobenius() * (1.0 + 1e-15));
        }
        let mut prev = 0.0;
        for k in 0..100 {
            let v = env.eval(k as f64 * 0.1);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn eps_cutoffs() {
        let s = Sensitivity::default();
        for &eps in &[0.9, 0.3, 0.01] {
            let cut = CutoffFamily::new(eps).unwrap();
            assert_eq!(s.eval_eps(&cut, 0.0, 0.4, 1.0, 0.2).unwrap(), Mat2::ZERO);
            assert_eq!(s.eval_eps(&cut, 0.3, 1.0, 1.0, 0.2).unwrap(), Mat2::ZERO);
            assert_eq!(s.eval_eps(&cut, 0.5, 0.5, 3.0 / eps, 0.2).unwrap().frobenius(), 0.0);
        }
        assert!(matches!(CutoffFamily::new(1.0), Err(Error::EpsOutOfRange(_))));
        assert!(CutoffFamily::new(0.0).is_err());
    }

    #[test]
    fn eps_tensor_recomposes_from_cutoffs() {
        let s = Sensitivity::default();
        let eps = 0.2;
        let cut = CutoffFamily::new(eps).unwrap();
        let (x, y, n, c) = (0.33, 0.61, 0.5 / eps, 0.4);
        // independent evaluation of both cutoffs from the ramp
        let rho = 1.0 - ramp(boundary_distance(x, y) / eps);
        let chi = ramp(eps * n);
        let direct = s.eval(x, y, n, c).unwrap().scale(rho * chi);
        let composed = s.eval_eps(&cut, x, y, n, c).unwrap();
        for r in 0..2 {
            for k in 0..2 {
                assert!((direct.m[r][k] - composed.m[r][k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cutoffs_increase_as_eps_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = Sensitivity::default();
        for _ in 0..2000 {
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            let n = rng.gen_range(0.0..40.0);
            let e1 = rng.gen_range(0.01..0.99);
            let e2 = e1 * rng.gen_range(0.05..1.0);
            let (c1, c2) = (CutoffFamily::new(e1).unwrap(), CutoffFamily::new(e2).unwrap());
            assert!(c2.rho(x, y) >= c1.rho(x, y));
            assert!(c2.chi(n) >= c1.chi(n));
            let f1 = s.eval_eps(&c1, x, y, n, 0.1).unwrap().frobenius();
            let f2 = s.eval_eps(&c2, x, y, n, 0.1).unwrap().frobenius();
            assert!(f2 >= f1);
        }
    }

    #[test]
    fn eps_tensor_converges_pointwise() {
        let s = Sensitivity::default();
        let (x, y, n, c) = (0.04, 0.5, 2.0, 0.3);
        let full = s.eval(x, y, n, c).unwrap();
        let mut prev = f64::INFINITY;
        let mut eps = 0.5;
        while eps > 1e-4 {
            let cut = CutoffFamily::new(eps).unwrap();
            let e = s.eval_eps(&cut, x, y, n, c).unwrap();
            let d = Mat2 {
                m: [
                    [full.m[0][0] - e.m[0][0], full.m[0][1] - e.m[0][1]],
                    [full.m[1][0] - e.m[1][0], full.m[1][1] - e.m[1][1]],
                ],
            }
            .frobenius();
            assert!(d <= prev);
            prev = d;
            eps *= 0.5;
        }
        assert!(prev < 1e-14);
    }

    #[test]
    fn consumption() {
        assert_eq!(Consumption::Linear.eval(0.0).unwrap(), 0.0);
        assert_eq!(Consumption::Zero.eval(0.0).unwrap(), 0.0);
        assert_eq!(Consumption::Linear.eval(2.0).unwrap(), 2.0);
        assert!(Consumption::Linear.eval(-1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let c: f64 = rng.gen_range(0.0..10.0);
            let d: f64 = rng.gen_range(0.0..1.0);
            assert!(Consumption::Linear.eval(c + d).unwrap() >= 0.0);
        }
    }

    #[test]
    fn potentials() {
        let g = Grid::square(16);
        let p = potential_defaults(g);
        assert!(p.grad().u().iter().all(|&v| v == 0.0));
        assert_eq!(p.hessian_sup(), 0.0);
        assert_eq!(p.grad_sup(), 1.0);
        let wavy = Potential::new(PotentialKind::GravityWavy, g);
        assert!((wavy.hessian_sup() - 0.1 * PI * PI).abs() < 1e-12);
        // analytic sup of |∇φ| is attained at x = 0
        let g0 = PotentialKind::GravityWavy.gradient(0.0, 0.3);
        assert!(((g0[0] * g0[0] + g0[1] * g0[1]).sqrt() - wavy.grad_sup()).abs() < 1e-12);
        // φ_xx by central differences at the sine peak
        let k = PotentialKind::GravityWavy;
        let hh = 1e-4;
        let fxx = (k.value(0.5 + hh, 0.2) - 2.0 * k.value(0.5, 0.2) + k.value(0.5 - hh, 0.2)) / (hh * hh);
        assert!((fxx.abs() - wavy.hessian_sup()).abs() < 1e-5);
    }
}
