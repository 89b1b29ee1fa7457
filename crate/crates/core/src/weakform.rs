//! Integral identities of generalized solutions, evaluated on discrete
//! trajectories against smooth space-time test functions.
//!
//! Trajectory data are taken linear in time between snapshots and
//! integrated exactly against the analytic time profile, so `φ_t` never
//! comes from differencing the output. Spatial integrals use the cell and
//! face quadratures of [`crate::grid`].

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::thread;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{grad_neumann, integrate, Grid, ScalarField, VectorField};
use crate::solver::{buoyancy, convection, curl_of_nodes, run, vector_laplacian, State, System};

/// `χ(t) = (1 - (t/T)²)³` on `[0, T)`, zero afterwards; `χ(0) = 1` and
/// `χ` is twice continuously differentiable at `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeProfile {
    t_supp: f64,
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, exact to degree 7.
const GAUSS4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_9),
    (0.330_009_478_207_571_9, 0.326_072_577_431_273_1),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_1),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_9),
];

impl TimeProfile {
    pub fn new(t_supp: f64) -> Self {
        assert!(t_supp > 0.0 && t_supp.is_finite(), "support must be positive");
        Self { t_supp }
    }

    pub fn support(&self) -> f64 {
        self.t_supp
    }

    pub fn value(&self, t: f64) -> f64 {
        if t >= self.t_supp {
            return 0.0;
        }
        let s = t / self.t_supp;
        (1.0 - s * s).powi(3)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t >= self.t_supp {
            return 0.0;
        }
        let s = t / self.t_supp;
        -6.0 * s * (1.0 - s * s).powi(2) / self.t_supp
    }

    /// `[∫ℓ₀χ, ∫ℓ₁χ, ∫ℓ₀χ', ∫ℓ₁χ']` over `[t0, t1]` with the linear hat
    /// functions `ℓ₀ = (t1-t)/(t1-t0)`, `ℓ₁ = (t-t0)/(t1-t0)`.
    fn hat_weights(&self, t0: f64, t1: f64) -> [f64; 4] {
        let mut w = [0.0; 4];
        let len = t1 - t0;
        if len <= 0.0 {
            return w;
        }
        // the profile is polynomial on each side of its support end
        let mut pieces = vec![(t0, t1.min(self.t_supp))];
        if t1 > self.t_supp && t0 < self.t_supp {
            pieces.push((self.t_supp, t1));
        }
        for (a, b) in pieces {
            if b <= a {
                continue;
            }
            for (x, gw) in GAUSS4 {
                let t = a + (b - a) * x;
                let l1 = (t - t0) / len;
                let l0 = 1.0 - l1;
                let (chi, dchi) = (self.value(t), self.derivative(t));
                let q = gw * (b - a);
                w[0] += q * l0 * chi;
                w[1] += q * l1 * chi;
                w[2] += q * l0 * dchi;
                w[3] += q * l1 * dchi;
            }
        }
        w
    }
}

/// Scalar test `χ(t) φ(x)` with `φ`, `∇φ` and `Δφ` sampled analytically.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTest {
    pub id: String,
    /// at cell centers
    pub phi: ScalarField,
    /// at face centers, each component on its own faces
    pub phi_faces: VectorField,
    pub grad: VectorField,
    pub lap: ScalarField,
    pub profile: TimeProfile,
    pub nonneg: bool,
}

fn cosine_mode(
    grid: Grid,
    k: u32,
    m: u32,
    offset: f64,
    amp: f64,
) -> (ScalarField, VectorField, VectorField, ScalarField) {
    let (kp, mp) = (k as f64 * PI, m as f64 * PI);
    let f = move |x: f64, y: f64| offset + amp * (kp * x).cos() * (mp * y).cos();
    let fx = move |x: f64, y: f64| -amp * kp * (kp * x).sin() * (mp * y).cos();
    let fy = move |x: f64, y: f64| -amp * mp * (kp * x).cos() * (mp * y).sin();
    let lap = move |x: f64, y: f64| -(kp * kp + mp * mp) * amp * (kp * x).cos() * (mp * y).cos();
    (
        ScalarField::from_fn(grid, f),
        VectorField::from_fn(grid, f, f),
        VectorField::from_fn(grid, fx, fy),
        ScalarField::from_fn(grid, lap),
    )
}

/// `cos(kπx) cos(mπy)`, whose normal derivative vanishes on the walls.
pub fn make_neumann_test(grid: Grid, k: u32, m: u32, profile: TimeProfile) -> ScalarTest {
    let (phi, phi_faces, grad, lap) = cosine_mode(grid, k, m, 0.0, 1.0);
    ScalarTest {
        id: format!("cos_{k}_{m}"),
        phi,
        phi_faces,
        grad,
        lap,
        profile,
        nonneg: k == 0 && m == 0,
    }
}

/// `1 + cos(kπx) cos(mπy)/2 >= 1/2`.
pub fn make_nonneg_test(grid: Grid, k: u32, m: u32, profile: TimeProfile) -> ScalarTest {
    let (phi, phi_faces, grad, lap) = cosine_mode(grid, k, m, 1.0, 0.5);
    ScalarTest {
        id: format!("poscos_{k}_{m}"),
        phi,
        phi_faces,
        grad,
        lap,
        profile,
        nonneg: true,
    }
}

/// Divergence-free test `χ(t) curl ψ` with `ψ` compactly supported away
/// from the walls.
#[derive(Debug, Clone, PartialEq)]
pub struct SolenoidalTest {
    pub id: String,
    pub phi: VectorField,
    /// discrete vector Laplacian of `phi`
    pub lap: VectorField,
    pub profile: TimeProfile,
}

/// Builds `curl ψ` from node samples of `stream`. Every node within `2h`
/// of the boundary must have `ψ = 0` exactly.
pub fn make_solenoidal_test(
    grid: Grid,
    id: impl Into<String>,
    stream: impl Fn(f64, f64) -> f64,
    profile: TimeProfile,
) -> Result<SolenoidalTest> {
    let collar = 2.0 * grid.h() * (1.0 + 1e-12);
    let mut worst = 0.0f64;
    for j in 0..=grid.ny() {
        for i in 0..=grid.nx() {
            let (x, y) = grid.node(i, j);
            if x.min(1.0 - x).min(y).min(1.0 - y) <= collar {
                worst = worst.max(stream(x, y).abs());
            }
        }
    }
    if worst > 0.0 {
        return Err(Error::CollarTooThin(worst));
    }
    let phi = curl_of_nodes(grid, stream);
    let lap = vector_laplacian(&phi);
    Ok(SolenoidalTest {
        id: id.into(),
        phi,
        lap,
        profile,
    })
}

/// `(1-s²)⁴` for `|s| < 1`.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - s * s).powi(4)
    }
}

/// Product bump centered at `(cx, cy)` with radius `r`.
pub fn bump_stream(cx: f64, cy: f64, r: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| bump((x - cx) / r) * bump((y - cy) / r)
}

/// Per-snapshot fields shared by all tests.
struct SnapshotTerms {
    t: f64,
    c: ScalarField,
    grad_c: VectorField,
    /// `n f(c)`
    sink: ScalarField,
    /// face `c` times `u`
    c_flux: VectorField,
    u: VectorField,
    conv: VectorField,
    buoy: VectorField,
    log_n: ScalarField,
    /// componentwise `|∂ ln(n+1)|²`
    grad_log_sq: VectorField,
    /// `n/(n+1) ∂ln(n+1) (S_ε∇c)` componentwise
    chem_log: VectorField,
    /// `n/(n+1) S_ε∇c`
    chem_flux: VectorField,
    /// face `ln(n+1)` times `u`
    log_flux: VectorField,
}

fn face_average(f: &ScalarField) -> VectorField {
    let g = f.grid();
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny() {
        for i in 1..g.nx() {
            out.u_mut()[g.u_face(i, j)] = f.avg_u_face(i, j);
        }
    }
    for j in 1..g.ny() {
        for i in 0..g.nx() {
            out.v_mut()[g.v_face(i, j)] = f.avg_v_face(i, j);
        }
    }
    out
}

fn product(a: &VectorField, b: &VectorField) -> VectorField {
    a.zip_map(b, |x, y| x * y)
}

fn cell_dot(a: &ScalarField, b: &ScalarField) -> f64 {
    integrate(&a.zip_map(b, |x, y| x * y))
}

impl SnapshotTerms {
    fn new(sys: &System, s: &State) -> Result<Self> {
        let consumption = sys.model().consumption;
        let mut sink = s.c.clone();
        for (v, n) in sink.values_mut().iter_mut().zip(s.n.values()) {
            *v = n * consumption.eval(*v)?;
        }
        let log_n = s.n.map(f64::ln_1p);
        let grad_log = grad_neumann(&log_n);
        let n_faces = face_average(&s.n);
        let ratio = n_faces.zip_map(&n_faces, |n, _| n / (n + 1.0));
        let chem = sys.chemotactic_velocity(&s.n, &s.c)?;
        let chem_flux = product(&ratio, &chem);
        Ok(Self {
            t: s.t,
            grad_c: grad_neumann(&s.c),
            sink,
            c_flux: product(&face_average(&s.c), &s.u),
            u: s.u.clone(),
            conv: convection(&s.u),
            buoy: buoyancy(&s.n, sys.potential().grad()),
            grad_log_sq: product(&grad_log, &grad_log),
            chem_log: product(&grad_log, &chem_flux),
            chem_flux,
            log_flux: product(&face_average(&log_n), &s.u),
            log_n,
            c: s.c.clone(),
        })
    }
}

/// Precomputed trajectory terms; every residual is linear in the test.
pub struct WeakAssembler {
    terms: Vec<SnapshotTerms>,
}

impl WeakAssembler {
    /// `snapshots` must start at `t = 0` and be increasing in time.
    pub fn new(sys: &System, snapshots: &[State]) -> Result<Self> {
        assert!(
            snapshots.windows(2).all(|w| w[1].t > w[0].t),
            "snapshots must be strictly increasing in time"
        );
        let terms = snapshots
            .iter()
            .map(|s| SnapshotTerms::new(sys, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { terms })
    }

    fn end(&self) -> f64 {
        self.terms.last().map_or(0.0, |t| t.t)
    }

    fn check_support(&self, profile: &TimeProfile) -> Result<()> {
        let start = self.terms.first().map_or(f64::INFINITY, |t| t.t);
        if start != 0.0 || self.end() < profile.support() * (1.0 - 1e-12) {
            return Err(Error::SupportExceedsTrajectory {
                support: profile.support(),
                end: self.end(),
            });
        }
        Ok(())
    }

    /// `∫₀^∞ (χ'(t) a(t) + χ(t) b(t)) dt` with `a`, `b` linear between
    /// snapshots, plus `χ(0) · init`.
    fn time_integral(&self, profile: &TimeProfile, f: impl Fn(&SnapshotTerms) -> (f64, f64), init: f64) -> f64 {
        let vals: Vec<(f64, f64)> = self.terms.iter().map(&f).collect();
        let mut total = profile.value(0.0) * init;
        for (k, w) in self.terms.windows(2).enumerate() {
            if w[0].t >= profile.support() {
                break;
            }
            let hw = profile.hat_weights(w[0].t, w[1].t);
            let (a0, b0) = vals[k];
            let (a1, b1) = vals[k + 1];
            total += hw[2] * a0 + hw[3] * a1 + hw[0] * b0 + hw[1] * b1;
        }
        total
    }

    /// LHS - RHS of the attractant identity
    /// `∫∫cφ_t + ∫c₀φ(0) = ∫∫∇c·∇φ + ∫∫n f(c)φ - ∫∫c u·∇φ`.
    pub fn residual_c(&self, test: &ScalarTest) -> Result<f64> {
        self.check_support(&test.profile)?;
        let init = cell_dot(&self.terms[0].c, &test.phi);
        Ok(self.time_integral(
            &test.profile,
            |s| {
                let a = cell_dot(&s.c, &test.phi);
                let b = -s.grad_c.dot(&test.grad) - cell_dot(&s.sink, &test.phi) + s.c_flux.dot(&test.grad);
                (a, b)
            },
            init,
        ))
    }

    /// LHS - RHS of the momentum identity
    /// `-∫∫u·φ_t - ∫u₀·φ(0) = -∫∫∇u:∇φ + ∫∫(u⊗u):∇φ + ∫∫n∇φ_pot·φ`.
    ///
    /// With `φ` solenoidal and vanishing near the walls,
    /// `∫(u⊗u):∇φ = -∫φ·(u·∇)u` and `∫∇u:∇φ = -<u, Δ_h φ>`.
    pub fn residual_u(&self, test: &SolenoidalTest) -> Result<f64> {
        self.check_support(&test.profile)?;
        let init = -self.terms[0].u.dot(&test.phi);
        Ok(self.time_integral(
            &test.profile,
            |s| {
                let a = -s.u.dot(&test.phi);
                let b = -s.u.dot(&test.lap) + s.conv.dot(&test.phi) - s.buoy.dot(&test.phi);
                (a, b)
            },
            init,
        ))
    }

    /// LHS - RHS of the entropy inequality for `ln(n+1)`; a generalized
    /// solution has a nonnegative gap for every nonnegative test.
    pub fn gap_ln_n(&self, test: &ScalarTest) -> Result<f64> {
        let min = test.phi.min().min(min_face(&test.phi_faces));
        if !test.nonneg || min < 0.0 {
            return Err(Error::TestNotNonnegative(min));
        }
        self.check_support(&test.profile)?;
        let init = -cell_dot(&self.terms[0].log_n, &test.phi);
        Ok(self.time_integral(
            &test.profile,
            |s| {
                let a = -cell_dot(&s.log_n, &test.phi);
                let rhs = cell_dot(&s.log_n, &test.lap) + s.grad_log_sq.dot(&test.phi_faces)
                    - s.chem_log.dot(&test.phi_faces)
                    + s.chem_flux.dot(&test.grad)
                    + s.log_flux.dot(&test.grad);
                (a, -rhs)
            },
            init,
        ))
    }
}

fn min_face(v: &VectorField) -> f64 {
    v.u().iter().chain(v.v()).fold(f64::INFINITY, |m, x| m.min(*x))
}

pub fn residual_c(sys: &System, snapshots: &[State], test: &ScalarTest) -> Result<f64> {
    WeakAssembler::new(sys, snapshots)?.residual_c(test)
}

pub fn residual_u(sys: &System, snapshots: &[State], test: &SolenoidalTest) -> Result<f64> {
    WeakAssembler::new(sys, snapshots)?.residual_u(test)
}

pub fn gap_ln_n(sys: &System, snapshots: &[State], test: &ScalarTest) -> Result<f64> {
    WeakAssembler::new(sys, snapshots)?.gap_ln_n(test)
}

/// Grid-independent description of a test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestCase {
    Cosine { k: u32, m: u32 },
    PositiveCosine { k: u32, m: u32 },
    Stream { cx: f64, cy: f64, r: f64 },
}

impl TestCase {
    pub fn id(&self) -> String {
        match *self {
            TestCase::Cosine { k, m } => format!("cos_{k}_{m}"),
            TestCase::PositiveCosine { k, m } => format!("poscos_{k}_{m}"),
            TestCase::Stream { cx, cy, r } => format!("curl_bump_{cx}_{cy}_{r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    ResidualC,
    ResidualU,
    GapLnN,
    /// refinement decay of a gap that must vanish in the limit
    GapShrink,
}

impl RowKind {
    pub fn name(&self) -> &'static str {
        match self {
            RowKind::ResidualC => "residual_c",
            RowKind::ResidualU => "residual_u",
            RowKind::GapLnN => "gap_ln_n",
            RowKind::GapShrink => "gap_ln_n_shrink",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            RowKind::ResidualC,
            RowKind::ResidualU,
            RowKind::GapLnN,
            RowKind::GapShrink,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// recorded for the refinement curve, not judged
    Info,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Info => "INFO",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Verdict::Pass, Verdict::Fail, Verdict::Info]
            .into_iter()
            .find(|v| v.name() == s)
    }
}

/// One `(test, level)` entry. For residual and shrink rows `tol` is the
/// largest admissible magnitude, for gap rows the admissible undershoot.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub test_id: String,
    pub kind: RowKind,
    pub level: usize,
    pub value: f64,
    pub tol: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResidualTable {
    pub rows: Vec<ResidualRow>,
}

pub const WEAKFORM_COLUMNS: &str = "test_id,kind,level,residual_or_gap,tol,verdict";

impl ResidualTable {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn get(&self, test_id: &str, kind: RowKind, level: usize) -> Option<&ResidualRow> {
        self.rows
            .iter()
            .find(|r| r.test_id == test_id && r.kind == kind && r.level == level)
    }

    pub fn extend(&mut self, other: ResidualTable) {
        for r in other.rows {
            assert!(
                self.get(&r.test_id, r.kind, r.level).is_none(),
                "duplicate row {} {} {}",
                r.test_id,
                r.kind.name(),
                r.level
            );
            self.rows.push(r);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(WEAKFORM_COLUMNS);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.16e},{:.16e},{}",
                r.test_id,
                r.kind.name(),
                r.level,
                r.value,
                r.tol,
                r.verdict.name()
            );
        }
        s
    }

    pub fn parse_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(WEAKFORM_COLUMNS) {
            return Err("unexpected header".into());
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("bad row {}", k + 2);
            if f.len() != 6 {
                return Err(bad());
            }
            rows.push(ResidualRow {
                test_id: f[0].to_string(),
                kind: RowKind::parse(f[1]).ok_or_else(bad)?,
                level: f[2].parse().map_err(|_| bad())?,
                value: f[3].parse().map_err(|_| bad())?,
                tol: f[4].parse().map_err(|_| bad())?,
                verdict: Verdict::parse(f[5]).ok_or_else(bad)?,
            });
        }
        Ok(Self { rows })
    }
}

/// `3 ×` the finest-level error against a geometric extrapolation of
/// `gaps` (coarse to fine). Without a contracting sequence the last
/// difference stands in for the error. Never below [`GAP_TOL_FLOOR`].
pub fn tol_gap(gaps: &[f64]) -> f64 {
    let n = gaps.len();
    if n < 2 {
        return GAP_TOL_FLOOR;
    }
    let d2 = gaps[n - 2] - gaps[n - 1];
    let err = if n >= 3 {
        let d1 = gaps[n - 3] - gaps[n - 2];
        let q = d2 / d1;
        if d1 != 0.0 && q > 0.0 && q < 1.0 {
            d2.abs() * q / (1.0 - q)
        } else {
            d2.abs()
        }
    } else {
        d2.abs()
    };
    (3.0 * err).max(GAP_TOL_FLOOR)
}

/// Round-off level below which gaps are not resolved.
pub const GAP_TOL_FLOOR: f64 = 1e-13;

/// Refinement study description.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub name: String,
    /// finest configuration; coarser levels halve and quarter the grid
    pub config: RunConfig,
    pub t_supp: f64,
    /// required `|r_coarse| / |r_fine|` between adjacent levels
    pub min_ratio: f64,
    /// also require gaps to decay at `min_ratio`
    pub gap_shrink: bool,
    pub residual_c: Vec<TestCase>,
    pub residual_u: Vec<TestCase>,
    pub gaps: Vec<TestCase>,
}

pub const LEVELS: usize = 3;
/// Smallest admissible coarse grid.
pub const MIN_COARSE_CELLS: usize = 8;
/// Horizon of the pure heat study; the solution has decayed well before.
pub const HEAT_STUDY_HORIZON: f64 = 0.1;

/// Coarse-to-fine configurations: grid, step bound and snapshot spacing
/// all scale with `h`.
pub fn level_configs(cfg: &RunConfig, t_end: f64) -> Result<Vec<RunConfig>> {
    let div = 1 << (LEVELS - 1);
    if !cfg.nx.is_multiple_of(div)
        || !cfg.ny.is_multiple_of(div)
        || cfg.nx / div < MIN_COARSE_CELLS
        || cfg.ny / div < MIN_COARSE_CELLS
    {
        return Err(Error::GridMismatch(format!(
            "refinement needs a grid divisible by {div} with at least {} cells per side on the coarsest level",
            MIN_COARSE_CELLS
        )));
    }
    Ok((0..LEVELS)
        .map(|l| {
            let s = (1usize << (LEVELS - 1 - l)) as f64;
            RunConfig {
                nx: cfg.nx * (1 << l) / div,
                ny: cfg.ny * (1 << l) / div,
                t_end,
                dt_max: cfg.dt_max * s,
                snapshot_interval: cfg.snapshot_interval * s,
                ..cfg.clone()
            }
        })
        .collect())
}

/// The decoupled heat configuration derived from `cfg`.
pub fn heat_config(cfg: &RunConfig) -> RunConfig {
    use crate::config::SensitivityChoice;
    use crate::model::{Consumption, PotentialKind};
    use crate::solver::InitialData;
    RunConfig {
        sensitivity: SensitivityChoice::Zero,
        consumption: Consumption::Zero,
        potential: PotentialKind::Flat,
        initial: InitialData::Heat,
        t_end: cfg.t_end.min(HEAT_STUDY_HORIZON),
        ..cfg.clone()
    }
}

/// Test cases sampled on the pure heat trajectory.
pub fn heat_study(cfg: &RunConfig) -> Study {
    let config = heat_config(cfg);
    Study {
        name: "heat".into(),
        t_supp: config.t_end,
        config,
        min_ratio: 2.0,
        gap_shrink: true,
        // the attractant starts in the (1,0) mode; every other mode is
        // orthogonal to it on the grid and its residual is round-off
        residual_c: vec![TestCase::Cosine { k: 1, m: 0 }],
        residual_u: vec![],
        gaps: vec![
            TestCase::PositiveCosine { k: 1, m: 0 },
            TestCase::PositiveCosine { k: 0, m: 1 },
            TestCase::PositiveCosine { k: 1, m: 1 },
        ],
    }
}

/// Test cases sampled on a coupled trajectory.
pub fn coupled_study(cfg: &RunConfig) -> Study {
    Study {
        name: "coupled".into(),
        config: cfg.clone(),
        t_supp: cfg.t_end,
        min_ratio: 1.5,
        gap_shrink: false,
        residual_c: vec![
            TestCase::Cosine { k: 0, m: 1 },
            TestCase::Cosine { k: 1, m: 0 },
            TestCase::Cosine { k: 1, m: 1 },
        ],
        // off the symmetry center of the default initial data, where the
        // circulation nearly cancels
        residual_u: vec![
            TestCase::Stream {
                cx: 0.3,
                cy: 0.65,
                r: 0.17,
            },
            TestCase::Stream {
                cx: 0.6,
                cy: 0.4,
                r: 0.2,
            },
            TestCase::Stream {
                cx: 0.4,
                cy: 0.6,
                r: 0.25,
            },
        ],
        gaps: vec![
            TestCase::PositiveCosine { k: 0, m: 0 },
            TestCase::PositiveCosine { k: 1, m: 0 },
            TestCase::PositiveCosine { k: 0, m: 1 },
            TestCase::PositiveCosine { k: 1, m: 1 },
            TestCase::PositiveCosine { k: 2, m: 1 },
        ],
    }
}

/// Values of every test on one level, in study order.
struct LevelValues {
    c: Vec<f64>,
    u: Vec<f64>,
    gaps: Vec<f64>,
}

fn evaluate_level(study: &Study, cfg: &RunConfig, snapshots: &[State]) -> Result<LevelValues> {
    let sys = System::from_config(cfg)?;
    let g = sys.grid();
    let profile = TimeProfile::new(study.t_supp);
    let asm = WeakAssembler::new(&sys, snapshots)?;
    let scalar = |case: &TestCase| match *case {
        TestCase::Cosine { k, m } => make_neumann_test(g, k, m, profile),
        TestCase::PositiveCosine { k, m } => make_nonneg_test(g, k, m, profile),
        TestCase::Stream { .. } => panic!("scalar tests must be cosine modes"),
    };
    let c = study
        .residual_c
        .iter()
        .map(|t| asm.residual_c(&scalar(t)))
        .collect::<Result<_>>()?;
    let gaps = study
        .gaps
        .iter()
        .map(|t| asm.gap_ln_n(&scalar(t)))
        .collect::<Result<_>>()?;
    let u = study
        .residual_u
        .iter()
        .map(|t| match *t {
            TestCase::Stream { cx, cy, r } => {
                asm.residual_u(&make_solenoidal_test(g, t.id(), bump_stream(cx, cy, r), profile)?)
            }
            _ => panic!("momentum tests must be streams"),
        })
        .collect::<Result<_>>()?;
    Ok(LevelValues { c, u, gaps })
}

fn run_level(cfg: &RunConfig) -> Result<Vec<State>> {
    let tr = run(cfg)?;
    match tr.failure {
        None => Ok(tr.snapshots),
        Some(msg) => Err(Error::TimestepTooLarge(format!("{}x{} level: {msg}", cfg.nx, cfg.ny))),
    }
}

fn ratio_rows(out: &mut ResidualTable, name: &str, kind: RowKind, values: &[f64], min_ratio: f64) {
    for (l, &v) in values.iter().enumerate() {
        let (tol, verdict) = if l == 0 {
            (f64::INFINITY, Verdict::Info)
        } else {
            let tol = values[l - 1].abs() / min_ratio;
            (tol, if v.abs() <= tol { Verdict::Pass } else { Verdict::Fail })
        };
        out.rows.push(ResidualRow {
            test_id: name.to_string(),
            kind,
            level: l,
            value: v,
            tol,
            verdict,
        });
    }
}

/// Runs every level (reusing `finest` for the top level when given) and
/// judges the refinement curves.
pub fn run_study(study: &Study, finest: Option<&[State]>) -> Result<ResidualTable> {
    let cfgs = level_configs(&study.config, study.t_supp)?;
    if let Some(s) = finest {
        let g = s[0].grid();
        if (g.nx(), g.ny()) != (study.config.nx, study.config.ny) {
            return Err(Error::GridMismatch(
                "trajectory grid differs from the study configuration".into(),
            ));
        }
    }
    // levels are independent; run them side by side
    let results: Vec<Result<LevelValues>> = thread::scope(|scope| {
        let handles: Vec<_> = cfgs
            .iter()
            .enumerate()
            .map(|(l, cfg)| {
                let given = if l == LEVELS - 1 { finest } else { None };
                scope.spawn(move || match given {
                    Some(snaps) => evaluate_level(study, cfg, snaps),
                    None => evaluate_level(study, cfg, &run_level(cfg)?),
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("refinement level panicked"))
            .collect()
    });
    let levels = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut table = ResidualTable::default();
    let id = |t: &TestCase| format!("{}/{}", study.name, t.id());
    for (k, t) in study.residual_c.iter().enumerate() {
        let v: Vec<f64> = levels.iter().map(|l| l.c[k]).collect();
        ratio_rows(&mut table, &id(t), RowKind::ResidualC, &v, study.min_ratio);
    }
    for (k, t) in study.residual_u.iter().enumerate() {
        let v: Vec<f64> = levels.iter().map(|l| l.u[k]).collect();
        ratio_rows(&mut table, &id(t), RowKind::ResidualU, &v, study.min_ratio);
    }
    for (k, t) in study.gaps.iter().enumerate() {
        let v: Vec<f64> = levels.iter().map(|l| l.gaps[k]).collect();
        let tol = tol_gap(&v);
        for (l, &g) in v.iter().enumerate() {
            let verdict = if l + 1 < LEVELS {
                Verdict::Info
            } else if g >= -tol {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            table.rows.push(ResidualRow {
                test_id: id(t),
                kind: RowKind::GapLnN,
                level: l,
                value: g,
                tol,
                verdict,
            });
        }
        if study.gap_shrink {
            ratio_rows(&mut table, &id(t), RowKind::GapShrink, &v, study.min_ratio);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SensitivityChoice;
    use crate::grid::divergence;
    use crate::model::{Consumption, PotentialKind};
    use crate::solver::{InitialData, StepControl};
    use proptest::prelude::*;

    #[test]
    fn profile_values() {
        let p = TimeProfile::new(2.0);
        assert_eq!(p.value(0.0), 1.0);
        assert_eq!(p.value(2.0), 0.0);
        assert_eq!(p.derivative(3.0), 0.0);
        let (t, h) = (0.7, 1e-6);
        let fd = (p.value(t + h) - p.value(t - h)) / (2.0 * h);
        assert!((fd - p.derivative(t)).abs() < 1e-8);
    }

    #[test]
    fn hat_weights_integrate_exactly() {
        let p = TimeProfile::new(1.0);
        // ∫₀¹ χ' = -1 and ∫₀¹ χ = 16/35 split over uneven pieces
        let ts = [0.0, 0.13, 0.5, 0.77, 1.2];
        let (mut d, mut v) = (0.0, 0.0);
        for w in ts.windows(2) {
            let hw = p.hat_weights(w[0], w[1]);
            d += hw[2] + hw[3];
            v += hw[0] + hw[1];
        }
        assert!((d + 1.0).abs() < 1e-14);
        assert!((v - 16.0 / 35.0).abs() < 1e-14);
        // ∫₀¹ t χ'(t) dt = -∫₀¹ χ = -16/35 with t linear in each piece
        let mut m = 0.0;
        for w in ts.windows(2) {
            let hw = p.hat_weights(w[0], w[1]);
            m += hw[2] * w[0] + hw[3] * w[1];
        }
        assert!((m + 16.0 / 35.0).abs() < 1e-14);
    }

    #[test]
    fn neumann_tests() {
        let g = Grid::square(16);
        let p = TimeProfile::new(1.0);
        let t0 = make_neumann_test(g, 0, 0, p);
        assert_eq!(t0.grad.max_abs(), 0.0);
        assert!(t0.nonneg);
        let t1 = make_neumann_test(g, 1, 0, p);
        // normal derivative on the walls x = 0, 1
        for j in 0..g.ny() {
            assert!(t1.grad.u()[g.u_face(0, j)].abs() < 1e-14);
            assert!(t1.grad.u()[g.u_face(g.nx(), j)].abs() < 1e-14);
        }
        assert!(!t1.nonneg);
        let pos = make_nonneg_test(g, 1, 1, p);
        assert!(pos.phi.min() >= 0.5);
    }

    #[test]
    fn solenoidal_tests() {
        let g = Grid::square(64);
        let p = TimeProfile::new(1.0);
        let zero = make_solenoidal_test(g, "zero", |_, _| 0.0, p).unwrap();
        assert_eq!(zero.phi.max_abs(), 0.0);
        let t = make_solenoidal_test(g, "bump", bump_stream(0.5, 0.5, 0.3), p).unwrap();
        assert!(divergence(&t.phi).values().iter().all(|d| d.abs() <= 1e-12));
        assert!(t.phi.max_abs() > 0.1);
        let thin = make_solenoidal_test(g, "thin", bump_stream(0.5, 0.5, 0.49), p);
        assert!(matches!(thin, Err(Error::CollarTooThin(_))));
        let wall = make_solenoidal_test(g, "wall", |x, y| (PI * x).sin() * (PI * y).sin(), p);
        assert!(matches!(wall, Err(Error::CollarTooThin(_))));
    }

    #[test]
    fn seeded_stream_divergence_by_recomputation() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let g = Grid::new(40, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let coeffs: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.gen_range(0.3..0.7),
                    rng.gen_range(0.3..0.7),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let stream = |x: f64, y: f64| {
            coeffs
                .iter()
                .map(|&(cx, cy, a)| a * bump_stream(cx, cy, 0.2)(x, y))
                .sum::<f64>()
        };
        let t = make_solenoidal_test(g, "seeded", stream, TimeProfile::new(1.0)).unwrap();
        let (hx, hy) = (g.hx(), g.hy());
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let d = (t.phi.u()[g.u_face(i + 1, j)] - t.phi.u()[g.u_face(i, j)]) / hx
                    + (t.phi.v()[g.v_face(i, j + 1)] - t.phi.v()[g.v_face(i, j)]) / hy;
                assert!(d.abs() <= 1e-12, "cell ({i},{j}) divergence {d}");
            }
        }
    }

    fn uniform_trajectory(sys: &System, times: &[f64]) -> Vec<State> {
        let s0 = InitialData::Uniform.state(sys.grid());
        times.iter().map(|&t| State { t, ..s0.clone() }).collect()
    }

    fn system(g: Grid, potential: PotentialKind) -> System {
        let model = crate::model::ModelParams {
            potential,
            ..Default::default()
        };
        System::new(g, model, 0.1, StepControl::default()).unwrap()
    }

    #[test]
    fn stationary_state_residuals_vanish() {
        let g = Grid::square(16);
        let sys = system(g, PotentialKind::Gravity);
        let snaps = uniform_trajectory(&sys, &[0.0, 0.1, 0.25, 0.5]);
        let p = TimeProfile::new(0.5);
        for (k, m) in [(0, 0), (1, 0), (2, 3)] {
            assert_eq!(residual_c(&sys, &snaps, &make_neumann_test(g, k, m, p)).unwrap(), 0.0);
            let gap = gap_ln_n(&sys, &snaps, &make_nonneg_test(g, k, m, p)).unwrap();
            assert!(gap.abs() < 1e-13, "gap {gap}");
        }
        // uniform n under an affine potential only exerts a gradient force
        let t = make_solenoidal_test(g, "b", bump_stream(0.5, 0.5, 0.3), p).unwrap();
        assert!(residual_u(&sys, &snaps, &t).unwrap().abs() < 1e-13);
    }

    #[test]
    fn support_beyond_trajectory_is_rejected() {
        let g = Grid::square(8);
        let sys = system(g, PotentialKind::Gravity);
        let snaps = uniform_trajectory(&sys, &[0.0, 0.1]);
        let t = make_neumann_test(g, 1, 0, TimeProfile::new(0.5));
        assert!(matches!(
            residual_c(&sys, &snaps, &t),
            Err(Error::SupportExceedsTrajectory { .. })
        ));
    }

    #[test]
    fn gap_requires_nonnegative_test() {
        let g = Grid::square(8);
        let sys = system(g, PotentialKind::Gravity);
        let snaps = uniform_trajectory(&sys, &[0.0, 0.5]);
        let t = make_neumann_test(g, 1, 0, TimeProfile::new(0.5));
        assert!(matches!(gap_ln_n(&sys, &snaps, &t), Err(Error::TestNotNonnegative(_))));
    }

    fn short_coupled_run(n: usize) -> (System, Vec<State>) {
        let cfg = RunConfig {
            nx: n,
            ny: n,
            t_end: 0.05,
            snapshot_interval: 0.01,
            ..RunConfig::default()
        };
        let tr = run(&cfg).unwrap();
        (System::from_config(&cfg).unwrap(), tr.snapshots)
    }

    #[test]
    fn residuals_are_linear_in_the_test() {
        let (sys, snaps) = short_coupled_run(16);
        let g = sys.grid();
        let asm = WeakAssembler::new(&sys, &snaps).unwrap();
        let p = TimeProfile::new(0.05);
        let a = make_neumann_test(g, 1, 0, p);
        let b = make_neumann_test(g, 1, 2, p);
        let alpha = -2.5;
        let comb = ScalarTest {
            id: "comb".into(),
            phi: a.phi.zip_map(&b.phi, |x, y| alpha * x + y),
            phi_faces: a.phi_faces.zip_map(&b.phi_faces, |x, y| alpha * x + y),
            grad: a.grad.zip_map(&b.grad, |x, y| alpha * x + y),
            lap: a.lap.zip_map(&b.lap, |x, y| alpha * x + y),
            profile: p,
            nonneg: false,
        };
        let (ra, rb, rc) = (
            asm.residual_c(&a).unwrap(),
            asm.residual_c(&b).unwrap(),
            asm.residual_c(&comb).unwrap(),
        );
        assert!((rc - (alpha * ra + rb)).abs() <= 1e-13 * (ra.abs() + rb.abs() + 1e-3));
        let sa = make_solenoidal_test(g, "a", bump_stream(0.5, 0.5, 0.3), p).unwrap();
        let sb = make_solenoidal_test(g, "b", bump_stream(0.4, 0.6, 0.2), p).unwrap();
        let sc = SolenoidalTest {
            id: "c".into(),
            phi: sa.phi.zip_map(&sb.phi, |x, y| alpha * x + y),
            lap: sa.lap.zip_map(&sb.lap, |x, y| alpha * x + y),
            profile: p,
        };
        let (ua, ub, uc) = (
            asm.residual_u(&sa).unwrap(),
            asm.residual_u(&sb).unwrap(),
            asm.residual_u(&sc).unwrap(),
        );
        assert!((uc - (alpha * ua + ub)).abs() <= 1e-13 * (ua.abs() + ub.abs() + 1e-3));
    }

    #[test]
    fn gradient_forcing_is_invisible_to_solenoidal_tests() {
        let (sys, snaps) = short_coupled_run(16);
        let g = sys.grid();
        let p = TimeProfile::new(0.05);
        let t = make_solenoidal_test(g, "a", bump_stream(0.45, 0.55, 0.3), p).unwrap();
        let mut asm = WeakAssembler::new(&sys, &snaps).unwrap();
        let base = asm.residual_u(&t).unwrap();
        for (k, s) in asm.terms.iter_mut().enumerate() {
            let q = ScalarField::from_fn(g, |x, y| (3.0 * x + k as f64).sin() * y * y + 40.0 * x);
            s.buoy = s.buoy.zip_map(&grad_neumann(&q), |a, b| a + b);
        }
        let again = asm.residual_u(&t).unwrap();
        assert!(base.abs() > 1e-9);
        assert!((again - base).abs() < 1e-10, "{again} vs {base}");
    }

    #[test]
    fn spatially_constant_test_reduces_to_entropy_balance() {
        let (sys, snaps) = short_coupled_run(16);
        let g = sys.grid();
        let p = TimeProfile::new(0.05);
        let gap = gap_ln_n(&sys, &snaps, &make_nonneg_test(g, 0, 0, p)).unwrap();
        // direct evaluation of -∫∫Lχ' - ∫L₀ - ∫∫|∇L|²χ with φ ≡ 1.5
        let asm = WeakAssembler::new(&sys, &snaps).unwrap();
        let ones = VectorField::from_fn(g, |_, _| 1.5, |_, _| 1.5);
        let cells = ScalarField::constant(g, 1.5);
        let direct = asm.time_integral(
            &p,
            |s| {
                (
                    -cell_dot(&s.log_n, &cells),
                    -s.grad_log_sq.dot(&ones) + s.chem_log.dot(&ones),
                )
            },
            -cell_dot(&asm.terms[0].log_n, &cells),
        );
        assert!((gap - direct).abs() < 1e-14 * direct.abs().max(1e-3));
    }

    #[test]
    fn tol_gap_extrapolates_geometric_sequences() {
        // errors 0.16, 0.04, 0.01 around a limit of 0.5
        let t = tol_gap(&[0.66, 0.54, 0.51]);
        assert!((t - 3.0 * 0.01).abs() < 1e-12);
        // no contraction: fall back to the last difference
        assert!((tol_gap(&[0.5, 0.51, 0.55]) - 0.12).abs() < 1e-12);
        assert_eq!(tol_gap(&[1.0, 1.0, 1.0]), GAP_TOL_FLOOR);
    }

    #[test]
    fn level_configs_scale_with_h() {
        let cfg = RunConfig::default();
        let lv = level_configs(&cfg, 0.3).unwrap();
        let sizes: Vec<usize> = lv.iter().map(|c| c.nx).collect();
        assert_eq!(sizes, vec![16, 32, 64]);
        assert_eq!(lv[0].snapshot_interval, 4.0 * cfg.snapshot_interval);
        assert_eq!(
            lv[2],
            RunConfig {
                t_end: 0.3,
                ..cfg.clone()
            }
        );
        let odd = RunConfig {
            nx: 30,
            ..RunConfig::default()
        };
        assert!(level_configs(&odd, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let table = ResidualTable {
            rows: vec![
                ResidualRow {
                    test_id: "heat/cos_1_0".into(),
                    kind: RowKind::ResidualC,
                    level: 0,
                    value: 1.0 / 3.0,
                    tol: f64::INFINITY,
                    verdict: Verdict::Info,
                },
                ResidualRow {
                    test_id: "heat/cos_1_0".into(),
                    kind: RowKind::GapShrink,
                    level: 1,
                    value: -2e-9,
                    tol: 1e-3,
                    verdict: Verdict::Pass,
                },
            ],
        };
        let back = ResidualTable::parse_csv(&table.to_csv()).unwrap();
        assert_eq!(back, table);
        assert!(back.all_pass());
    }

    #[test]
    fn heat_config_decouples() {
        let h = heat_config(&RunConfig::default());
        assert_eq!(h.sensitivity, SensitivityChoice::Zero);
        assert_eq!(h.consumption, Consumption::Zero);
        assert_eq!(h.potential, PotentialKind::Flat);
        assert_eq!(h.t_end, HEAT_STUDY_HORIZON);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn nonneg_tests_stay_nonnegative(k in 0u32..5, m in 0u32..5, n in 8usize..24) {
            let t = make_nonneg_test(Grid::square(n), k, m, TimeProfile::new(1.0));
            prop_assert!(t.phi.min() >= 0.5 - 1e-15);
            prop_assert!(min_face(&t.phi_faces) >= 0.0);
        }
    }
}
