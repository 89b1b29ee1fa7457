//! Integral functionals along a run and the a priori bounds they obey.
//!
//! [`FunctionalSeries`] holds one row per output time. Cumulative
//! dissipations are trapezoid sums over those rows, so they depend on the
//! output cadence but not on the solver's internal steps.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{grad_neumann, integrate, norm, NormKind, ScalarField};
use crate::model::PotentialKind;
use crate::solver::{velocity_gradient_sq, State, Trajectory};

/// Relative tolerance applied to every bound.
pub const TOL_REPORT: f64 = 1e-8;
/// Threshold for relative mass drift and for norm increases.
pub const DRIFT_TOL: f64 = 1e-10;
/// Poincaré constant of zero-trace fields on the unit square, `1/(π√2)`.
pub const POINCARE_UNIT_SQUARE: f64 = 0.225_079_079_039_276_5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SeriesRow {
    pub t: f64,
    pub mass: f64,
    pub c_l1: f64,
    pub c_l2: f64,
    pub c_linf: f64,
    /// `∫|∇c|²` at `t`
    pub grad_c_sq: f64,
    /// `∫|∇n|²/(n+1)²` at `t`
    pub grad_n_weighted: f64,
    /// `∫|∇u|²` at `t`
    pub grad_u_sq: f64,
    pub d_c: f64,
    pub d_n: f64,
    /// `∫(n+1) ln((n+1)/(n̄₀+1))`
    pub entropy: f64,
    /// `∫|u|²`
    pub kinetic: f64,
    pub d_u: f64,
    /// `∫₀ᵗ entropy`
    pub entropy_time_integral: f64,
}

pub const SERIES_COLUMNS: [&str; 14] = [
    "t",
    "mass",
    "c_l1",
    "c_l2",
    "c_linf",
    "grad_c_sq",
    "grad_n_weighted",
    "grad_u_sq",
    "D_c",
    "D_n",
    "E",
    "K",
    "D_u",
    "int_E",
];

impl SeriesRow {
    fn to_array(self) -> [f64; 14] {
        [
            self.t,
            self.mass,
            self.c_l1,
            self.c_l2,
            self.c_linf,
            self.grad_c_sq,
            self.grad_n_weighted,
            self.grad_u_sq,
            self.d_c,
            self.d_n,
            self.entropy,
            self.kinetic,
            self.d_u,
            self.entropy_time_integral,
        ]
    }

    fn from_array(a: [f64; 14]) -> Self {
        Self {
            t: a[0],
            mass: a[1],
            c_l1: a[2],
            c_l2: a[3],
            c_linf: a[4],
            grad_c_sq: a[5],
            grad_n_weighted: a[6],
            grad_u_sq: a[7],
            d_c: a[8],
            d_n: a[9],
            entropy: a[10],
            kinetic: a[11],
            d_u: a[12],
            entropy_time_integral: a[13],
        }
    }
}

/// `∫|∇n|²/(n+1)²` with the face value of `n` taken as the two-cell mean.
pub fn weighted_grad_n(n: &ScalarField) -> f64 {
    let g = n.grid();
    let grad = grad_neumann(n);
    let mut s = 0.0;
    for j in 0..g.ny() {
        for i in 1..g.nx() {
            let w = n.avg_u_face(i, j) + 1.0;
            let d = grad.u()[g.u_face(i, j)];
            s += d * d / (w * w);
        }
    }
    for j in 1..g.ny() {
        for i in 0..g.nx() {
            let w = n.avg_v_face(i, j) + 1.0;
            let d = grad.v()[g.v_face(i, j)];
            s += d * d / (w * w);
        }
    }
    s * g.cell_area()
}

/// `∫(n+1) ln((n+1)/(n̄₀+1))`.
pub fn entropy(n: &ScalarField, nbar0: f64) -> f64 {
    let r = nbar0 + 1.0;
    integrate(&n.map(|v| (v + 1.0) * ((v + 1.0) / r).ln()))
}

/// Computes the row for `state`, advancing the accumulators of `prev` by
/// the trapezoid rule.
pub fn record(state: &State, nbar0: f64, prev: Option<&SeriesRow>) -> SeriesRow {
    let c = &state.c;
    let mut row = SeriesRow {
        t: state.t,
        mass: integrate(&state.n),
        c_l1: norm(c, NormKind::L1),
        c_l2: norm(c, NormKind::L2),
        c_linf: norm(c, NormKind::Linf),
        grad_c_sq: grad_neumann(c).l2_sq(),
        grad_n_weighted: weighted_grad_n(&state.n),
        grad_u_sq: velocity_gradient_sq(&state.u),
        entropy: entropy(&state.n, nbar0),
        kinetic: state.u.l2_sq(),
        ..SeriesRow::default()
    };
    if let Some(p) = prev {
        let h = 0.5 * (row.t - p.t);
        row.d_c = p.d_c + h * (p.grad_c_sq + row.grad_c_sq);
        row.d_n = p.d_n + h * (p.grad_n_weighted + row.grad_n_weighted);
        row.d_u = p.d_u + h * (p.grad_u_sq + row.grad_u_sq);
        row.entropy_time_integral = p.entropy_time_integral + h * (p.entropy + row.entropy);
    }
    row
}

/// Time series of all functionals, with the initial mean density that
/// normalizes the entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSeries {
    nbar0: f64,
    rows: Vec<SeriesRow>,
}

impl FunctionalSeries {
    /// Series holding the row of the initial state.
    pub fn new(initial: &State) -> Self {
        let nbar0 = integrate(&initial.n);
        Self {
            nbar0,
            rows: vec![record(initial, nbar0, None)],
        }
    }

    pub fn from_rows(nbar0: f64, rows: Vec<SeriesRow>) -> Self {
        Self { nbar0, rows }
    }

    pub fn push(&mut self, state: &State) {
        let row = record(state, self.nbar0, self.rows.last());
        self.rows.push(row);
    }

    pub fn nbar0(&self) -> f64 {
        self.nbar0
    }

    pub fn rows(&self) -> &[SeriesRow] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [SeriesRow] {
        &mut self.rows
    }

    pub fn first(&self) -> &SeriesRow {
        &self.rows[0]
    }

    pub fn last(&self) -> &SeriesRow {
        self.rows.last().expect("series always holds the initial row")
    }

    /// Checks the structural invariants: increasing time, nondecreasing
    /// accumulators, finite entries.
    pub fn is_consistent(&self) -> bool {
        self.rows.iter().all(|r| r.to_array().iter().all(|v| v.is_finite()))
            && self.rows.windows(2).all(|w| {
                w[1].t > w[0].t
                    && w[1].d_c >= w[0].d_c
                    && w[1].d_n >= w[0].d_n
                    && w[1].d_u >= w[0].d_u
                    && w[1].entropy_time_integral >= w[0].entropy_time_integral
            })
    }

    /// CSV with a header row and every value at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = SERIES_COLUMNS.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.to_array().iter().map(|v| format!("{v:.16e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Inverse of [`to_csv`](Self::to_csv); the entropy normalization is
    /// recovered from the first mass entry.
    pub fn parse_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty file")?;
        if header.split(',').ne(SERIES_COLUMNS.iter().copied()) {
            return Err(format!("unexpected header {header:?}"));
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("row {}: {e}", k + 1))?;
            let arr: [f64; 14] = vals
                .try_into()
                .map_err(|_| format!("row {}: expected 14 columns", k + 1))?;
            rows.push(SeriesRow::from_array(arr));
        }
        if rows.is_empty() {
            return Err("no data rows".into());
        }
        Ok(Self {
            nbar0: rows[0].mass,
            rows,
        })
    }
}

/// Where a constant in a bound comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Computed from the configuration (initial data, model choice).
    Config,
    /// Closed form.
    Analytic,
    /// Calibrated over the Trudinger-Moser test family.
    Calibrated,
    /// Measured on the trajectory itself.
    Measured,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::Config => "config",
            Provenance::Analytic => "analytic",
            Provenance::Calibrated => "calibrated",
            Provenance::Measured => "measured",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constant {
    pub name: &'static str,
    pub value: f64,
    pub provenance: Provenance,
}

/// One verdict: `pass` iff `margin >= -TOL_REPORT · |rhs|`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckEntry {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub constants: Vec<Constant>,
}

impl CheckEntry {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, constants: Vec<Constant>) -> Self {
        let margin = rhs - lhs;
        let pass = lhs.is_finite() && rhs.is_finite() && margin >= -TOL_REPORT * rhs.abs();
        Self {
            name: name.into(),
            lhs,
            rhs,
            margin,
            pass,
            constants,
        }
    }

    /// `name  lhs  rhs  margin  PASS|FAIL`, tab separated.
    pub fn line(&self) -> String {
        format!(
            "{}\t{:.16e}\t{:.16e}\t{:.16e}\t{}",
            self.name,
            self.lhs,
            self.rhs,
            self.margin,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn k(name: &'static str, value: f64, provenance: Provenance) -> Constant {
    Constant {
        name,
        value,
        provenance,
    }
}

/// Largest relative drift of the mass from its initial value.
pub fn check_mass(series: &FunctionalSeries) -> CheckEntry {
    let m0 = series.first().mass;
    let drift = series
        .rows()
        .iter()
        .map(|r| (r.mass - m0).abs() / m0)
        .fold(0.0, f64::max);
    CheckEntry::new(
        "mass_conservation",
        drift,
        DRIFT_TOL,
        vec![k("mass0", m0, Provenance::Config)],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    One,
    Two,
    Infinity,
}

impl Exponent {
    fn pick(&self, r: &SeriesRow) -> f64 {
        match self {
            Exponent::One => r.c_l1,
            Exponent::Two => r.c_l2,
            Exponent::Infinity => r.c_linf,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Exponent::One => "1",
            Exponent::Two => "2",
            Exponent::Infinity => "inf",
        }
    }
}

/// Largest relative increase `(‖c(t)‖ - ‖c(s)‖)/‖c(s)‖` over `s <= t`;
/// passes when it stays below [`DRIFT_TOL`].
pub fn check_c_monotone(series: &FunctionalSeries, p: Exponent) -> CheckEntry {
    let mut worst = 0.0f64;
    let mut running_min = f64::INFINITY;
    for r in series.rows() {
        let v = p.pick(r);
        if running_min.is_finite() {
            let inc = v - running_min;
            if inc > 0.0 {
                let rel = if running_min > 0.0 {
                    inc / running_min
                } else {
                    f64::INFINITY
                };
                worst = worst.max(rel);
            }
        }
        running_min = running_min.min(v);
    }
    CheckEntry::new(format!("c_norm_nonincreasing_p{}", p.label()), worst, DRIFT_TOL, vec![])
}

/// `D_c(T) <= ½∫c₀²`.
pub fn check_grad_c_budget(series: &FunctionalSeries, slack: f64) -> CheckEntry {
    let c0_sq = series.first().c_l2.powi(2);
    CheckEntry::new(
        "grad_c_dissipation_budget",
        series.last().d_c,
        slack * 0.5 * c0_sq,
        vec![k("int_c0_sq", c0_sq, Provenance::Config)],
    )
}

/// Right-hand side of the weighted gradient budget,
/// `2∫n₀ + S₀(‖c₀‖∞)² ∫c₀²`.
pub fn grad_n_budget_bound(series: &FunctionalSeries, s0_at_c0max: f64) -> f64 {
    let r = series.first();
    2.0 * r.mass + s0_at_c0max * s0_at_c0max * r.c_l2 * r.c_l2
}

/// `D_n(T) <= 2∫n₀ + S₀(‖c₀‖∞)² ∫c₀²`.
pub fn check_grad_n_budget(series: &FunctionalSeries, s0_at_c0max: f64, slack: f64) -> CheckEntry {
    CheckEntry::new(
        "weighted_grad_n_budget",
        series.last().d_n,
        slack * grad_n_budget_bound(series, s0_at_c0max),
        vec![k("S0", s0_at_c0max, Provenance::Config)],
    )
}

/// `∫₀ᵀ E <= (K₂/2π + K₁ T) ∫(n₀+1)` with `K₂` the weighted gradient budget.
pub fn check_nlogn(series: &FunctionalSeries, k1: Option<f64>, k2: f64, slack: f64) -> Result<CheckEntry> {
    let k1 = k1.ok_or(Error::MissingCalibration)?;
    let t = series.last().t;
    let m = series.first().mass + 1.0;
    Ok(CheckEntry::new(
        "nlogn_time_integral",
        series.last().entropy_time_integral,
        slack * (k2 / (2.0 * PI) + k1 * t) * m,
        vec![
            k("K1", k1, Provenance::Calibrated),
            k("K2", k2, Provenance::Config),
            k("T", t, Provenance::Config),
        ],
    ))
}

/// Per-row form `E(t) <= (1/2π)∫(n+1) · ∫|∇n|²/(n+1)² + K₁∫(n+1)`; the
/// entry reports the row with the smallest relative margin.
pub fn check_nlogn_pointwise(series: &FunctionalSeries, k1: Option<f64>, slack: f64) -> Result<CheckEntry> {
    let k1 = k1.ok_or(Error::MissingCalibration)?;
    let mut worst: Option<(f64, f64, f64)> = None;
    for r in series.rows() {
        let m = r.mass + 1.0;
        let rhs = slack * (m * r.grad_n_weighted / (2.0 * PI) + k1 * m);
        let rel = (rhs - r.entropy) / rhs.abs().max(f64::MIN_POSITIVE);
        if worst.is_none_or(|w| rel < w.0) {
            worst = Some((rel, r.entropy, rhs));
        }
    }
    let (_, lhs, rhs) = worst.expect("series always holds the initial row");
    Ok(CheckEntry::new(
        "nlogn_pointwise_worst_time",
        lhs,
        rhs,
        vec![k("K1", k1, Provenance::Calibrated)],
    ))
}

/// Constants of the velocity energy bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConstants {
    /// `2‖∇φ‖∞² + 2‖H_φ‖∞² C_p²`
    pub k2: f64,
    /// `(8π / 2K₂) (∫(n₀+1))⁻¹`
    pub k3: f64,
    /// measured `∫₀ᵀ E`
    pub k4: f64,
    /// `(2/K₃)(K₄ + K₁ T ∫(n₀+1))`
    pub k5: f64,
}

pub fn energy_k2(potential: PotentialKind) -> f64 {
    let cp = POINCARE_UNIT_SQUARE;
    2.0 * potential.grad_sup().powi(2) + 2.0 * potential.hessian_sup().powi(2) * cp * cp
}

/// `K₃` from the potential and the initial mass. A potential with zero
/// gradient and Hessian gives `K₂ = 0`; then the entropy term carries no
/// weight and `K₃ = ∞`.
pub fn energy_k3(potential: PotentialKind, mass0: f64) -> f64 {
    8.0 * PI / (2.0 * energy_k2(potential)) / (mass0 + 1.0)
}

pub fn energy_constants(series: &FunctionalSeries, potential: PotentialKind, k1: f64) -> EnergyConstants {
    let m = series.first().mass + 1.0;
    let k2 = energy_k2(potential);
    let k3 = energy_k3(potential, series.first().mass);
    let k4 = series.last().entropy_time_integral;
    let t = series.last().t;
    let k5 = if k3.is_infinite() {
        0.0
    } else {
        (2.0 / k3) * (k4 + k1 * t * m)
    };
    EnergyConstants { k2, k3, k4, k5 }
}

/// `max_t (K(t) + D_u(t)) <= ∫|u₀|² + K₅(T)`.
pub fn check_energy_u(series: &FunctionalSeries, k: Option<EnergyConstants>, slack: f64) -> Result<CheckEntry> {
    let kc = k.ok_or(Error::MissingCalibration)?;
    let lhs = series
        .rows()
        .iter()
        .map(|r| r.kinetic + r.d_u)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CheckEntry::new(
        "velocity_energy",
        lhs,
        series.first().kinetic + slack * kc.k5,
        vec![
            self::k("K2u", kc.k2, Provenance::Analytic),
            self::k("K3", kc.k3, Provenance::Config),
            self::k("K4", kc.k4, Provenance::Measured),
            self::k("K5", kc.k5, Provenance::Measured),
        ],
    ))
}

/// `sup_t ‖u(t)‖₂`, bounded through the energy inequality by
/// `(∫|u₀|² + K₅(T))^{1/2}`.
pub fn check_velocity_l2(series: &FunctionalSeries, k: Option<EnergyConstants>, slack: f64) -> Result<CheckEntry> {
    let kc = k.ok_or(Error::MissingCalibration)?;
    let lhs = series.rows().iter().map(|r| r.kinetic.sqrt()).fold(0.0, f64::max);
    Ok(CheckEntry::new(
        "velocity_l2_sup",
        lhs,
        (series.first().kinetic + slack * kc.k5).sqrt(),
        vec![self::k("K5", kc.k5, Provenance::Measured)],
    ))
}

/// All verdicts of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    /// One entry per bound, in a fixed order.
    pub entries: Vec<CheckEntry>,
    /// Consistency checks that are not bounds themselves.
    pub cross_checks: Vec<CheckEntry>,
    pub cadence: f64,
    pub slack_factor: f64,
    pub k1_seed: Option<u64>,
}

impl InequalityReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().chain(&self.cross_checks).all(|e| e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().chain(&self.cross_checks).find(|e| e.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# output cadence {:.16e}", self.cadence);
        let _ = writeln!(s, "# slack factor {}", self.slack_factor);
        if let Some(seed) = self.k1_seed {
            let _ = writeln!(s, "# K1 calibrated with seed {seed}");
        }
        for e in self.entries.iter().chain(&self.cross_checks) {
            for c in &e.constants {
                let _ = writeln!(
                    s,
                    "# {} {} = {:.16e} ({})",
                    e.name,
                    c.name,
                    c.value,
                    c.provenance.label()
                );
            }
        }
        for e in &self.entries {
            s.push_str(&e.line());
            s.push('\n');
        }
        for e in &self.cross_checks {
            s.push_str("cross-check ");
            s.push_str(&e.line());
            s.push('\n');
        }
        s
    }
}

/// Inputs from outside the trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assessment {
    /// Calibrated Trudinger-Moser constant and its family seed.
    pub k1: Option<(f64, u64)>,
    pub slack_factor: f64,
}

/// Evaluates every bound on a finished trajectory.
pub fn assess(traj: &Trajectory, input: Assessment) -> Result<InequalityReport> {
    let series = &traj.series;
    let slack = input.slack_factor;
    let model = traj.config.model();
    let c0max = series.first().c_linf;
    let s0 = model.envelope().eval(c0max);
    let k1 = input.k1.map(|(v, _)| v);
    let k2 = grad_n_budget_bound(series, s0);
    let energy = k1.map(|k1| energy_constants(series, model.potential, k1));
    let entries = vec![
        check_mass(series),
        check_c_monotone(series, Exponent::One),
        check_c_monotone(series, Exponent::Two),
        check_c_monotone(series, Exponent::Infinity),
        check_grad_c_budget(series, slack),
        check_grad_n_budget(series, s0, slack),
        check_nlogn(series, k1, k2, slack)?,
        check_velocity_l2(series, energy, slack)?,
        check_energy_u(series, energy, slack)?,
    ];
    let cross_checks = vec![check_nlogn_pointwise(series, k1, slack)?];
    Ok(InequalityReport {
        entries,
        cross_checks,
        cadence: traj.config.diag_interval,
        slack_factor: slack,
        k1_seed: input.k1.map(|(_, s)| s),
    })
}
