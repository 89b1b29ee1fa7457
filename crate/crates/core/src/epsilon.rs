//! Behavior of the regularized solutions as `eps` decreases: Cauchy
//! differences between adjacent members of a geometric family and the
//! uniform-integrability functional of the cell density.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use crate::config::RunConfig;
use crate::diagnostics::{assess, grad_n_budget_bound, Assessment, InequalityReport};
use crate::error::{Error, Result};
use crate::grid::{grad_neumann, integrate, norm, NormKind};
use crate::solver::{run, Trajectory};

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "CHNS_THREADS";

pub const EPS_COLUMNS: &str = "eps_low,eps_high,L1_n,L2_c,L2_u,L2_grad_c";

/// Workers for `jobs` independent runs: one per job, capped by
/// `CHNS_THREADS` when it holds a positive integer.
pub fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    jobs.max(1).min(cap.unwrap_or(usize::MAX))
}

/// One family member; a solver failure is kept here instead of aborting
/// the siblings.
#[derive(Debug, Clone)]
pub struct Member {
    pub eps: f64,
    pub outcome: std::result::Result<Trajectory, String>,
}

impl Member {
    /// The trajectory if the run reached its horizon.
    pub fn complete(&self) -> Option<&Trajectory> {
        self.outcome.as_ref().ok().filter(|t| t.is_complete())
    }
}

/// Runs `cfg` once per entry of `cfg.eps_list`, concurrently, and returns
/// the members in list order.
pub fn run_family(cfg: &RunConfig) -> Vec<Member> {
    let eps = &cfg.eps_list;
    let slots: Vec<Mutex<Option<Member>>> = eps.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    thread::scope(|scope| {
        for _ in 0..worker_count(eps.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&e) = eps.get(k) else { break };
                let member_cfg = RunConfig { eps: e, ..cfg.clone() };
                let outcome = run(&member_cfg).map_err(|err| err.to_string());
                *slots[k].lock().expect("slot lock") = Some(Member { eps: e, outcome });
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every member ran"))
        .collect()
}

/// Space-time differences between two adjacent members.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyRow {
    pub eps_high: f64,
    pub eps_low: f64,
    /// `‖n - n'‖ in L¹(Ω×(0,T))`
    pub l1_n: f64,
    /// `‖c - c'‖ in L²(Ω×(0,T))`
    pub l2_c: f64,
    pub l2_u: f64,
    pub l2_grad_c: f64,
}

impl CauchyRow {
    pub fn values(&self) -> [f64; 4] {
        [self.l1_n, self.l2_c, self.l2_u, self.l2_grad_c]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CauchyTable {
    pub horizon: f64,
    pub rows: Vec<CauchyRow>,
}

impl CauchyTable {
    /// Every column strictly decreases down the table.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| {
            let (a, b) = (w[0].values(), w[1].values());
            a.iter().zip(&b).all(|(x, y)| y < x)
        })
    }
}

/// Trapezoid rule over `(t, value)` samples.
fn trapezoid(samples: &[(f64, f64)]) -> f64 {
    samples
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

/// Pairwise differences of one pair, by trapezoid over the shared
/// snapshot times in `[0, horizon]`.
pub fn pair_differences(a: &Trajectory, b: &Trajectory, horizon: f64) -> Result<CauchyRow> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch("family members use different grids".into()));
    }
    let take = |t: &Trajectory| -> Vec<usize> {
        (0..t.snapshots.len())
            .filter(|&k| t.snapshots[k].t <= horizon * (1.0 + 1e-12))
            .collect()
    };
    let (ka, kb) = (take(a), take(b));
    let same = ka.len() == kb.len()
        && ka
            .iter()
            .zip(&kb)
            .all(|(&i, &j)| a.snapshots[i].t.to_bits() == b.snapshots[j].t.to_bits());
    let covers = ka.last().is_some_and(|&k| a.snapshots[k].t >= horizon * (1.0 - 1e-12));
    if !same || !covers {
        return Err(Error::CadenceMismatch);
    }
    let mut n1 = Vec::new();
    let mut c2 = Vec::new();
    let mut u2 = Vec::new();
    let mut g2 = Vec::new();
    for (&i, &j) in ka.iter().zip(&kb) {
        let (sa, sb) = (&a.snapshots[i], &b.snapshots[j]);
        let t = sa.t;
        n1.push((t, norm(&sa.n.zip_map(&sb.n, |x, y| x - y), NormKind::L1)));
        c2.push((t, integrate(&sa.c.zip_map(&sb.c, |x, y| (x - y) * (x - y)))));
        u2.push((t, sa.u.zip_map(&sb.u, |x, y| x - y).l2_sq()));
        let dg = grad_neumann(&sa.c).zip_map(&grad_neumann(&sb.c), |x, y| x - y);
        g2.push((t, dg.l2_sq()));
    }
    Ok(CauchyRow {
        eps_high: a.config.eps.max(b.config.eps),
        eps_low: a.config.eps.min(b.config.eps),
        l1_n: trapezoid(&n1),
        l2_c: trapezoid(&c2).sqrt(),
        l2_u: trapezoid(&u2).sqrt(),
        l2_grad_c: trapezoid(&g2).sqrt(),
    })
}

/// Differences of every adjacent pair, in family order.
pub fn cauchy_table(trajectories: &[&Trajectory], horizon: f64) -> Result<CauchyTable> {
    let rows = trajectories
        .windows(2)
        .map(|w| pair_differences(w[0], w[1], horizon))
        .collect::<Result<Vec<_>>>()?;
    Ok(CauchyTable { horizon, rows })
}

/// Largest `∫₀ᵀ∫ G(n_ε)` over the family, `G(s) = (s+1) ln((s+1)/(n̄₀+1))`,
/// against the time-integrated entropy bound `(K₂/2π + K₁T)∫(n₀+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformIntegrability {
    pub value: f64,
    pub worst_eps: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `∫₀ᵀ∫G(n)` from the functional series (diagnostic cadence).
pub fn entropy_integral(traj: &Trajectory, horizon: f64) -> f64 {
    let samples: Vec<(f64, f64)> = traj
        .series
        .rows()
        .iter()
        .filter(|r| r.t <= horizon * (1.0 + 1e-12))
        .map(|r| (r.t, r.entropy))
        .collect();
    trapezoid(&samples)
}

/// The bound uses the first member's initial data and envelope, which the
/// family shares.
pub fn uniform_integrability(trajectories: &[&Trajectory], horizon: f64, k1: f64) -> UniformIntegrability {
    let mut value = 0.0;
    let mut worst_eps = f64::NAN;
    for t in trajectories {
        let v = entropy_integral(t, horizon);
        if worst_eps.is_nan() || v > value {
            value = v;
            worst_eps = t.config.eps;
        }
    }
    let bound = match trajectories.first() {
        Some(t) => {
            let series = &t.series;
            let s0 = t.config.model().envelope().eval(series.first().c_linf);
            let k2 = grad_n_budget_bound(series, s0);
            (k2 / (2.0 * PI) + k1 * horizon) * (series.first().mass + 1.0)
        }
        None => 0.0,
    };
    UniformIntegrability {
        value,
        worst_eps,
        bound,
        pass: value <= bound,
    }
}

/// Everything the `eps-study` command reports.
#[derive(Debug, Clone)]
pub struct EpsStudy {
    pub members: Vec<Member>,
    /// inequality reports of the completed members, same order
    pub reports: Vec<Option<InequalityReport>>,
    pub table: CauchyTable,
    pub ui: UniformIntegrability,
}

impl EpsStudy {
    pub fn all_pass(&self) -> bool {
        self.members.iter().all(|m| m.complete().is_some())
            && self.reports.iter().all(|r| r.as_ref().is_some_and(|r| r.all_pass()))
            && self.table.is_monotone()
            && self.ui.pass
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{EPS_COLUMNS}\n");
        for r in &self.table.rows {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.eps_low, r.eps_high, r.l1_n, r.l2_c, r.l2_u, r.l2_grad_c
            );
        }
        let _ = writeln!(
            s,
            "uniform_integrability,{:.16e},{:.16e},{:.16e},{},",
            self.ui.value,
            self.ui.bound,
            self.ui.worst_eps,
            if self.ui.pass { "PASS" } else { "FAIL" }
        );
        s
    }

    /// Per-member verdicts, one block per `eps`.
    pub fn members_text(&self) -> String {
        let mut s = String::new();
        for (m, r) in self.members.iter().zip(&self.reports) {
            let _ = writeln!(s, "## eps = {:.16e}", m.eps);
            match (&m.outcome, r) {
                (Err(e), _) => {
                    let _ = writeln!(s, "failed: {e}");
                }
                (Ok(t), _) if !t.is_complete() => {
                    let _ = writeln!(s, "truncated: {}", t.failure.as_deref().unwrap_or(""));
                }
                (Ok(_), Some(rep)) => s.push_str(&rep.to_text()),
                (Ok(_), None) => {
                    let _ = writeln!(s, "no report");
                }
            }
        }
        s
    }
}

/// Reads `eps-study.csv` back. The horizon is not stored in the file and
/// comes back as NaN.
pub fn parse_study_csv(text: &str) -> std::result::Result<(CauchyTable, UniformIntegrability), String> {
    let mut lines = text.lines();
    if lines.next() != Some(EPS_COLUMNS) {
        return Err("unexpected header".into());
    }
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
    let mut rows = Vec::new();
    let mut ui = None;
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == "uniform_integrability" {
            if f.len() < 5 {
                return Err("short footer".into());
            }
            ui = Some(UniformIntegrability {
                value: num(f[1])?,
                bound: num(f[2])?,
                worst_eps: num(f[3])?,
                pass: f[4] == "PASS",
            });
        } else if f.len() == 6 {
            rows.push(CauchyRow {
                eps_low: num(f[0])?,
                eps_high: num(f[1])?,
                l1_n: num(f[2])?,
                l2_c: num(f[3])?,
                l2_u: num(f[4])?,
                l2_grad_c: num(f[5])?,
            });
        } else {
            return Err(format!("bad row: {line}"));
        }
    }
    let ui = ui.ok_or("missing uniform_integrability footer")?;
    Ok((
        CauchyTable {
            horizon: f64::NAN,
            rows,
        },
        ui,
    ))
}

/// Runs the family of `cfg.eps_list` up to `cfg.t_end`, judges every
/// member with the same constants and tabulates the differences.
pub fn eps_study(cfg: &RunConfig, k1: Option<(f64, u64)>) -> Result<EpsStudy> {
    let k1v = k1.ok_or(Error::MissingCalibration)?.0;
    let members = run_family(cfg);
    let input = Assessment {
        k1,
        slack_factor: cfg.slack_factor(),
    };
    let reports = members
        .iter()
        .map(|m| m.complete().map(|t| assess(t, input)).transpose())
        .collect::<Result<Vec<_>>>()?;
    let done: Vec<&Trajectory> = members.iter().filter_map(Member::complete).collect();
    let table = cauchy_table(&done, cfg.t_end)?;
    let ui = uniform_integrability(&done, cfg.t_end, k1v);
    Ok(EpsStudy {
        members,
        reports,
        table,
        ui,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SensitivityChoice;
    use crate::grid::{Grid, ScalarField, VectorField};
    use crate::model::ModelParams;
    use crate::solver::{State, StepControl, System};

    fn small(eps_list: Vec<f64>) -> RunConfig {
        RunConfig {
            nx: 12,
            ny: 12,
            t_end: 0.02,
            snapshot_interval: 0.005,
            diag_interval: 0.005,
            eps_list,
            ..RunConfig::default()
        }
    }

    #[test]
    fn singleton_family_matches_run() {
        let cfg = small(vec![0.3]);
        let fam = run_family(&cfg);
        assert_eq!(fam.len(), 1);
        let direct = run(&RunConfig { eps: 0.3, ..cfg }).unwrap();
        let t = fam[0].complete().unwrap();
        assert_eq!(t.snapshots, direct.snapshots);
        assert_eq!(t.series.to_csv(), direct.series.to_csv());
    }

    #[test]
    fn duplicated_eps_gives_zero_differences() {
        let cfg = small(vec![0.2]);
        let a = run(&RunConfig {
            eps: 0.2,
            ..cfg.clone()
        })
        .unwrap();
        let table = cauchy_table(&[&a, &a.clone()], cfg.t_end).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].values(), [0.0; 4]);
    }

    #[test]
    fn zero_sensitivity_makes_eps_irrelevant() {
        let cfg = RunConfig {
            sensitivity: SensitivityChoice::Zero,
            ..small(vec![0.5, 0.1])
        };
        let fam = run_family(&cfg);
        let t: Vec<&Trajectory> = fam.iter().map(|m| m.complete().unwrap()).collect();
        let table = cauchy_table(&t, cfg.t_end).unwrap();
        assert!(table.rows[0].values().iter().all(|v| *v < 1e-14), "{:?}", table.rows);
    }

    #[test]
    fn saturated_cutoff_equals_zero_sensitivity() {
        // χ_ε vanishes once ε n >= 2
        let g = Grid::square(12);
        let eps = 0.8;
        let state = State {
            t: 0.0,
            n: ScalarField::from_fn(g, |x, y| 3.0 + x * y),
            c: ScalarField::from_fn(g, |x, y| 0.5 + 0.3 * (3.0 * x).cos() * y),
            u: VectorField::zeros_no_slip(g),
            p: ScalarField::zeros(g),
        };
        let full = System::new(g, ModelParams::default(), eps, StepControl::default()).unwrap();
        let none = System::new(
            g,
            ModelParams {
                sensitivity: crate::model::Sensitivity::zero(),
                ..ModelParams::default()
            },
            eps,
            StepControl::default(),
        )
        .unwrap();
        assert_eq!(full.chemotactic_velocity(&state.n, &state.c).unwrap().max_abs(), 0.0);
        let a = full.advance(&state, 1e-3).unwrap();
        let b = none.advance(&state, 1e-3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cadence_mismatch_is_reported() {
        let a = run(&small(vec![0.2])).unwrap();
        let b = run(&RunConfig {
            snapshot_interval: 0.01,
            ..small(vec![0.2])
        })
        .unwrap();
        assert!(matches!(pair_differences(&a, &b, 0.02), Err(Error::CadenceMismatch)));
    }

    #[test]
    fn pair_differences_are_symmetric() {
        let cfg = small(vec![0.4, 0.1]);
        let fam = run_family(&cfg);
        let (a, b) = (fam[0].complete().unwrap(), fam[1].complete().unwrap());
        let ab = pair_differences(a, b, cfg.t_end).unwrap();
        let ba = pair_differences(b, a, cfg.t_end).unwrap();
        assert_eq!(ab, ba);
        assert_eq!((ab.eps_high, ab.eps_low), (0.4, 0.1));
        assert!(ab.values().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn uniform_density_has_zero_functional_and_rescaling_breaks_the_bound() {
        let cfg = RunConfig {
            initial: crate::solver::InitialData::Uniform,
            ..small(vec![0.2])
        };
        let t = run(&RunConfig {
            eps: 0.2,
            ..cfg.clone()
        })
        .unwrap();
        let ui = uniform_integrability(&[&t], cfg.t_end, 0.05);
        assert_eq!(ui.value, 0.0);
        assert!(ui.pass);

        let long = RunConfig {
            t_end: 0.5,
            snapshot_interval: 0.05,
            diag_interval: 0.05,
            ..small(vec![0.2])
        };
        let d = run(&long).unwrap();
        let ok = uniform_integrability(&[&d], 0.5, 0.05);
        assert!(ok.pass && ok.value > 0.0);
        // ×10 after the fact: the entropy grows, the bound keeps the original data
        let mut boosted = d.clone();
        let nbar0 = boosted.series.nbar0();
        for (row, s) in boosted.series.rows_mut().iter_mut().zip(d.series.rows()) {
            let state = d
                .snapshots
                .iter()
                .find(|x| x.t == s.t)
                .cloned()
                .unwrap_or_else(|| d.snapshots[0].clone());
            let n10 = state.n.map(|v| 10.0 * v);
            row.entropy = crate::diagnostics::entropy(&n10, nbar0);
        }
        let bad = uniform_integrability(&[&boosted], 0.5, 0.05);
        assert!(!bad.pass, "{bad:?}");
    }

    #[test]
    fn worker_count_respects_jobs() {
        assert!(worker_count(4) <= 4);
        assert!(worker_count(0) >= 1);
    }

    #[test]
    fn study_csv_has_footer() {
        let cfg = small(vec![0.4, 0.2, 0.1]);
        let st = eps_study(&cfg, Some((0.05, 7))).unwrap();
        let csv = st.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("uniform_integrability,"));
        assert_eq!(st.reports.len(), 3);
        assert!(st.members_text().contains("## eps = 1.0000000000000001e-1"));
        let (table, ui) = parse_study_csv(&csv).unwrap();
        assert_eq!(table.rows, st.table.rows);
        assert_eq!(ui, st.ui);
    }

    #[test]
    fn study_csv_rejects_missing_footer() {
        let text = format!("{EPS_COLUMNS}\n0.1,0.2,1,1,1,1\n");
        assert!(parse_study_csv(&text).is_err());
        assert!(parse_study_csv("a,b\n").is_err());
    }
}
