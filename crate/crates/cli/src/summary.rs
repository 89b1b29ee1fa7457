//! `report`: one human-readable summary of every result file in a directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chns_core::diagnostics::FunctionalSeries;
use chns_core::epsilon::parse_study_csv;
use chns_core::io::MANIFEST_FILE;
use chns_core::trudinger_moser::CalibrationResult;
use chns_core::weakform::{ResidualTable, RowKind, Verdict};

use crate::commands::{
    Failure, Outcome, DIAGNOSTICS_FILE, EPS_FILE, EPS_MEMBERS_FILE, MT_FILE, REPORT_FILE, WEAKFORM_FILE,
};

/// Report topics and the check-name prefixes filed under each.
const TOPICS: &[(&str, &[&str])] = &[
    ("Mass conservation", &["mass_conservation"]),
    ("Attractant L^p norms", &["c_norm_nonincreasing"]),
    ("Attractant gradient dissipation", &["grad_c_dissipation_budget"]),
    ("Weighted cell-density gradient", &["weighted_grad_n_budget"]),
    ("Entropy bound (n log n)", &["nlogn"]),
    ("Fluid energy", &["velocity"]),
];

/// A parsed `report.txt` line.
struct Check {
    name: String,
    lhs: String,
    rhs: String,
    margin: String,
    pass: bool,
    cross: bool,
}

fn parse_report(text: &str) -> Vec<Check> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| {
            let (cross, body) = match l.strip_prefix("cross-check ") {
                Some(rest) => (true, rest),
                None => (false, l),
            };
            let f: Vec<&str> = body.split('\t').collect();
            (f.len() == 5).then(|| Check {
                name: f[0].to_string(),
                lhs: f[1].to_string(),
                rhs: f[2].to_string(),
                margin: f[3].to_string(),
                pass: f[4] == "PASS",
                cross,
            })
        })
        .collect()
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn read(dir: &Path, name: &str) -> Result<Option<String>, Failure> {
    let path = dir.join(name);
    if !path.is_file() {
        return Ok(None);
    }
    fs::read_to_string(&path)
        .map(Some)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn malformed(name: &str, why: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{name}: {why}"))
}

#[derive(Default)]
struct Tally {
    judged: usize,
    failed: usize,
}

impl Tally {
    fn add(&mut self, pass: bool) -> &'static str {
        self.judged += 1;
        if !pass {
            self.failed += 1;
        }
        verdict(pass)
    }
}

pub fn report(dir: &Path) -> Outcome {
    let checks = read(dir, REPORT_FILE)?;
    let mt = read(dir, MT_FILE)?;
    let weak = read(dir, WEAKFORM_FILE)?;
    let eps = read(dir, EPS_FILE)?;
    let members = read(dir, EPS_MEMBERS_FILE)?;
    let series = read(dir, DIAGNOSTICS_FILE)?;
    let manifest = read(dir, MANIFEST_FILE)?;
    if [&checks, &mt, &weak, &eps, &series, &manifest]
        .iter()
        .all(|f| f.is_none())
    {
        return Err(Failure::Runtime(format!("no results found in {}", dir.display())));
    }

    let mut s = String::new();
    let mut tally = Tally::default();
    let _ = writeln!(s, "Results in {}", dir.display());

    if manifest.is_some() || series.is_some() {
        let _ = writeln!(s, "\n[Trajectory]");
        if let Some(m) = &manifest {
            let status = m.lines().find_map(|l| l.strip_prefix("status ")).unwrap_or("unknown");
            let snaps = m.lines().filter(|l| l.starts_with("snapshot ")).count();
            let _ = writeln!(s, "  status: {status}");
            let _ = writeln!(s, "  snapshots: {snaps}");
            if status != "complete" {
                tally.add(false);
            }
        }
        if let Some(text) = &series {
            let fs = FunctionalSeries::parse_csv(text).map_err(|e| malformed(DIAGNOSTICS_FILE, e))?;
            let (first, last) = (fs.first(), fs.last());
            let _ = writeln!(
                s,
                "  diagnostic rows: {} (t = {:e} .. {:e})",
                fs.rows().len(),
                first.t,
                last.t
            );
            let _ = writeln!(s, "  mass: {:.16e} -> {:.16e}", first.mass, last.mass);
        }
    }

    if let Some(text) = &checks {
        let parsed = parse_report(text);
        if parsed.is_empty() {
            return Err(malformed(REPORT_FILE, "no check lines"));
        }
        let mut used = vec![false; parsed.len()];
        let other: &[(&str, &[&str])] = &[("Other checks", &[""])];
        for (topic, prefixes) in TOPICS.iter().chain(other) {
            let mut block = String::new();
            for (k, c) in parsed.iter().enumerate() {
                if used[k] || !prefixes.iter().any(|p| c.name.starts_with(p)) {
                    continue;
                }
                used[k] = true;
                let label = if c.cross {
                    format!("{} (cross-check)", c.name)
                } else {
                    c.name.clone()
                };
                let v = tally.add(c.pass);
                let _ = writeln!(block, "  {v}  {label}: lhs {} rhs {} margin {}", c.lhs, c.rhs, c.margin);
            }
            if !block.is_empty() {
                let _ = writeln!(s, "\n[{topic}]");
                s.push_str(&block);
            }
        }
    }

    if let Some(text) = &mt {
        let (k1, c, seed) = CalibrationResult::parse_constants(text).map_err(|e| malformed(MT_FILE, e))?;
        let get = |key: &str| {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .map(|(_, v)| v.trim().to_string())
                .unwrap_or_default()
        };
        let num = |key: &str| get(key).parse::<f64>().unwrap_or(f64::NAN);
        let pass = c.is_finite()
            && num("min_margin_first") >= 0.0
            && num("min_margin_second") >= 0.0
            && num("jensen_max") <= 1e-12;
        let _ = writeln!(s, "\n[Trudinger-Moser calibration]");
        let _ = writeln!(
            s,
            "  {}  calibrated constant C = {c:e} (seed {seed}, {} members)",
            tally.add(pass),
            get("count")
        );
        let _ = writeln!(s, "  exponential integral sup K1 = {k1:e}");
        let _ = writeln!(s, "  worst member: {}", get("worst_member"));
        let _ = writeln!(
            s,
            "  margins: first form {}, second form {}; Jensen {}",
            get("min_margin_first"),
            get("min_margin_second"),
            get("jensen_max")
        );
    }

    if let Some(text) = &weak {
        let table = ResidualTable::parse_csv(text).map_err(|e| malformed(WEAKFORM_FILE, e))?;
        let _ = writeln!(s, "\n[Generalized solution: weak-form identities]");
        for kind in [
            RowKind::ResidualC,
            RowKind::ResidualU,
            RowKind::GapLnN,
            RowKind::GapShrink,
        ] {
            let rows: Vec<_> = table.rows.iter().filter(|r| r.kind == kind).collect();
            if rows.is_empty() {
                continue;
            }
            let count = |v: Verdict| rows.iter().filter(|r| r.verdict == v).count();
            let (pass, fail) = (count(Verdict::Pass), count(Verdict::Fail));
            let _ = writeln!(
                s,
                "  {}  {}: {pass} pass, {fail} fail, {} info",
                tally.add(fail == 0),
                kind.name(),
                count(Verdict::Info)
            );
            for r in rows.iter().filter(|r| r.verdict == Verdict::Fail) {
                let _ = writeln!(
                    s,
                    "        failed: {} level {} value {:e} tol {:e}",
                    r.test_id, r.level, r.value, r.tol
                );
            }
        }
    }

    if let Some(text) = &eps {
        let (table, ui) = parse_study_csv(text).map_err(|e| malformed(EPS_FILE, e))?;
        let _ = writeln!(s, "\n[Regularization family]");
        let _ = writeln!(s, "  eps_high -> eps_low: L1 n, L2 c, L2 u, L2 grad c");
        for r in &table.rows {
            let _ = writeln!(
                s,
                "    {:e} -> {:e}: {:e}, {:e}, {:e}, {:e}",
                r.eps_high, r.eps_low, r.l1_n, r.l2_c, r.l2_u, r.l2_grad_c
            );
        }
        let _ = writeln!(
            s,
            "  {}  differences decrease along the family",
            tally.add(table.is_monotone())
        );
        let _ = writeln!(
            s,
            "  {}  uniform integrability: {:e} <= {:e} (worst eps {:e})",
            tally.add(ui.pass),
            ui.value,
            ui.bound,
            ui.worst_eps
        );
        if let Some(m) = &members {
            let blocks = m.lines().filter(|l| l.starts_with("## eps")).count();
            let broken = m
                .lines()
                .filter(|l| l.starts_with("failed:") || l.starts_with("truncated:") || l.ends_with("\tFAIL"))
                .count();
            let _ = writeln!(
                s,
                "  {}  member checks: {blocks} members, {broken} failing lines",
                tally.add(broken == 0)
            );
        }
    }

    let _ = writeln!(
        s,
        "\nOverall: {} ({} verdicts, {} failed)",
        verdict(tally.failed == 0),
        tally.judged,
        tally.failed
    );
    print!("{s}");
    Ok(tally.failed == 0)
}
