use std::fs;
use std::path::{Path, PathBuf};

use chns_core::diagnostics::{assess, Assessment};
use chns_core::epsilon;
use chns_core::io::{read_trajectory, write_trajectory};
use chns_core::trudinger_moser::{calibrate_for_run, CalibrationResult};
use chns_core::weakform::{coupled_study, heat_study, level_configs, run_study};
use chns_core::{run, Error, RunConfig};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const MT_FILE: &str = "mt-calibration.txt";
pub const WEAKFORM_FILE: &str = "weakform.csv";
pub const EPS_FILE: &str = "eps-study.csv";
pub const EPS_MEMBERS_FILE: &str = "eps-study-members.txt";

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

/// `Ok(true)` when every verdict passed.
pub type Outcome = Result<bool, Failure>;

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn out_dir(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf, Failure> {
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Calibrated constant and seed: read from `mt-calibration.txt` in the
/// output directory when present, computed in memory otherwise.
fn calibration(cfg: &RunConfig, dir: &Path) -> Result<(f64, u64), Failure> {
    let path = dir.join(MT_FILE);
    if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        let (_, c, seed) = CalibrationResult::parse_constants(&text)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        return Ok((c, seed));
    }
    eprintln!("no {MT_FILE} in {}; calibrating", dir.display());
    let cal = calibrate_for_run(cfg)?;
    Ok((cal.c_est, cal.seed))
}

pub fn simulate(config: &Path, out: Option<&Path>) -> Outcome {
    let cfg = load_config(config)?;
    let dir = out_dir(&cfg, out)?;
    let k1 = calibration(&cfg, &dir)?;
    let traj = run(&cfg)?;
    write_trajectory(&dir, &traj)?;
    write(&dir, DIAGNOSTICS_FILE, &traj.series.to_csv())?;
    let report = assess(
        &traj,
        Assessment {
            k1: Some(k1),
            slack_factor: cfg.slack_factor(),
        },
    )?;
    write(&dir, REPORT_FILE, &report.to_text())?;
    if let Some(msg) = &traj.failure {
        return Err(Failure::Runtime(format!(
            "run truncated at t = {}: {msg}",
            traj.series.last().t
        )));
    }
    eprintln!("{} steps, outputs in {}", traj.steps, dir.display());
    Ok(report.all_pass())
}

pub fn mt_check(config: &Path, out: Option<&Path>) -> Outcome {
    let cfg = load_config(config)?;
    let dir = out_dir(&cfg, out)?;
    let cal = calibrate_for_run(&cfg)?;
    write(&dir, MT_FILE, &cal.to_text())?;
    Ok(cal.passes())
}

pub fn weak_check(config: &Path, trajectory: &Path, out: Option<&Path>) -> Outcome {
    let cfg = load_config(config)?;
    let stored = read_trajectory(trajectory).map_err(|e| Failure::Runtime(format!("{}: {e}", trajectory.display())))?;
    let same = RunConfig {
        out_dir: cfg.out_dir.clone(),
        ..stored.config.clone()
    } == cfg;
    if !same {
        return Err(Failure::Config(format!(
            "{} was produced by a different configuration than {}",
            trajectory.display(),
            config.display()
        )));
    }
    if let Some(msg) = &stored.failure {
        return Err(Failure::Runtime(format!("stored trajectory is truncated: {msg}")));
    }
    level_configs(&cfg, cfg.t_end).map_err(|e| Failure::Config(format!("{}: {e}", config.display())))?;
    let dir = out_dir(&cfg, out)?;
    let mut table = run_study(&heat_study(&cfg), None)?;
    let coupled = run_study(&coupled_study(&cfg), Some(&stored.snapshots)).map_err(|e| match e {
        Error::CollarTooThin(_) => Failure::Config(format!(
            "{}: grid too coarse for the solenoidal tests: {e}",
            config.display()
        )),
        e => e.into(),
    })?;
    table.extend(coupled);
    write(&dir, WEAKFORM_FILE, &table.to_csv())?;
    Ok(table.all_pass())
}

pub fn eps_study(config: &Path, out: Option<&Path>) -> Outcome {
    let cfg = load_config(config)?;
    let dir = out_dir(&cfg, out)?;
    let k1 = calibration(&cfg, &dir)?;
    let study = epsilon::eps_study(&cfg, Some(k1))?;
    write(&dir, EPS_FILE, &study.to_csv())?;
    write(&dir, EPS_MEMBERS_FILE, &study.members_text())?;
    if study.members.iter().any(|m| m.complete().is_none()) {
        return Err(Failure::Runtime(format!(
            "some eps members did not finish; see {EPS_MEMBERS_FILE}"
        )));
    }
    Ok(study.all_pass())
}
