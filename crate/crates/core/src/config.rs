//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Every key is optional; an empty file yields [`RunConfig::default`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{Consumption, ModelParams, PotentialKind, Sensitivity};
use crate::solver::{InitialData, StepControl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SensitivityChoice {
    /// `a I + b J` with the rotational collar
    #[default]
    Rotational,
    Identity,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub t_end: f64,
    pub dt_max: f64,
    pub cfl: f64,
    pub theta: f64,
    pub poisson_tol: f64,
    pub poisson_max_iter: usize,
    pub eps: f64,
    pub sensitivity: SensitivityChoice,
    pub sens_a: f64,
    pub beta0: f64,
    pub delta_b: f64,
    pub consumption: Consumption,
    pub potential: PotentialKind,
    pub initial: InitialData,
    pub diag_interval: f64,
    pub snapshot_interval: f64,
    /// Multiply every bound by 1.1 to absorb coarse-grid discretization error.
    pub slack_mode: bool,
    pub mt_seed: u64,
    pub mt_count: usize,
    pub eps_list: Vec<f64>,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            t_end: 1.0,
            dt_max: 1e-2,
            cfl: 0.5,
            theta: 0.5,
            poisson_tol: 1e-11,
            poisson_max_iter: 20_000,
            eps: 0.1,
            sensitivity: SensitivityChoice::Rotational,
            sens_a: 1.0,
            beta0: 0.5,
            delta_b: 0.1,
            consumption: Consumption::Linear,
            potential: PotentialKind::Gravity,
            initial: InitialData::Default,
            diag_interval: 0.005,
            snapshot_interval: 0.02,
            slack_mode: false,
            mt_seed: 7,
            mt_count: 1000,
            eps_list: vec![0.2, 0.1, 0.05, 0.025],
            out_dir: "out".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IssueKind {
    UnknownKey,
    MissingValue,
    InvalidValue,
    OutOfRange,
    Duplicate,
    Syntax,
}

/// One problem found while parsing, tied to a 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: usize,
    pub kind: IssueKind,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            IssueKind::UnknownKey => "unknown key",
            IssueKind::MissingValue => "missing value",
            IssueKind::InvalidValue => "invalid value",
            IssueKind::OutOfRange => "out of range",
            IssueKind::Duplicate => "duplicate key",
            IssueKind::Syntax => "syntax error",
        };
        write!(f, "line {}: {tag}: {}", self.line, self.message)
    }
}

const KEYS: &[&str] = &[
    "nx",
    "ny",
    "t_end",
    "dt_max",
    "cfl",
    "theta",
    "poisson_tol",
    "poisson_max_iter",
    "eps",
    "sensitivity",
    "sens_a",
    "beta0",
    "delta_b",
    "consumption",
    "potential",
    "initial",
    "diag_interval",
    "snapshot_interval",
    "slack_mode",
    "mt_seed",
    "mt_count",
    "eps_list",
    "out_dir",
];

fn parse_num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse {v:?}"))
}

fn parse_enum<T: Copy>(v: &str, table: &[(&str, T)]) -> std::result::Result<T, String> {
    table
        .iter()
        .find(|(name, _)| *name == v)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<_> = table.iter().map(|(n, _)| *n).collect();
            format!("{v:?} is not one of {}", names.join(", "))
        })
}

const SENSITIVITIES: &[(&str, SensitivityChoice)] = &[
    ("rotational", SensitivityChoice::Rotational),
    ("identity", SensitivityChoice::Identity),
    ("zero", SensitivityChoice::Zero),
];
const CONSUMPTIONS: &[(&str, Consumption)] = &[("linear", Consumption::Linear), ("zero", Consumption::Zero)];
const POTENTIALS: &[(&str, PotentialKind)] = &[
    ("gravity", PotentialKind::Gravity),
    ("gravity_wavy", PotentialKind::GravityWavy),
    ("flat", PotentialKind::Flat),
];
const INITIALS: &[(&str, InitialData)] = &[
    ("default", InitialData::Default),
    ("heat", InitialData::Heat),
    ("uniform", InitialData::Uniform),
    ("vortex", InitialData::Vortex),
];

fn name_of<T: PartialEq>(table: &[(&'static str, T)], v: &T) -> &'static str {
    table.iter().find(|(_, t)| t == v).map(|(n, _)| *n).unwrap_or("?")
}

impl RunConfig {
    /// Parses and validates; every problem is collected, not just the first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut issues = Vec::new();
        let mut seen: Vec<(&str, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                issues.push(ConfigIssue {
                    line,
                    kind: IssueKind::Syntax,
                    message: format!("expected `key = value`, got {body:?}"),
                });
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(key) = KEYS.iter().copied().find(|x| *x == k) else {
                issues.push(ConfigIssue {
                    line,
                    kind: IssueKind::UnknownKey,
                    message: format!("{k:?}"),
                });
                continue;
            };
            if let Some((_, first)) = seen.iter().find(|(s, _)| *s == key) {
                issues.push(ConfigIssue {
                    line,
                    kind: IssueKind::Duplicate,
                    message: format!("{key} already set on line {first}"),
                });
                continue;
            }
            seen.push((key, line));
            if v.is_empty() {
                issues.push(ConfigIssue {
                    line,
                    kind: IssueKind::MissingValue,
                    message: format!("{key} has no value"),
                });
                continue;
            }
            if let Err(message) = cfg.assign(key, v) {
                issues.push(ConfigIssue {
                    line,
                    kind: IssueKind::InvalidValue,
                    message: format!("{key}: {message}"),
                });
            }
        }
        for (key, message) in cfg.range_errors() {
            let line = seen.iter().find(|(s, _)| *s == key).map(|(_, l)| *l).unwrap_or(0);
            // a value that failed to parse keeps its default, so it cannot be out of range
            issues.push(ConfigIssue {
                line,
                kind: IssueKind::OutOfRange,
                message: format!("{key}: {message}"),
            });
        }
        if issues.is_empty() {
            Ok(cfg)
        } else {
            issues.sort_by_key(|i| i.line);
            Err(Error::Config(issues))
        }
    }

    fn assign(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "nx" | "ny" => {
                // parse as signed so that negative sizes are reported as out of range
                let n: i64 = parse_num(v)?;
                let n = if n < 0 { 0 } else { n as usize };
                if key == "nx" {
                    self.nx = n
                } else {
                    self.ny = n
                }
            }
            "t_end" => self.t_end = parse_num(v)?,
            "dt_max" => self.dt_max = parse_num(v)?,
            "cfl" => self.cfl = parse_num(v)?,
            "theta" => self.theta = parse_num(v)?,
            "poisson_tol" => self.poisson_tol = parse_num(v)?,
            "poisson_max_iter" => self.poisson_max_iter = parse_num(v)?,
            "eps" => self.eps = parse_num(v)?,
            "sensitivity" => self.sensitivity = parse_enum(v, SENSITIVITIES)?,
            "sens_a" => self.sens_a = parse_num(v)?,
            "beta0" => self.beta0 = parse_num(v)?,
            "delta_b" => self.delta_b = parse_num(v)?,
            "consumption" => self.consumption = parse_enum(v, CONSUMPTIONS)?,
            "potential" => self.potential = parse_enum(v, POTENTIALS)?,
            "initial" => self.initial = parse_enum(v, INITIALS)?,
            "diag_interval" => self.diag_interval = parse_num(v)?,
            "snapshot_interval" => self.snapshot_interval = parse_num(v)?,
            "slack_mode" => self.slack_mode = parse_num(v)?,
            "mt_seed" => self.mt_seed = parse_num(v)?,
            "mt_count" => self.mt_count = parse_num(v)?,
            "eps_list" => {
                self.eps_list = v
                    .split(',')
                    .map(|s| parse_num::<f64>(s.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "out_dir" => self.out_dir = v.to_string(),
            _ => unreachable!("key table and assign are out of sync"),
        }
        Ok(())
    }

    fn range_errors(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut need = |ok: bool, key: &'static str, what: &str| {
            if !ok {
                out.push((key, what.to_string()));
            }
        };
        need((4..=4096).contains(&self.nx), "nx", "must be in [4, 4096]");
        need((4..=4096).contains(&self.ny), "ny", "must be in [4, 4096]");
        need(self.t_end.is_finite() && self.t_end >= 0.0, "t_end", "must be >= 0");
        need(self.dt_max.is_finite() && self.dt_max > 0.0, "dt_max", "must be > 0");
        need(self.cfl > 0.0 && self.cfl <= 0.5, "cfl", "must be in (0, 0.5]");
        need((0.0..=1.0).contains(&self.theta), "theta", "must be in [0, 1]");
        need(
            self.poisson_tol > 0.0 && self.poisson_tol <= 1e-10,
            "poisson_tol",
            "must be in (0, 1e-10]",
        );
        need(self.poisson_max_iter >= 1, "poisson_max_iter", "must be >= 1");
        need(self.eps > 0.0 && self.eps < 1.0, "eps", "must be in (0, 1)");
        need(self.sens_a.is_finite() && self.sens_a > 0.0, "sens_a", "must be > 0");
        need(self.beta0.is_finite(), "beta0", "must be finite");
        need(
            self.delta_b > 0.0 && self.delta_b <= 0.5,
            "delta_b",
            "must be in (0, 0.5]",
        );
        need(
            self.diag_interval.is_finite() && self.diag_interval > 0.0,
            "diag_interval",
            "must be > 0",
        );
        need(
            self.snapshot_interval.is_finite() && self.snapshot_interval > 0.0,
            "snapshot_interval",
            "must be > 0",
        );
        need(self.mt_count >= 1, "mt_count", "must be >= 1");
        need(
            !self.eps_list.is_empty()
                && self.eps_list.iter().all(|e| *e > 0.0 && *e < 1.0)
                && self.eps_list.windows(2).all(|w| w[1] < w[0]),
            "eps_list",
            "must be a strictly decreasing list in (0, 1)",
        );
        need(!self.out_dir.is_empty(), "out_dir", "must not be empty");
        out
    }

    /// Writes every key; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let eps_list: Vec<String> = self.eps_list.iter().map(|e| format!("{e:?}")).collect();
        let lines = [
            format!("nx = {}", self.nx),
            format!("ny = {}", self.ny),
            format!("t_end = {:?}", self.t_end),
            format!("dt_max = {:?}", self.dt_max),
            format!("cfl = {:?}", self.cfl),
            format!("theta = {:?}", self.theta),
            format!("poisson_tol = {:?}", self.poisson_tol),
            format!("poisson_max_iter = {}", self.poisson_max_iter),
            format!("eps = {:?}", self.eps),
            format!("sensitivity = {}", name_of(SENSITIVITIES, &self.sensitivity)),
            format!("sens_a = {:?}", self.sens_a),
            format!("beta0 = {:?}", self.beta0),
            format!("delta_b = {:?}", self.delta_b),
            format!("consumption = {}", name_of(CONSUMPTIONS, &self.consumption)),
            format!("potential = {}", name_of(POTENTIALS, &self.potential)),
            format!("initial = {}", name_of(INITIALS, &self.initial)),
            format!("diag_interval = {:?}", self.diag_interval),
            format!("snapshot_interval = {:?}", self.snapshot_interval),
            format!("slack_mode = {}", self.slack_mode),
            format!("mt_seed = {}", self.mt_seed),
            format!("mt_count = {}", self.mt_count),
            format!("eps_list = {}", eps_list.join(", ")),
            format!("out_dir = {}", self.out_dir),
        ];
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.nx, self.ny)
    }

    pub fn model(&self) -> ModelParams {
        let sensitivity = match self.sensitivity {
            SensitivityChoice::Rotational => Sensitivity {
                a: self.sens_a,
                beta0: self.beta0,
                delta_b: self.delta_b,
            },
            SensitivityChoice::Identity => Sensitivity::identity(),
            SensitivityChoice::Zero => Sensitivity::zero(),
        };
        ModelParams {
            sensitivity,
            consumption: self.consumption,
            potential: self.potential,
        }
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            dt: self.dt_max,
            cfl: self.cfl,
            theta: self.theta,
            poisson_tol: self.poisson_tol,
            poisson_max_iter: self.poisson_max_iter,
        }
    }

    /// Bound multiplier: 1.1 in slack mode, otherwise 1.
    pub fn slack_factor(&self) -> f64 {
        if self.slack_mode {
            1.1
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issues(text: &str) -> Vec<ConfigIssue> {
        match RunConfig::parse(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# only a comment\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn negative_size_is_out_of_range_on_its_line() {
        let v = issues("t_end = 0.5\nnx = -4\n");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].line, 2);
        assert_eq!(v[0].kind, IssueKind::OutOfRange);
        assert!(v[0].to_string().starts_with("line 2:"));
    }

    #[test]
    fn collects_several_issues() {
        let v = issues("bogus = 1\ncfl =\ntheta = 2\nnx = abc\nny = 8\nny = 16\nnot a pair\n");
        let kinds: Vec<_> = v.iter().map(|i| (i.line, i.kind.clone())).collect();
        assert_eq!(
            kinds,
            vec![
                (1, IssueKind::UnknownKey),
                (2, IssueKind::MissingValue),
                (3, IssueKind::OutOfRange),
                (4, IssueKind::InvalidValue),
                (6, IssueKind::Duplicate),
                (7, IssueKind::Syntax),
            ]
        );
    }

    #[test]
    fn parses_every_key() {
        let text = "nx = 32 # inline\nny=16\nt_end = 0.25\nsensitivity = identity\nconsumption = zero\n\
                    potential = gravity_wavy\ninitial = heat\nslack_mode = true\neps_list = 0.4, 0.2\n\
                    out_dir = results/a\nmt_seed = 11\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!((c.nx, c.ny), (32, 16));
        assert_eq!(c.sensitivity, SensitivityChoice::Identity);
        assert_eq!(c.consumption, Consumption::Zero);
        assert_eq!(c.potential, PotentialKind::GravityWavy);
        assert_eq!(c.initial, InitialData::Heat);
        assert!(c.slack_mode);
        assert_eq!(c.eps_list, vec![0.4, 0.2]);
        assert_eq!(c.out_dir, "results/a");
        assert_eq!(c.mt_seed, 11);
        assert_eq!(c.model().sensitivity, Sensitivity::identity());
    }

    #[test]
    fn eps_list_must_decrease() {
        let v = issues("eps_list = 0.1, 0.2\n");
        assert_eq!(v[0].kind, IssueKind::OutOfRange);
    }

    #[test]
    fn round_trip() {
        let c = RunConfig {
            nx: 48,
            t_end: 0.1 + 0.2,
            poisson_tol: 3.3e-12,
            beta0: -0.75,
            eps_list: vec![0.3, 1.0 / 7.0],
            potential: PotentialKind::Flat,
            ..RunConfig::default()
        };
        let again = RunConfig::parse(&c.serialize()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.serialize(), c.serialize());
    }
}
