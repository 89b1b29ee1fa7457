//! Snapshot files and trajectory directories.
//!
//! A snapshot file holds one field at one instant: a 32-byte ASCII header
//! `CHNS1 <field> <nx> <ny> <time>` padded with spaces and ended by `\n`,
//! then the values as little-endian `f64`. Cell fields are stored in
//! row-major cell order; the face fields `u` and `v` in their own row-major
//! face order, `(nx+1)·ny` and `nx·(ny+1)` values respectively.
//!
//! The header time is rounded for readability. The manifest carries the
//! exact times.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::solver::{State, Trajectory};

pub const SNAPSHOT_MAGIC: &str = "CHNS1";
pub const HEADER_LEN: usize = 32;
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_FILE: &str = "run-config.txt";
pub const SNAPSHOT_DIR: &str = "snapshots";
const MANIFEST_MAGIC: &str = "CHNS-MANIFEST 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldName {
    N,
    C,
    U,
    V,
    P,
}

impl FieldName {
    pub const ALL: [FieldName; 5] = [FieldName::N, FieldName::C, FieldName::U, FieldName::V, FieldName::P];

    pub fn as_str(&self) -> &'static str {
        match self {
            FieldName::N => "n",
            FieldName::C => "c",
            FieldName::U => "u",
            FieldName::V => "v",
            FieldName::P => "p",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }

    pub fn len(&self, g: Grid) -> usize {
        match self {
            FieldName::U => g.n_u_faces(),
            FieldName::V => g.n_v_faces(),
            _ => g.n_cells(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub field: FieldName,
    pub nx: usize,
    pub ny: usize,
    pub time: f64,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn encode_snapshot(field: FieldName, grid: Grid, time: f64, values: &[f64]) -> Vec<u8> {
    assert_eq!(
        values.len(),
        field.len(grid),
        "value count does not match field {}",
        field.as_str()
    );
    let text = format!(
        "{SNAPSHOT_MAGIC} {} {} {} {:.6e}",
        field.as_str(),
        grid.nx(),
        grid.ny(),
        time
    );
    assert!(text.len() < HEADER_LEN, "header overflow: {text}");
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    out.extend_from_slice(text.as_bytes());
    out.resize(HEADER_LEN - 1, b' ');
    out.push(b'\n');
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// `path` only labels errors.
pub fn decode_snapshot(bytes: &[u8], path: &Path) -> Result<(SnapshotHeader, Vec<f64>)> {
    if bytes.len() < HEADER_LEN || bytes[HEADER_LEN - 1] != b'\n' {
        return Err(format_err(path, "missing 32-byte header"));
    }
    let head = std::str::from_utf8(&bytes[..HEADER_LEN - 1]).map_err(|_| format_err(path, "header is not ASCII"))?;
    let parts: Vec<&str> = head.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != SNAPSHOT_MAGIC {
        return Err(format_err(path, format!("bad header {head:?}")));
    }
    let field = FieldName::parse(parts[1]).ok_or_else(|| format_err(path, format!("unknown field {:?}", parts[1])))?;
    let nx: usize = parts[2].parse().map_err(|_| format_err(path, "bad nx"))?;
    let ny: usize = parts[3].parse().map_err(|_| format_err(path, "bad ny"))?;
    let time: f64 = parts[4].parse().map_err(|_| format_err(path, "bad time"))?;
    if nx < Grid::MIN_CELLS || ny < Grid::MIN_CELLS {
        return Err(format_err(path, "grid too small"));
    }
    let expect = field.len(Grid::new(nx, ny));
    let data = &bytes[HEADER_LEN..];
    if data.len() != 8 * expect {
        return Err(format_err(
            path,
            format!("expected {expect} values, found {} bytes", data.len()),
        ));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((SnapshotHeader { field, nx, ny, time }, values))
}

fn snapshot_file(k: usize, field: FieldName) -> String {
    format!("{SNAPSHOT_DIR}/snap_{k:05}_{}.bin", field.as_str())
}

/// Writes snapshots, the echoed configuration and the manifest into `dir`.
/// A failed run gets a `truncated` status line with the failure message.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir.join(SNAPSHOT_DIR))?;
    let g = traj.grid();
    let mut manifest = String::new();
    manifest.push_str(MANIFEST_MAGIC);
    manifest.push('\n');
    manifest.push_str(&format!("grid {} {}\n", g.nx(), g.ny()));
    manifest.push_str(&format!("config {CONFIG_FILE}\n"));
    match &traj.failure {
        None => manifest.push_str("status complete\n"),
        Some(msg) => manifest.push_str(&format!("status truncated {}\n", msg.replace('\n', " "))),
    }
    for (k, s) in traj.snapshots.iter().enumerate() {
        let mut line = format!("snapshot {k} {:.16e}", s.t);
        for field in FieldName::ALL {
            let values: &[f64] = match field {
                FieldName::N => s.n.values(),
                FieldName::C => s.c.values(),
                FieldName::U => s.u.u(),
                FieldName::V => s.u.v(),
                FieldName::P => s.p.values(),
            };
            let name = snapshot_file(k, field);
            fs::write(dir.join(&name), encode_snapshot(field, g, s.t, values))?;
            line.push(' ');
            line.push_str(&name);
        }
        manifest.push_str(&line);
        manifest.push('\n');
    }
    fs::write(dir.join(CONFIG_FILE), traj.config.serialize())?;
    fs::write(dir.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

/// Trajectory as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrajectory {
    pub config: RunConfig,
    pub snapshots: Vec<State>,
    pub failure: Option<String>,
}

impl StoredTrajectory {
    pub fn grid(&self) -> Grid {
        self.config.grid()
    }
}

fn read_field(dir: &Path, name: &str, field: FieldName, grid: Grid) -> Result<Vec<f64>> {
    let path: PathBuf = dir.join(name);
    let bytes = fs::read(&path)?;
    let (h, values) = decode_snapshot(&bytes, &path)?;
    if h.field != field || (h.nx, h.ny) != (grid.nx(), grid.ny()) {
        return Err(format_err(&path, "header does not match the manifest"));
    }
    Ok(values)
}

pub fn read_trajectory(dir: &Path) -> Result<StoredTrajectory> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath)?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_MAGIC) {
        return Err(format_err(&mpath, "not a trajectory manifest"));
    }
    let mut grid = None;
    let mut config = None;
    let mut failure = None;
    let mut snapshots = Vec::new();
    for line in lines {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("grid") => {
                let nx = parts.next().and_then(|v| v.parse().ok());
                let ny = parts.next().and_then(|v| v.parse().ok());
                match (nx, ny) {
                    (Some(nx), Some(ny)) if nx >= Grid::MIN_CELLS && ny >= Grid::MIN_CELLS => {
                        grid = Some(Grid::new(nx, ny))
                    }
                    _ => return Err(format_err(&mpath, "bad grid line")),
                }
            }
            Some("config") => {
                let name = parts.next().ok_or_else(|| format_err(&mpath, "bad config line"))?;
                config = Some(RunConfig::parse(&fs::read_to_string(dir.join(name))?)?);
            }
            Some("status") => match parts.next() {
                Some("complete") => failure = None,
                Some("truncated") => failure = Some(parts.collect::<Vec<_>>().join(" ")),
                _ => return Err(format_err(&mpath, "bad status line")),
            },
            Some("snapshot") => {
                let g = grid.ok_or_else(|| format_err(&mpath, "snapshot before grid line"))?;
                let _index = parts.next();
                let t: f64 = parts
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| format_err(&mpath, "bad snapshot time"))?;
                let names: Vec<&str> = parts.collect();
                if names.len() != FieldName::ALL.len() {
                    return Err(format_err(&mpath, "snapshot line must list five files"));
                }
                let n = read_field(dir, names[0], FieldName::N, g)?;
                let c = read_field(dir, names[1], FieldName::C, g)?;
                let u = read_field(dir, names[2], FieldName::U, g)?;
                let v = read_field(dir, names[3], FieldName::V, g)?;
                let p = read_field(dir, names[4], FieldName::P, g)?;
                let mut vel = VectorField::from_components(g, u, v);
                if vel.max_boundary_abs() == 0.0 {
                    vel = vel.with_no_slip();
                }
                snapshots.push(State {
                    t,
                    n: ScalarField::from_values(g, n),
                    c: ScalarField::from_values(g, c),
                    u: vel,
                    p: ScalarField::from_values(g, p),
                });
            }
            None => {}
            Some(other) => return Err(format_err(&mpath, format!("unknown manifest entry {other:?}"))),
        }
    }
    let config = config.ok_or_else(|| format_err(&mpath, "manifest names no configuration"))?;
    if grid != Some(config.grid()) {
        return Err(Error::GridMismatch(
            "manifest grid differs from the stored configuration".into(),
        ));
    }
    if snapshots.is_empty() {
        return Err(format_err(&mpath, "no snapshots"));
    }
    Ok(StoredTrajectory {
        config,
        snapshots,
        failure,
    })
}
