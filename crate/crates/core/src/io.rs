//! CSV artifacts and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{Grid2D, Surface};
use crate::qsolver::{ConvergenceReport, RateField};
use crate::valuepde::{StrategyField, ValueField};

pub const QFIELD_CSV: &str = "qfield.csv";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const CONFIG_TOML: &str = "config.toml";

pub fn vfield_name(field: &ValueField) -> String {
    format!("vfield_{}.csv", field.kind.tag())
}

pub fn strategy_name(field: &StrategyField) -> String {
    format!("strategy_{}.csv", field.kind.tag())
}

/// Writes serializable rows with a header line.
pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<T>, csv::Error>>()?;
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QRow {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VRow {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
    pub dv_dy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub pi: f64,
    pub c: f64,
}

fn nodes(grid: &Grid2D) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
    grid.t_nodes()
        .iter()
        .enumerate()
        .flat_map(move |(n, &t)| grid.y_nodes().iter().enumerate().map(move |(i, &y)| (n, i, t, y)))
}

pub fn write_qfield(path: &Path, field: &RateField) -> Result<()> {
    write_rows(
        path,
        nodes(field.grid()).map(|(n, i, t, y)| QRow {
            t,
            y,
            z: y.exp(),
            q: field.at(n, i),
        }),
    )
}

/// Reads a `qfield.csv` written by [`write_qfield`] back onto its tensor grid.
pub fn read_qfield(path: &Path) -> Result<RateField> {
    let rows: Vec<QRow> = read_rows(path)?;
    let mut t_nodes: Vec<f64> = Vec::new();
    let mut y_nodes: Vec<f64> = Vec::new();
    for r in &rows {
        if t_nodes.last() != Some(&r.t) {
            t_nodes.push(r.t);
        }
        if t_nodes.len() == 1 {
            y_nodes.push(r.y);
        }
    }
    let bad = || Error::Parse(format!("{} is not a row-major tensor grid", path.display()));
    if t_nodes.len() * y_nodes.len() != rows.len() {
        return Err(bad());
    }
    for (k, r) in rows.iter().enumerate() {
        if r.t != t_nodes[k / y_nodes.len()] || r.y != y_nodes[k % y_nodes.len()] {
            return Err(bad());
        }
    }
    let grid = Grid2D::new(t_nodes, y_nodes)?;
    RateField::new(Surface::new(grid, rows.iter().map(|r| r.q).collect())?)
}

pub fn write_convergence(path: &Path, report: &ConvergenceReport) -> Result<()> {
    write_rows(path, report.records.iter())
}

pub fn write_vfield(path: &Path, field: &ValueField) -> Result<()> {
    write_rows(
        path,
        nodes(&field.grid).map(|(n, i, t, y)| VRow {
            t,
            y,
            z: y.exp(),
            v: field.v.at(n, i),
            dv_dy: field.dv_dy.at(n, i),
        }),
    )
}

pub fn write_strategy(path: &Path, field: &StrategyField) -> Result<()> {
    write_rows(
        path,
        nodes(&field.grid).map(|(n, i, t, y)| StrategyRow {
            t,
            y,
            z: y.exp(),
            pi: field.pi.at(n, i),
            c: field.c.at(n, i),
        }),
    )
}

/// Record written next to every set of artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the canonical TOML rendering of the config.
    pub config_sha256: String,
    pub seed: u64,
    pub artifacts: Vec<String>,
    /// Solver status or other per-command notes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml_string().as_bytes()))
}

impl Manifest {
    pub fn new(cfg: &RunConfig, command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: config_hash(cfg),
            seed: cfg.sim.seed,
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Writes `manifest.json` and the canonical config into `dir`.
    pub fn write(&self, dir: &Path, cfg: &RunConfig) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg_path = dir.join(CONFIG_TOML);
        fs::write(&cfg_path, cfg.to_toml_string()).map_err(|e| Error::io(&cfg_path, e))?;
        let path = dir.join(MANIFEST_JSON);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_JSON);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset_cev;
    use crate::grid::GridSpace;

    #[test]
    fn qfield_round_trips_bit_for_bit() {
        let grid = Grid2D::uniform(10.0, 5, 0.1, 4.7, 7, GridSpace::Log).unwrap();
        let values = (0..grid.len()).map(|k| 0.02 + (k as f64).sqrt() * 1e-3 / 3.0).collect();
        let field = RateField::new(Surface::new(grid, values).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(QFIELD_CSV);
        write_qfield(&path, &field).unwrap();
        assert_eq!(read_qfield(&path).unwrap(), field);
        let header = fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("t,y,z,q\n"));
    }

    #[test]
    fn missing_qfield_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_qfield(&dir.path().join("nope.csv")),
            Err(Error::MissingInput(_))
        ));
    }

    #[test]
    fn manifest_records_hash_and_seed() {
        let cfg = preset_cev();
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new(&cfg, "solve-q");
        m.artifacts.push(QFIELD_CSV.into());
        m.write(dir.path(), &cfg).unwrap();
        let back = Manifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.config_sha256.len(), 64);
        let saved = RunConfig::load(&dir.path().join(CONFIG_TOML)).unwrap();
        assert_eq!(config_hash(&saved), back.config_sha256);
    }
}
