//! CSV tables and run manifests.

use std::io;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl Cell {
    /// Floats use 17 significant digits so every value round-trips.
    pub fn render(&self) -> String {
        match self {
            Cell::Float(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Float(x) => format!("{x}"),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Table {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row.iter().map(Cell::render))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub replica_seeds: Vec<u64>,
    pub build: String,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub warning: Option<String>,
}

impl Manifest {
    pub fn build_id() -> String {
        format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
    }
}

pub fn write_outputs(dir: &Path, tables: &[Table], manifest: &Manifest) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in tables {
        let f = std::fs::File::create(dir.join(t.file_name()))?;
        t.write_csv(io::BufWriter::new(f)).map_err(io::Error::other)?;
    }
    let f = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(io::BufWriter::new(f), manifest)?;
    Ok(())
}
