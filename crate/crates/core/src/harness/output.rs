//! The on-disk formats: `records.csv`, `assignments.csv`, `counters.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ConceptId;
use crate::error::{Error, Result};
use crate::federation::{Algorithm, CostCounters, ModelId};
use crate::metrics::MetricsRecord;

pub const RECORD_COLUMNS: [&str; 17] = [
    "seed",
    "algorithm",
    "delta",
    "window",
    "timestep",
    "client",
    "model_id",
    "true_concept",
    "n_models",
    "acc",
    "aeq",
    "oeq",
    "opp",
    "loss",
    "loss_g0",
    "loss_g1",
    "disparity",
];

pub const ASSIGNMENT_COLUMNS: [&str; 9] = [
    "seed",
    "algorithm",
    "delta",
    "window",
    "client",
    "timestep",
    "model_id",
    "assigned_id",
    "true_concept",
];

/// A metrics record tagged with the sweep point that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordRow {
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Threshold as written, e.g. `0.5`, `inf` or `0.2/0.4`.
    pub delta: String,
    pub window: String,
    pub record: MetricsRecord,
}

/// One cell of the client x timestep assignment grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentRow {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub delta: String,
    pub window: String,
    pub client: usize,
    pub timestep: usize,
    /// The model this cell's data ended up in after all later merges.
    pub model_id: ModelId,
    /// The model the client trained at that timestep.
    pub assigned_id: ModelId,
    pub true_concept: ConceptId,
}

/// Per-run entry of `counters.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterRow {
    pub seed: u64,
    pub algorithm: String,
    pub alpha: f64,
    pub delta: String,
    pub window: String,
    pub final_models: usize,
    #[serde(flatten)]
    pub counters: CostCounters,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_records(path: &Path, rows: &[RecordRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(RECORD_COLUMNS)?;
    for row in rows {
        let r = &row.record;
        w.write_record([
            row.seed.to_string(),
            row.algorithm.to_string(),
            row.delta.clone(),
            row.window.clone(),
            r.timestep.to_string(),
            r.client.to_string(),
            r.model_id.to_string(),
            r.true_concept.to_string(),
            r.n_models.to_string(),
            r.acc.to_string(),
            opt(r.aeq),
            opt(r.oeq),
            opt(r.opp),
            r.loss.to_string(),
            opt(r.loss_g0),
            opt(r.loss_g1),
            r.disparity.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_assignments(path: &Path, rows: &[AssignmentRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(ASSIGNMENT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.algorithm.to_string(),
            r.delta.clone(),
            r.window.clone(),
            r.client.to_string(),
            r.timestep.to_string(),
            r.model_id.to_string(),
            r.assigned_id.to_string(),
            r.true_concept.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_counters(path: &Path, rows: &[CounterRow]) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, rows)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_counters(path: &Path) -> Result<Vec<CounterRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        field: "counters",
        detail: e.to_string(),
    })
}

/// Parses `records.csv`; the header must match [`RECORD_COLUMNS`] exactly.
pub fn read_records(path: &Path) -> Result<Vec<RecordRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers()?.clone();
    if header.iter().ne(RECORD_COLUMNS) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            field: "header",
            detail: format!("expected {}, got {}", RECORD_COLUMNS.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let err = |field: &'static str, detail: String| Error::Parse {
            path: path.to_path_buf(),
            field,
            detail: format!("row {}: {detail}", line + 1),
        };
        let get = |i: usize| rec.get(i).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
            s.parse::<T>().map_err(|_| format!("cannot parse {s:?}"))
        }
        let field = |i: usize| RECORD_COLUMNS[i];
        macro_rules! p {
            ($i:expr) => {
                num(get($i)).map_err(|d| err(field($i), d))?
            };
        }
        let maybe = |i: usize| -> Result<Option<f64>> {
            match get(i) {
                "" => Ok(None),
                s => num(s).map(Some).map_err(|d| err(field(i), d)),
            }
        };
        rows.push(RecordRow {
            seed: p!(0),
            algorithm: get(1).parse().map_err(|e: Error| err(field(1), e.to_string()))?,
            delta: get(2).to_string(),
            window: get(3).to_string(),
            record: MetricsRecord {
                timestep: p!(4),
                client: p!(5),
                model_id: p!(6),
                true_concept: get(7).parse().map_err(|e: Error| err(field(7), e.to_string()))?,
                n_models: p!(8),
                acc: p!(9),
                aeq: maybe(10)?,
                oeq: maybe(11)?,
                opp: maybe(12)?,
                loss: p!(13),
                loss_g0: maybe(14)?,
                loss_g1: maybe(15)?,
                disparity: p!(16),
            },
        });
    }
    Ok(rows)
}
