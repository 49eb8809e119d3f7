//! Experiment driver: configuration, sweeps and output files.
//!
//! A run directory holds `records.csv` (one row per client and timestep per
//! sweep point), `assignments.csv` (the client x timestep model grid),
//! `counters.json` (cost counters per sweep point), `summary.csv` (one row
//! per sweep point) and `summary_pooled.csv` (seeds pooled per setting).

mod config;
mod output;
mod summary;

use std::fs;
use std::path::Path;

use rayon::prelude::*;

pub use config::{parse_config, DatasetMode, RunConfig, SweepPoint, KEYS};
pub use output::{
    read_counters, read_records, write_assignments, write_counters, write_records, AssignmentRow,
    CounterRow, RecordRow, ASSIGNMENT_COLUMNS, RECORD_COLUMNS,
};
pub use summary::{summarize, summarize_pooled, write_summary, Stat, SummaryRow, SUMMARY_COLUMNS, SUMMARY_NOTE};

use crate::data::{build_stream, DriftSchedule, StreamGrid};
use crate::error::{Error, Result};
use crate::federation::{run_federation, CostCounters, ModelId, TimestepLog};
use crate::metrics::MetricsRecord;

/// Everything a finished sweep point produced.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub point: SweepPoint,
    pub records: Vec<MetricsRecord>,
    pub counters: CostCounters,
    pub final_models: usize,
    pub assignments: Vec<Vec<ModelId>>,
    pub final_assignments: Vec<Vec<ModelId>>,
    pub timeline: Vec<TimestepLog>,
}

/// Runs every sweep point of `cfg` in memory; points run in parallel and come
/// back in [`RunConfig::points`] order.
pub fn run_sweep(cfg: &RunConfig) -> Result<(DriftSchedule, Vec<PointResult>)> {
    cfg.validate()?;
    let dataset = cfg.load_dataset()?;
    let schedule = cfg.schedule()?;
    let arch = cfg.architecture(&dataset)?;
    let streams: Vec<(u64, StreamGrid)> = cfg
        .seeds
        .par_iter()
        .map(|&s| Ok((s, build_stream(&dataset, &schedule, cfg.alpha, cfg.size, s)?)))
        .collect::<Result<_>>()?;
    let results = cfg
        .points()
        .into_par_iter()
        .map(|point| {
            let grid = &streams.iter().find(|(s, _)| *s == point.seed).expect("stream per seed").1;
            let run = run_federation(&cfg.federation_config(arch, &point), grid, &schedule)?;
            Ok(PointResult {
                records: run.records,
                counters: run.counters,
                final_models: run.pool.len(),
                assignments: run.assignments,
                final_assignments: run.final_assignments,
                timeline: run.timeline,
                point,
            })
        })
        .collect::<Result<_>>()?;
    Ok((schedule, results))
}

/// Flattens sweep results into the three per-row output tables.
pub fn tabulate(
    cfg: &RunConfig,
    schedule: &DriftSchedule,
    results: &[PointResult],
) -> (Vec<RecordRow>, Vec<AssignmentRow>, Vec<CounterRow>) {
    let mut records = Vec::new();
    let mut assignments = Vec::new();
    let mut counters = Vec::new();
    for r in results {
        let delta = r.point.delta.to_string();
        let window = r.point.window.to_string();
        records.extend(r.records.iter().map(|rec| RecordRow {
            seed: r.point.seed,
            algorithm: cfg.algorithm,
            delta: delta.clone(),
            window: window.clone(),
            record: rec.clone(),
        }));
        for (k, row) in r.final_assignments.iter().enumerate() {
            for (t, &m) in row.iter().enumerate() {
                assignments.push(AssignmentRow {
                    seed: r.point.seed,
                    algorithm: cfg.algorithm,
                    delta: delta.clone(),
                    window: window.clone(),
                    client: k,
                    timestep: t,
                    model_id: m,
                    assigned_id: r.assignments[k][t],
                    true_concept: schedule.concept(k, t),
                });
            }
        }
        counters.push(CounterRow {
            seed: r.point.seed,
            algorithm: cfg.algorithm.to_string(),
            alpha: cfg.alpha,
            delta,
            window,
            final_models: r.final_models,
            counters: r.counters,
        });
    }
    (records, assignments, counters)
}

/// Runs the sweep and writes all four files into `cfg.out`.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<SummaryRow>> {
    let (schedule, results) = run_sweep(cfg)?;
    let (records, assignments, counters) = tabulate(cfg, &schedule, &results);
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_records(&out.join("records.csv"), &records)?;
    write_assignments(&out.join("assignments.csv"), &assignments)?;
    write_counters(&out.join("counters.json"), &counters)?;
    let summary = summarize(&records, &counters)?;
    write_summary(&out.join("summary.csv"), &summary)?;
    write_summary(&out.join("summary_pooled.csv"), &summarize_pooled(&records, &counters)?)?;
    Ok(summary)
}

/// Recomputes the per-point and pooled summaries of a run directory from its
/// records and counters.
pub fn summarize_dir(dir: &Path) -> Result<(Vec<SummaryRow>, Vec<SummaryRow>)> {
    let records = read_records(&dir.join("records.csv"))?;
    let counters = read_counters(&dir.join("counters.json"))?;
    Ok((summarize(&records, &counters)?, summarize_pooled(&records, &counters)?))
}
