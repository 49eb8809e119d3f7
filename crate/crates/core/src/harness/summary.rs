//! Aggregates over (client, timestep) cells.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::output::{CounterRow, RecordRow};
use crate::error::{Error, Result};

/// First line of `summary.csv`.
pub const SUMMARY_NOTE: &str = "# *_std columns are population standard deviations; metric means cover every defined (client, timestep) cell of the row's runs; cumulative_disparity sums disparity over the cells of one run";

pub const SUMMARY_COLUMNS: [&str; 23] = [
    "algorithm",
    "alpha",
    "delta",
    "window",
    "seed",
    "seeds",
    "cells",
    "acc_mean",
    "acc_std",
    "acc_defined_cells",
    "aeq_mean",
    "aeq_std",
    "aeq_defined_cells",
    "oeq_mean",
    "oeq_std",
    "oeq_defined_cells",
    "opp_mean",
    "opp_std",
    "opp_defined_cells",
    "final_models_mean",
    "cumulative_disparity_mean",
    "cumulative_disparity_std",
    "disparity_mean",
];

/// Mean and population standard deviation of the defined values.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub defined: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let xs: Vec<f64> = values.into_iter().flatten().collect();
        if xs.is_empty() {
            return Stat::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Stat {
            mean: Some(mean),
            std: Some(var.sqrt()),
            defined: xs.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub alpha: f64,
    pub delta: String,
    pub window: String,
    /// `None` for rows pooled over all seeds.
    pub seed: Option<u64>,
    pub seeds: usize,
    pub cells: usize,
    pub acc: Stat,
    pub aeq: Stat,
    pub oeq: Stat,
    pub opp: Stat,
    pub final_models_mean: f64,
    /// Over seeds, of the per-run sum of disparity.
    pub cumulative_disparity: Stat,
    pub disparity_mean: f64,
}

type Key = (String, String, String, Option<u64>);

/// One row per sweep point (algorithm, delta, window, seed), in
/// first-appearance order. `counters` supplies alpha and final pool sizes.
pub fn summarize(records: &[RecordRow], counters: &[CounterRow]) -> Result<Vec<SummaryRow>> {
    aggregate(records, counters, true)
}

/// As [`summarize`] but pooling all seeds of each (algorithm, delta, window).
pub fn summarize_pooled(records: &[RecordRow], counters: &[CounterRow]) -> Result<Vec<SummaryRow>> {
    aggregate(records, counters, false)
}

fn aggregate(records: &[RecordRow], counters: &[CounterRow], per_seed: bool) -> Result<Vec<SummaryRow>> {
    let key = |r: &RecordRow| -> Key {
        (
            r.algorithm.to_string(),
            r.delta.clone(),
            r.window.clone(),
            per_seed.then_some(r.seed),
        )
    };
    let mut keys: Vec<Key> = Vec::new();
    for r in records {
        let k = key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|k| {
            let rows: Vec<&RecordRow> = records.iter().filter(|r| key(r) == k).collect();
            let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let runs = seeds
                .iter()
                .map(|&s| {
                    counters
                        .iter()
                        .find(|c| {
                            c.seed == s
                                && c.algorithm == k.0
                                && c.delta == k.1
                                && c.window == k.2
                        })
                        .ok_or_else(|| Error::Parse {
                            path: "counters.json".into(),
                            field: "run",
                            detail: format!("no entry for seed {s}, {} delta={} window={}", k.0, k.1, k.2),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            let cumulative = Stat::of(seeds.iter().map(|&s| {
                Some(rows.iter().filter(|r| r.seed == s).map(|r| r.record.disparity).sum::<f64>())
            }));
            Ok(SummaryRow {
                alpha: runs[0].alpha,
                seeds: seeds.len(),
                cells: rows.len(),
                acc: Stat::of(rows.iter().map(|r| Some(r.record.acc))),
                aeq: Stat::of(rows.iter().map(|r| r.record.aeq)),
                oeq: Stat::of(rows.iter().map(|r| r.record.oeq)),
                opp: Stat::of(rows.iter().map(|r| r.record.opp)),
                final_models_mean: runs.iter().map(|c| c.final_models as f64).sum::<f64>()
                    / runs.len() as f64,
                cumulative_disparity: cumulative,
                disparity_mean: rows.iter().map(|r| r.record.disparity).sum::<f64>() / rows.len() as f64,
                algorithm: k.0,
                delta: k.1,
                window: k.2,
                seed: k.3,
            })
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "{SUMMARY_NOTE}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(SUMMARY_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.algorithm.clone(),
            r.alpha.to_string(),
            r.delta.clone(),
            r.window.clone(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.seeds.to_string(),
            r.cells.to_string(),
        ];
        for s in [r.acc, r.aeq, r.oeq, r.opp] {
            rec.extend([opt(s.mean), opt(s.std), s.defined.to_string()]);
        }
        rec.extend([
            r.final_models_mean.to_string(),
            opt(r.cumulative_disparity.mean),
            opt(r.cumulative_disparity.std),
            r.disparity_mean.to_string(),
        ]);
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
