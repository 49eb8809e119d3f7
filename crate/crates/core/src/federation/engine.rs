//! The timestep loop shared by all algorithms.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{
    assign_oracle, decide_fair, decide_global, evaluate_models, merge_matrix, merge_step,
    spawn_model, train_round, Algorithm, Assignment, CostCounters, FederationConfig, LossTable,
    MergeEvent, ModelId, ModelPool, GROUPS,
};
use crate::data::{DriftSchedule, StreamGrid, TimestepBatch};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalRecord, MetricsRecord};
use crate::model::{init_params, loss_breakdown, predict_label, ModelParams};
use crate::seed;

/// What happened at one timestep, for cost accounting and diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimestepLog {
    pub timestep: usize,
    /// Pool size the assignment step evaluated against.
    pub models_at_assignment: usize,
    /// Loss values computed during assignment (per group for the fair variant).
    pub assignment_loss_evaluations: u64,
    pub spawned: Vec<ModelId>,
    pub merges: Vec<MergeEvent>,
    /// Client-bound model transmissions in each training round.
    pub sends_per_round: Vec<u64>,
    /// Pool size during training.
    pub models_in_training: usize,
}

#[derive(Clone, Debug)]
pub struct FederationRun<'a> {
    /// One record per (timestep, client), timestep-major.
    pub records: Vec<MetricsRecord>,
    pub counters: CostCounters,
    /// `[client][timestep]`: the model each client trained at that timestep.
    pub assignments: Vec<Vec<ModelId>>,
    /// `assignments` with every id replaced by the model it was eventually merged into.
    pub final_assignments: Vec<Vec<ModelId>>,
    pub timeline: Vec<TimestepLog>,
    pub pool: ModelPool<'a>,
}

impl FederationRun<'_> {
    pub fn merges(&self) -> impl Iterator<Item = &MergeEvent> {
        self.timeline.iter().flat_map(|l| &l.merges)
    }
}

fn initial_params(cfg: &FederationConfig, id: ModelId) -> Result<ModelParams> {
    init_params(cfg.arch, seed::derive_seed(cfg.seed, &[seed::TAG_INIT, id]))
}

fn check_shapes(cfg: &FederationConfig, streams: &StreamGrid, schedule: &DriftSchedule) -> Result<()> {
    let shape = |what, expected, got| {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Shape {
                what,
                expected,
                got,
            })
        }
    };
    shape("stream clients", cfg.clients, streams.len())?;
    shape("schedule clients", cfg.clients, schedule.clients())?;
    shape("schedule timesteps", cfg.timesteps, schedule.timesteps())?;
    for row in streams {
        shape("stream timesteps", cfg.timesteps, row.len())?;
    }
    for (k, row) in streams.iter().enumerate() {
        for (t, b) in row.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::EmptyInput("timestep batch").at(t, k, None));
            }
            for e in &b.examples {
                if e.features.len() != cfg.arch.input || e.label >= cfg.arch.classes {
                    return Err(Error::Shape {
                        what: "example vs architecture",
                        expected: cfg.arch.input,
                        got: e.features.len(),
                    }
                    .at(t, k, None));
                }
            }
        }
    }
    Ok(())
}

fn evaluate(
    pool: &ModelPool<'_>,
    client: usize,
    batch: &TimestepBatch,
) -> Result<MetricsRecord> {
    let model = pool.current(client);
    let p = pool.params(model);
    let evals = batch
        .examples
        .iter()
        .map(|e| Ok(EvalRecord::new(e.label, predict_label(p, &e.features)?, e.group)))
        .collect::<Result<Vec<_>>>()?;
    let losses = loss_breakdown(p, &batch.examples, GROUPS)?;
    let present: BTreeMap<u8, f64> = losses
        .groups
        .iter()
        .enumerate()
        .filter_map(|(s, l)| l.map(|l| (s as u8, l)))
        .collect();
    Ok(MetricsRecord {
        client,
        timestep: batch.timestep,
        model_id: model,
        true_concept: batch.concept,
        n_models: pool.len(),
        acc: metrics::accuracy(&evals)?,
        aeq: metrics::aeq(&evals),
        oeq: metrics::oeq(&evals, true),
        opp: metrics::opp(&evals, true),
        loss: losses.overall,
        loss_g0: losses.group(0),
        loss_g1: losses.group(1),
        disparity: metrics::disparity(&present)?,
    })
}

fn resolve(merged_into: &BTreeMap<ModelId, ModelId>, mut id: ModelId) -> ModelId {
    while let Some(&next) = merged_into.get(&id) {
        id = next;
    }
    id
}

/// Runs one full federation over `streams` (`[client][timestep]`).
///
/// Each timestep first scores every client's current model on the incoming
/// batch, then assigns, merges (drift-detecting algorithms only), trains for
/// `cfg.rounds` rounds and finally refreshes the clients' reference losses.
pub fn run_federation<'a>(
    cfg: &FederationConfig,
    streams: &'a StreamGrid,
    schedule: &DriftSchedule,
) -> Result<FederationRun<'a>> {
    cfg.validate()?;
    check_shapes(cfg, streams, schedule)?;
    let kind = &cfg.kind;
    let fair = kind.algorithm == Algorithm::FairFedDrift;
    let clients = cfg.clients;

    let mut pool = ModelPool::new(clients, initial_params(cfg, 0)?);
    let mut counters = CostCounters::default();
    let mut records = Vec::with_capacity(clients * cfg.timesteps);
    let mut assignments = vec![Vec::with_capacity(cfg.timesteps); clients];
    let mut timeline = Vec::with_capacity(cfg.timesteps);
    let mut merged_into = BTreeMap::new();

    for t in 0..cfg.timesteps {
        let batches: Vec<&'a TimestepBatch> = streams.iter().map(|row| &row[t]).collect();
        let mut log = TimestepLog {
            timestep: t,
            ..TimestepLog::default()
        };

        let shared = &pool;
        let step: Vec<MetricsRecord> = (0..clients)
            .into_par_iter()
            .map(|k| evaluate(shared, k, batches[k]).map_err(|e| e.at(t, k, Some(shared.current(k)))))
            .collect::<Result<_>>()?;
        records.extend(step);

        log.models_at_assignment = pool.len();
        match kind.algorithm {
            _ if t == 0 => {}
            Algorithm::FedAvg => {}
            Algorithm::Oracle => {
                for k in 0..clients {
                    let id = assign_oracle(schedule, k, t);
                    if !pool.contains(id) {
                        pool.insert_with_id(id, initial_params(cfg, id)?);
                        log.spawned.push(id);
                    }
                    pool.set_current(k, id);
                }
            }
            Algorithm::FedDrift | Algorithm::FairFedDrift => {
                let shared = &pool;
                let decisions: Vec<(Assignment, LossTable)> = (0..clients)
                    .into_par_iter()
                    .map(|k| {
                        let table = evaluate_models(shared, batches[k]).map_err(|e| e.at(t, k, None))?;
                        let d = if fair {
                            decide_fair(&table, shared.refs(k), &kind.delta)
                        } else {
                            decide_global(&table, shared.refs(k), &kind.delta)
                        };
                        Ok((d, table))
                    })
                    .collect::<Result<_>>()?;
                for (k, (decision, table)) in decisions.into_iter().enumerate() {
                    log.assignment_loss_evaluations += if fair {
                        table.group_evaluations() as u64
                    } else {
                        table.rows.len() as u64
                    };
                    match decision {
                        Assignment::Existing(m) => pool.set_current(k, m),
                        Assignment::New => {
                            let params = initial_params(cfg, pool.next_id())?;
                            log.spawned.push(spawn_model(&mut pool, k, params, &table));
                        }
                    }
                }
                counters.group_loss_evaluations += log.assignment_loss_evaluations;
            }
        }
        for (k, batch) in batches.iter().enumerate() {
            pool.retain(k, t, pool.current(k), batch);
        }
        pool.trim(t, kind.window);

        if kind.algorithm.detects_drift() {
            let (z, evals) = merge_matrix(&pool, &kind.delta, fair).map_err(|e| e.at(t, 0, None))?;
            counters.merge_matrix_loss_evaluations += evals;
            log.merges = merge_step(&mut pool, &z)?;
            for ev in &log.merges {
                merged_into.insert(ev.first, ev.merged);
                merged_into.insert(ev.second, ev.merged);
            }
        }
        for (k, row) in assignments.iter_mut().enumerate() {
            row.push(pool.current(k));
        }

        log.models_in_training = pool.len();
        for r in 0..cfg.rounds {
            let before = counters.models_sent_to_clients;
            train_round(&mut pool, cfg, t, r, &mut counters)?;
            log.sends_per_round.push(counters.models_sent_to_clients - before);
        }

        let shared = &pool;
        let refreshed = (0..clients)
            .into_par_iter()
            .map(|k| {
                let m = shared.current(k);
                loss_breakdown(shared.params(m), &batches[k].examples, GROUPS)
                    .map_err(|e| e.at(t, k, Some(m)))
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, l) in refreshed.into_iter().enumerate() {
            let refs = pool.refs_mut(k);
            refs.groups.resize(GROUPS.max(refs.groups.len()), None);
            for (s, g) in l.groups.iter().enumerate() {
                if g.is_some() {
                    refs.groups[s] = *g;
                }
            }
            refs.overall = Some(l.overall);
        }
        timeline.push(log);
    }

    let final_assignments = assignments
        .iter()
        .map(|row| row.iter().map(|&m| resolve(&merged_into, m)).collect())
        .collect();
    Ok(FederationRun {
        records,
        counters,
        assignments,
        final_assignments,
        timeline,
        pool,
    })
}
