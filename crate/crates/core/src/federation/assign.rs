//! Per-client model selection and drift detection.

use super::{ModelId, ModelPool, RefLosses, Threshold, GROUPS};
use crate::data::{DriftSchedule, TimestepBatch};
use crate::error::{Error, Result};
use crate::model::{loss_breakdown, LossBreakdown, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assignment {
    Existing(ModelId),
    /// No model is within threshold: drift detected, a new model is needed.
    New,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossRow {
    pub model: ModelId,
    pub losses: LossBreakdown,
}

/// Losses of every live model on one batch, rows in ascending model id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTable {
    pub rows: Vec<LossRow>,
}

impl LossTable {
    /// Number of (model, present group) loss values in the table.
    pub fn group_evaluations(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.losses.groups.iter().flatten().count())
            .sum()
    }
}

/// Evaluates every live model on `batch`.
pub fn evaluate_models(pool: &ModelPool<'_>, batch: &TimestepBatch) -> Result<LossTable> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("assignment batch"));
    }
    let rows = pool
        .ids()
        .into_iter()
        .map(|id| {
            Ok(LossRow {
                model: id,
                losses: loss_breakdown(pool.params(id), &batch.examples, GROUPS)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossTable { rows })
}

/// Lowest-scoring admissible row, ties to the lowest id.
fn select<F>(table: &LossTable, mut score: F) -> Assignment
where
    F: FnMut(&LossBreakdown) -> Option<f64>,
{
    let mut best: Option<(ModelId, f64)> = None;
    for row in &table.rows {
        if let Some(s) = score(&row.losses) {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((row.model, s));
            }
        }
    }
    best.map_or(Assignment::New, |(id, _)| Assignment::Existing(id))
}

/// Group-aware selection: a model is admissible when every group present in
/// the batch stays within `delta` of the client's reference loss for that
/// group; among admissible models the lowest sum of group losses wins.
pub fn decide_fair(table: &LossTable, refs: &RefLosses, delta: &Threshold) -> Assignment {
    select(table, |l| {
        let mut sum = 0.0;
        for (s, loss) in l.groups.iter().enumerate() {
            let Some(loss) = *loss else { continue };
            if let Some(r) = refs.group(s as u8) {
                if loss > r + delta.group(s as u8) {
                    return None;
                }
            }
            sum += loss;
        }
        Some(sum)
    })
}

/// Global-loss selection used by FedDrift.
pub fn decide_global(table: &LossTable, refs: &RefLosses, delta: &Threshold) -> Assignment {
    select(table, |l| match refs.overall {
        Some(r) if l.overall > r + delta.global() => None,
        _ => Some(l.overall),
    })
}

pub fn assign_fair(
    pool: &ModelPool<'_>,
    client: usize,
    batch: &TimestepBatch,
    delta: &Threshold,
) -> Result<(Assignment, LossTable)> {
    let table = evaluate_models(pool, batch)?;
    Ok((decide_fair(&table, pool.refs(client), delta), table))
}

pub fn assign_feddrift(
    pool: &ModelPool<'_>,
    client: usize,
    batch: &TimestepBatch,
    delta: &Threshold,
) -> Result<(Assignment, LossTable)> {
    let table = evaluate_models(pool, batch)?;
    Ok((decide_global(&table, pool.refs(client), delta), table))
}

/// One permanent model per concept; the id is the concept index.
pub fn assign_oracle(schedule: &DriftSchedule, client: usize, timestep: usize) -> ModelId {
    schedule.concept(client, timestep).index() as ModelId
}

/// Adds `params` as a new model, assigns `client` to it and seeds the client's
/// reference losses with the per-group minimum over the models in `table`.
pub fn spawn_model(
    pool: &mut ModelPool<'_>,
    client: usize,
    params: ModelParams,
    table: &LossTable,
) -> ModelId {
    let id = pool.insert(params, false);
    pool.set_current(client, id);
    let min_of = |f: &dyn Fn(&LossBreakdown) -> Option<f64>| {
        table
            .rows
            .iter()
            .filter_map(|r| f(&r.losses))
            .reduce(f64::min)
    };
    let refs = pool.refs_mut(client);
    let groups = table.rows.first().map_or(0, |r| r.losses.groups.len());
    refs.groups.resize(groups.max(refs.groups.len()), None);
    for s in 0..groups {
        if let Some(m) = min_of(&|l| l.groups[s]) {
            refs.groups[s] = Some(m);
        }
    }
    if let Some(m) = min_of(&|l| Some(l.overall)) {
        refs.overall = Some(m);
    }
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_schedule, ConceptId, Scenario};
    use crate::model::Architecture;
    use proptest::prelude::*;

    fn lb(overall: f64, g0: Option<f64>, g1: Option<f64>) -> LossBreakdown {
        LossBreakdown {
            overall,
            groups: vec![g0, g1],
            group_counts: vec![g0.is_some() as usize, g1.is_some() as usize],
        }
    }

    fn table(rows: &[(ModelId, f64, Option<f64>, Option<f64>)]) -> LossTable {
        LossTable {
            rows: rows
                .iter()
                .map(|&(model, o, g0, g1)| LossRow {
                    model,
                    losses: lb(o, g0, g1),
                })
                .collect(),
        }
    }

    fn refs(g0: f64, g1: f64, overall: f64) -> RefLosses {
        RefLosses {
            groups: vec![Some(g0), Some(g1)],
            overall: Some(overall),
        }
    }

    #[test]
    fn infinite_delta_never_spawns() {
        let t = table(&[(0, 9.0, Some(9.0), Some(9.0)), (1, 5.0, Some(7.0), Some(1.0))]);
        let r = refs(0.0, 0.0, 0.0);
        assert_eq!(decide_fair(&t, &r, &Threshold::infinite()), Assignment::Existing(1));
        assert_eq!(decide_global(&t, &r, &Threshold::infinite()), Assignment::Existing(1));
    }

    #[test]
    fn per_group_admissibility() {
        // m0 (0.9, 0.2) breaks group 0 (0.9 > 0.4 + 0.1); m1 (0.3, 0.3) passes both.
        let t = table(&[(0, 0.3, Some(0.9), Some(0.2)), (1, 0.3, Some(0.3), Some(0.3))]);
        let d = Threshold::Uniform(0.1);
        assert_eq!(decide_fair(&t, &refs(0.4, 0.4, 0.3), &d), Assignment::Existing(1));
    }

    #[test]
    fn all_violating_spawns() {
        let t = table(&[(0, 2.0, Some(2.0), Some(0.1)), (3, 2.0, Some(0.1), Some(2.0))]);
        let d = Threshold::Uniform(0.5);
        assert_eq!(decide_fair(&t, &refs(0.1, 0.1, 0.1), &d), Assignment::New);
    }

    #[test]
    fn global_loss_masks_group_drift() {
        // Group 0 (10% of the batch) jumps from 0.1 to 0.9; the batch mean
        // moves by only 0.08.
        let r = refs(0.1, 0.1, 0.1);
        let overall: f64 = 0.1 * 0.9 + 0.9 * 0.1;
        assert!((overall - (0.1 + 0.08)).abs() < 1e-12);
        let t = table(&[(0, overall, Some(0.9), Some(0.1))]);
        let d = Threshold::Uniform(0.5);
        assert_eq!(decide_global(&t, &r, &d), Assignment::Existing(0));
        assert_eq!(decide_fair(&t, &r, &d), Assignment::New);
    }

    #[test]
    fn global_jump_spawns() {
        let t = table(&[(0, 1.4, None, None), (1, 1.5, None, None)]);
        assert_eq!(
            decide_global(&t, &refs(0.0, 0.0, 0.2), &Threshold::Uniform(0.5)),
            Assignment::New
        );
        let single = table(&[(0, 0.3, None, None)]);
        assert_eq!(
            decide_global(&single, &refs(0.0, 0.0, 0.2), &Threshold::Uniform(0.5)),
            Assignment::Existing(0)
        );
    }

    #[test]
    fn absent_groups_impose_nothing() {
        let t = table(&[(0, 0.2, None, Some(0.2)), (1, 0.1, Some(5.0), Some(0.1))]);
        // m1's group-0 loss breaks the threshold; m0 has no group-0 data at all.
        assert_eq!(
            decide_fair(&t, &refs(0.1, 0.1, 0.1), &Threshold::Uniform(0.5)),
            Assignment::Existing(0)
        );
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let t = table(&[(2, 0.1, Some(0.1), Some(0.1)), (5, 0.1, Some(0.1), Some(0.1))]);
        assert_eq!(
            decide_fair(&t, &refs(0.1, 0.1, 0.1), &Threshold::Uniform(1.0)),
            Assignment::Existing(2)
        );
    }

    #[test]
    fn spawn_sets_min_refs() {
        let arch = Architecture::new(1, 1, 2).unwrap();
        let mut pool = ModelPool::new(2, ModelParams::zeros(arch));
        pool.insert(ModelParams::zeros(arch), true);
        let t = table(&[(0, 0.4, Some(0.9), Some(0.2)), (1, 0.6, Some(0.5), Some(0.8))]);
        let id = spawn_model(&mut pool, 1, ModelParams::zeros(arch), &t);
        assert_eq!(id, 2);
        assert_eq!(pool.len(), 3);
        assert_eq!(pool.current(1), 2);
        assert_eq!(pool.refs(1).groups, vec![Some(0.5), Some(0.2)]);
        assert_eq!(pool.refs(1).overall, Some(0.4));
        // A second spawn in the same timestep gets its own model.
        let id2 = spawn_model(&mut pool, 0, ModelParams::zeros(arch), &t);
        assert_ne!(id, id2);
    }

    #[test]
    fn oracle_maps_concepts_to_ids() {
        let s = build_schedule(Scenario::S4_1, 10, 10).unwrap();
        assert_eq!(assign_oracle(&s, 0, 0), 0);
        assert_eq!(assign_oracle(&s, 0, 6), assign_oracle(&s, 5, 4));
        assert_eq!(assign_oracle(&s, 0, 2), ConceptId::B.index() as ModelId);
        let used: std::collections::BTreeSet<ModelId> = (0..10)
            .flat_map(|k| (0..10).map(move |t| (k, t)))
            .map(|(k, t)| assign_oracle(&s, k, t))
            .collect();
        assert_eq!(used.len(), 3);
    }

    fn arb_table() -> impl Strategy<Value = (LossTable, RefLosses, f64)> {
        (
            prop::collection::vec((0.0f64..3.0, 0.0f64..3.0), 1..6),
            (0.0f64..2.0, 0.0f64..2.0),
            0.01f64..2.0,
        )
            .prop_map(|(rows, (r0, r1), delta)| {
                let t = LossTable {
                    rows: rows
                        .iter()
                        .enumerate()
                        .map(|(i, &(a, b))| LossRow {
                            model: i as ModelId,
                            losses: lb(0.9 * b + 0.1 * a, Some(a), Some(b)),
                        })
                        .collect(),
                };
                (t, refs(r0, r1, 0.9 * r1 + 0.1 * r0), delta)
            })
    }

    fn scale(t: &LossTable, r: &RefLosses, c: f64) -> (LossTable, RefLosses) {
        let rows = t
            .rows
            .iter()
            .map(|row| LossRow {
                model: row.model,
                losses: LossBreakdown {
                    overall: row.losses.overall * c,
                    groups: row.losses.groups.iter().map(|g| g.map(|v| v * c)).collect(),
                    group_counts: row.losses.group_counts.clone(),
                },
            })
            .collect();
        let r = RefLosses {
            groups: r.groups.iter().map(|g| g.map(|v| v * c)).collect(),
            overall: r.overall.map(|v| v * c),
        };
        (LossTable { rows }, r)
    }

    proptest! {
        #[test]
        fn decisions_are_scale_invariant((t, r, delta) in arb_table(), c in prop::sample::select(vec![0.5f64, 2.0, 4.0, 0.25])) {
            // Powers of two keep the scaled comparisons exact.
            let d = Threshold::Uniform(delta);
            let (ts, rs) = scale(&t, &r, c);
            prop_assert_eq!(decide_fair(&t, &r, &d), decide_fair(&ts, &rs, &d.scaled(c)));
            prop_assert_eq!(decide_global(&t, &r, &d), decide_global(&ts, &rs, &d.scaled(c)));
        }
    }
}
