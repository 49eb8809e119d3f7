//! Consolidation of global models that represent the same concept.
//!
//! For models `i` and `j`, `gap(i, j)` is the worst increase in `θ_i`'s loss
//! when moving from the data of a client assigned to `i` to the data of a
//! client assigned to `j`, summed over groups (or on the global loss). A
//! single group difference above its threshold makes the gap infinite. The
//! distance is `Z_ij = max(gap(i, j), gap(j, i), 0)` and pairs are merged
//! greedily, closest first, with complete linkage.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{ModelId, ModelPool, Threshold, GROUPS};
use crate::error::Result;
use crate::model::{loss_breakdown, weighted_average, LossBreakdown};

/// `losses[(i, j)]`: model `i` evaluated on each client's retained data
/// assigned to model `j`, clients ascending.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CrossLosses {
    pub losses: BTreeMap<(ModelId, ModelId), Vec<LossBreakdown>>,
}

impl CrossLosses {
    fn get(&self, i: ModelId, j: ModelId) -> &[LossBreakdown] {
        self.losses.get(&(i, j)).map_or(&[], Vec::as_slice)
    }
}

/// Symmetric distance matrix over `ids`; unmergeable pairs hold `f64::INFINITY`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub ids: Vec<ModelId>,
    pub z: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn get(&self, a: ModelId, b: ModelId) -> Option<f64> {
        let i = self.ids.iter().position(|&x| x == a)?;
        let j = self.ids.iter().position(|&x| x == b)?;
        Some(self.z[i][j])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeEvent {
    pub first: ModelId,
    pub second: ModelId,
    pub merged: ModelId,
    /// The distance consumed by this merge; always finite.
    pub distance: f64,
}

/// Worst-case loss increase of one model from `own` data (clients assigned to
/// it) to `other` data (clients assigned to the other model).
pub fn pair_gap(
    own: &[LossBreakdown],
    other: &[LossBreakdown],
    delta: &Threshold,
    fairness_aware: bool,
) -> f64 {
    if own.is_empty() || other.is_empty() {
        return f64::INFINITY;
    }
    let diff = |k: &LossBreakdown, l: &LossBreakdown| -> f64 {
        if fairness_aware {
            let mut sum = 0.0;
            for (s, (a, b)) in k.groups.iter().zip(&l.groups).enumerate() {
                if let (Some(a), Some(b)) = (a, b) {
                    let d = a - b;
                    if d > delta.group(s as u8) {
                        return f64::INFINITY;
                    }
                    sum += d;
                }
            }
            sum
        } else {
            let d = k.overall - l.overall;
            if d > delta.global() {
                f64::INFINITY
            } else {
                d
            }
        }
    };
    other
        .iter()
        .flat_map(|k| own.iter().map(move |l| diff(k, l)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Builds `Z` for `ids`; models not marked `eligible` sit at infinite distance
/// from everything.
pub fn distance_matrix(
    ids: &[ModelId],
    eligible: &[bool],
    cross: &CrossLosses,
    delta: &Threshold,
    fairness_aware: bool,
) -> DistanceMatrix {
    let n = ids.len();
    let mut z = vec![vec![f64::INFINITY; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            if !(eligible[a] && eligible[b]) {
                continue;
            }
            let (i, j) = (ids[a], ids[b]);
            let gap_ij = pair_gap(cross.get(i, i), cross.get(i, j), delta, fairness_aware);
            let gap_ji = pair_gap(cross.get(j, j), cross.get(j, i), delta, fairness_aware);
            let d = gap_ij.max(gap_ji).max(0.0);
            z[a][b] = d;
            z[b][a] = d;
        }
    }
    DistanceMatrix {
        ids: ids.to_vec(),
        z,
    }
}

/// Evaluates every eligible model on every client's data for every eligible
/// model. Returns the losses and the number of loss evaluations performed.
pub fn cross_losses(
    pool: &ModelPool<'_>,
    eligible: &[ModelId],
    fairness_aware: bool,
) -> Result<(CrossLosses, u64)> {
    let mut tasks = Vec::new();
    for &i in eligible {
        for &j in eligible {
            for k in pool.clients_of(j) {
                tasks.push((i, j, k));
            }
        }
    }
    let results = tasks
        .par_iter()
        .map(|&(i, j, k)| loss_breakdown(pool.params(i), &pool.data_for(k, j), GROUPS))
        .collect::<Result<Vec<_>>>()?;
    let mut cross = CrossLosses::default();
    let mut evals = 0u64;
    for (&(i, j, _), l) in tasks.iter().zip(results) {
        evals += if fairness_aware {
            l.groups.iter().flatten().count() as u64
        } else {
            1
        };
        cross.losses.entry((i, j)).or_default().push(l);
    }
    Ok((cross, evals))
}

/// The distance matrix over the live pool. A model takes part only once it
/// has been trained and while it still has retained data.
pub fn merge_matrix(
    pool: &ModelPool<'_>,
    delta: &Threshold,
    fairness_aware: bool,
) -> Result<(DistanceMatrix, u64)> {
    let ids = pool.ids();
    let eligible: Vec<bool> = ids
        .iter()
        .map(|&id| pool.model(id).is_some_and(|m| m.trained) && pool.data_size(id) > 0)
        .collect();
    let live: Vec<ModelId> = ids
        .iter()
        .zip(&eligible)
        .filter(|(_, &e)| e)
        .map(|(&id, _)| id)
        .collect();
    let (cross, evals) = cross_losses(pool, &live, fairness_aware)?;
    Ok((
        distance_matrix(&ids, &eligible, &cross, delta, fairness_aware),
        evals,
    ))
}

fn key(a: ModelId, b: ModelId) -> (ModelId, ModelId) {
    (a.min(b), a.max(b))
}

/// Greedy agglomeration of `z`: repeatedly merges the closest finite pair
/// (ties to the lexicographically lowest id pair) into a fresh id, taking the
/// maximum of the two rows as the merged row. Pure; ids start at `next_id`.
pub fn plan_merges(z: &DistanceMatrix, mut next_id: ModelId) -> Vec<MergeEvent> {
    let mut active = z.ids.clone();
    let mut dist: BTreeMap<(ModelId, ModelId), f64> = BTreeMap::new();
    for (a, &i) in z.ids.iter().enumerate() {
        for (b, &j) in z.ids.iter().enumerate().skip(a + 1) {
            dist.insert(key(i, j), z.z[a][b]);
        }
    }
    let mut events = Vec::new();
    loop {
        let mut best: Option<((ModelId, ModelId), f64)> = None;
        for (&pair, &d) in &dist {
            if d.is_finite() && best.is_none_or(|(_, b)| d < b) {
                best = Some((pair, d));
            }
        }
        let Some(((a, b), d)) = best else { break };
        let merged = next_id;
        next_id += 1;
        active.retain(|&x| x != a && x != b);
        for &l in &active {
            let da = dist[&key(a, l)];
            let db = dist[&key(b, l)];
            dist.insert(key(merged, l), da.max(db));
        }
        dist.retain(|&(x, y), _| x != a && x != b && y != a && y != b);
        active.push(merged);
        events.push(MergeEvent {
            first: a,
            second: b,
            merged,
            distance: d,
        });
    }
    events
}

/// Applies the merges planned from `z` to the pool: each merged model is the
/// data-size-weighted average of its parts, and all history assigned to the
/// parts moves to the merged id.
pub fn merge_step(pool: &mut ModelPool<'_>, z: &DistanceMatrix) -> Result<Vec<MergeEvent>> {
    let events = plan_merges(z, pool.next_id());
    for ev in &events {
        let wa = pool.data_size(ev.first) as f64;
        let wb = pool.data_size(ev.second) as f64;
        let params = weighted_average(&[pool.params(ev.first), pool.params(ev.second)], &[wa, wb])?;
        let id = pool.insert(params, true);
        debug_assert_eq!(id, ev.merged);
        pool.relabel(ev.first, id);
        pool.relabel(ev.second, id);
        pool.remove(ev.first);
        pool.remove(ev.second);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ConceptId, Example, TimestepBatch};
    use crate::model::{Architecture, ModelParams};

    const INF: f64 = f64::INFINITY;

    fn lb(g0: f64, g1: f64) -> LossBreakdown {
        LossBreakdown {
            overall: 0.1 * g0 + 0.9 * g1,
            groups: vec![Some(g0), Some(g1)],
            group_counts: vec![1, 9],
        }
    }

    fn matrix(ids: &[ModelId], z: &[&[f64]]) -> DistanceMatrix {
        DistanceMatrix {
            ids: ids.to_vec(),
            z: z.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn gap_takes_max_over_client_pairs() {
        let d = Threshold::Uniform(0.5);
        // own data losses of model i on its clients; other = on j's clients.
        let own = [lb(0.1, 0.1), lb(0.2, 0.1)];
        let other = [lb(0.3, 0.2), lb(0.15, 0.1)];
        // Pairs: (0.3-0.1)+(0.2-0.1)=0.3, (0.3-0.2)+(0.1)=0.2, 0.05, -0.05 -> max 0.3
        assert!((pair_gap(&own, &other, &d, true) - 0.3).abs() < 1e-12);
        assert_eq!(pair_gap(&own, &[], &d, true), INF);
    }

    #[test]
    fn hand_distance_and_infinity_rule() {
        let d = Threshold::Uniform(0.5);
        let mut cross = CrossLosses::default();
        // L_01 - L_00 = 0.3 ; L_10 - L_11 = 0.1
        cross.losses.insert((0, 0), vec![lb(0.1, 0.1)]);
        cross.losses.insert((0, 1), vec![lb(0.3, 0.2)]);
        cross.losses.insert((1, 1), vec![lb(0.2, 0.2)]);
        cross.losses.insert((1, 0), vec![lb(0.25, 0.25)]);
        let z = distance_matrix(&[0, 1], &[true, true], &cross, &d, true);
        assert!((z.z[0][1] - 0.3).abs() < 1e-12);
        assert_eq!(z.z[0][1], z.z[1][0]);

        // A single group moving by 0.9 > 0.5 blocks the pair.
        cross.losses.insert((1, 0), vec![lb(1.1, 0.2)]);
        let z = distance_matrix(&[0, 1], &[true, true], &cross, &d, true);
        assert_eq!(z.z[0][1], INF);

        // Ineligible models never merge.
        cross.losses.insert((1, 0), vec![lb(0.25, 0.25)]);
        let z = distance_matrix(&[0, 1], &[true, false], &cross, &d, true);
        assert_eq!(z.z[0][1], INF);
    }

    #[test]
    fn negative_gaps_floor_at_zero() {
        let d = Threshold::Uniform(0.5);
        let mut cross = CrossLosses::default();
        cross.losses.insert((0, 0), vec![lb(0.3, 0.3)]);
        cross.losses.insert((0, 1), vec![lb(0.1, 0.1)]);
        cross.losses.insert((1, 1), vec![lb(0.3, 0.3)]);
        cross.losses.insert((1, 0), vec![lb(0.2, 0.2)]);
        let z = distance_matrix(&[0, 1], &[true, true], &cross, &d, true);
        assert_eq!(z.z[0][1], 0.0);
    }

    #[test]
    fn global_variant_ignores_groups() {
        let d = Threshold::Uniform(0.5);
        // Group 0 jumps by 2.0 but the global loss only by 0.2.
        let own = [lb(0.1, 0.1)];
        let other = [lb(2.1, 0.1)];
        assert!((pair_gap(&own, &other, &d, false) - 0.2).abs() < 1e-12);
        assert_eq!(pair_gap(&own, &other, &d, true), INF);
    }

    #[test]
    fn all_infinite_means_no_merges() {
        let z = matrix(&[0, 1, 2], &[&[0.0, INF, INF], &[INF, 0.0, INF], &[INF, INF, 0.0]]);
        assert!(plan_merges(&z, 3).is_empty());
    }

    #[test]
    fn single_finite_pair_merges_once() {
        let z = matrix(&[0, 1, 2], &[&[0.0, 0.1, INF], &[0.1, 0.0, INF], &[INF, INF, 0.0]]);
        let ev = plan_merges(&z, 3);
        assert_eq!(
            ev,
            vec![MergeEvent {
                first: 0,
                second: 1,
                merged: 3,
                distance: 0.1
            }]
        );
    }

    /// Brute-force complete-linkage reference: clusters are sets of original
    /// ids; the distance between clusters is the max over member pairs.
    fn brute_force(ids: &[ModelId], z: &[&[f64]]) -> Vec<Vec<ModelId>> {
        let mut clusters: Vec<Vec<ModelId>> = ids.iter().map(|&i| vec![i]).collect();
        let pos = |x: ModelId| ids.iter().position(|&y| y == x).unwrap();
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut d: f64 = 0.0;
                    for &x in &clusters[a] {
                        for &y in &clusters[b] {
                            d = d.max(z[pos(x)][pos(y)]);
                        }
                    }
                    if d.is_finite() && best.is_none_or(|(_, _, bd)| d < bd) {
                        best = Some((a, b, d));
                    }
                }
            }
            let Some((a, b, _)) = best else { break };
            let mut merged = clusters[a].clone();
            merged.extend(&clusters[b]);
            merged.sort();
            clusters.remove(b);
            clusters.remove(a);
            clusters.push(merged);
        }
        clusters.sort();
        clusters
    }

    #[test]
    fn three_model_traces_match_brute_force() {
        let fixtures: [&[&[f64]]; 4] = [
            &[&[0.0, 0.1, 0.4], &[0.1, 0.0, 0.2], &[0.4, 0.2, 0.0]],
            &[&[0.0, 0.1, INF], &[0.1, 0.0, 0.2], &[INF, 0.2, 0.0]],
            &[&[0.0, 0.3, 0.3], &[0.3, 0.0, 0.3], &[0.3, 0.3, 0.0]],
            &[&[0.0, INF, 0.5], &[INF, 0.0, 0.05], &[0.5, 0.05, 0.0]],
        ];
        for z in fixtures {
            let ids = [0, 1, 2];
            let events = plan_merges(&matrix(&ids, z), 3);
            let mut members: BTreeMap<ModelId, Vec<ModelId>> =
                ids.iter().map(|&i| (i, vec![i])).collect();
            for ev in &events {
                assert!(ev.distance.is_finite());
                let mut m = members.remove(&ev.first).unwrap();
                m.extend(members.remove(&ev.second).unwrap());
                m.sort();
                members.insert(ev.merged, m);
            }
            let mut got: Vec<Vec<ModelId>> = members.into_values().collect();
            got.sort();
            assert_eq!(got, brute_force(&ids, z), "fixture {z:?}");
        }
        // Equal distances resolve to the lowest id pair first.
        let ev = plan_merges(&matrix(&[0, 1, 2], fixtures[2]), 3);
        assert_eq!((ev[0].first, ev[0].second), (0, 1));
        // Fixture 0 trace: (0,1)@0.1 then (2,3)@max(0.4,0.2)=0.4.
        let ev = plan_merges(&matrix(&[0, 1, 2], fixtures[0]), 3);
        assert_eq!(ev.len(), 2);
        assert_eq!((ev[1].first, ev[1].second, ev[1].distance), (2, 3, 0.4));
    }

    proptest::proptest! {
        #[test]
        fn plan_matches_brute_force_on_random_matrices(
            n in 2usize..6,
            cells in proptest::collection::vec(proptest::option::weighted(0.7, 0.0f64..1.0), 15),
        ) {
            let ids: Vec<ModelId> = (0..n as u64).collect();
            let mut z = vec![vec![0.0; n]; n];
            let mut it = cells.into_iter();
            for a in 0..n {
                for b in a + 1..n {
                    let d = it.next().flatten().unwrap_or(INF);
                    z[a][b] = d;
                    z[b][a] = d;
                }
            }
            let rows: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
            let events = plan_merges(&matrix(&ids, &rows), n as u64);
            let mut members: BTreeMap<ModelId, Vec<ModelId>> =
                ids.iter().map(|&i| (i, vec![i])).collect();
            for ev in &events {
                proptest::prop_assert!(ev.distance.is_finite());
                let mut m = members.remove(&ev.first).unwrap();
                m.extend(members.remove(&ev.second).unwrap());
                m.sort();
                // Complete linkage: the consumed distance bounds every member pair.
                for &x in &m {
                    for &y in &m {
                        proptest::prop_assert!(z[x as usize][y as usize] <= ev.distance);
                    }
                }
                members.insert(ev.merged, m);
            }
            let mut got: Vec<Vec<ModelId>> = members.into_values().collect();
            got.sort();
            proptest::prop_assert_eq!(got, brute_force(&ids, &rows));
        }
    }

    #[test]
    fn merge_step_averages_by_data_size() {
        let arch = Architecture::new(1, 1, 2).unwrap();
        let vals = |v: f64| ModelParams::from_values(arch, vec![v; 6]).unwrap();
        let mut pool = ModelPool::new(2, vals(2.0));
        let m1 = pool.insert(vals(6.0), true);
        let mk = |k: usize, n: usize| TimestepBatch {
            client: k,
            timestep: 0,
            examples: vec![
                Example {
                    features: vec![0.0],
                    label: 0,
                    group: 1
                };
                n
            ],
            concept: ConceptId::A,
        };
        let b0 = mk(0, 100);
        let b1 = mk(1, 300);
        pool.retain(0, 0, 0, &b0);
        pool.retain(1, 0, m1, &b1);
        pool.set_current(1, m1);
        let z = matrix(&[0, m1], &[&[0.0, 0.2], &[0.2, 0.0]]);
        let events = merge_step(&mut pool, &z).unwrap();
        assert_eq!(events.len(), 1);
        let merged = events[0].merged;
        assert_eq!(pool.ids(), vec![merged]);
        assert!(pool.params(merged).values().iter().all(|&v| v == 5.0));
        assert_eq!(pool.current(0), merged);
        assert_eq!(pool.current(1), merged);
        assert_eq!(pool.data_size(merged), 400);
        assert!(pool.assignments_are_live());
    }
}
