use std::path::Path;

use rand::seq::SliceRandom;

use super::{
    apply_concept, generate_synthetic, load_idx, transform_group0_image, ConceptId, DriftSchedule,
    Example, PixelMatrix, SwapTable, PRIVILEGED, SYNTHETIC_CLASSES, SYNTHETIC_FEATURES,
    UNPRIVILEGED,
};
use crate::error::{Error, Result};
use crate::seed;

/// One client's data for one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct TimestepBatch {
    pub client: usize,
    pub timestep: usize,
    pub examples: Vec<Example>,
    pub concept: ConceptId,
}

impl TimestepBatch {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn group_count(&self, group: u8) -> usize {
        self.examples.iter().filter(|e| e.group == group).count()
    }
}

/// Batches indexed `[client][timestep]`.
pub type StreamGrid = Vec<Vec<TimestepBatch>>;

/// Labelled images loaded from IDX files.
#[derive(Clone, Debug)]
pub struct IdxSource {
    pub images: Vec<(PixelMatrix, u8)>,
}

impl IdxSource {
    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        Ok(Self {
            images: load_idx(images, labels)?,
        })
    }

    fn classes(&self) -> usize {
        let max = self.images.iter().map(|(_, l)| *l as usize).max().unwrap_or(0);
        (max + 1).max(SwapTable::digits().min_classes())
    }

    fn feature_dim(&self) -> usize {
        self.images.first().map(|(m, _)| m.data.len()).unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub enum Dataset {
    /// Gaussian blobs with the given class count.
    Synthetic { classes: usize },
    Idx(IdxSource),
}

impl Dataset {
    pub fn synthetic() -> Self {
        Dataset::Synthetic {
            classes: SYNTHETIC_CLASSES,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Dataset::Synthetic { classes } => *classes,
            Dataset::Idx(src) => src.classes(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Dataset::Synthetic { .. } => SYNTHETIC_FEATURES,
            Dataset::Idx(src) => src.feature_dim(),
        }
    }

    pub fn swap_table(&self) -> SwapTable {
        match self {
            Dataset::Synthetic { .. } => SwapTable::zero_indexed(),
            Dataset::Idx(_) => SwapTable::digits(),
        }
    }
}

/// Privileged-group size `n` such that `n + round(alpha * n)` reaches `total`.
/// When no `n` hits `total` exactly the smallest overshoot (by one) is used.
pub fn privileged_count(total: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    (1..=total)
        .find(|&n| n + (alpha * n as f64).round() as usize >= total)
        .ok_or_else(|| Error::config("per-timestep size must be positive"))
}

/// Builds the `[client][timestep]` grid of batches. Cell `(k, t)` follows
/// concept `schedule[k][t]` and draws from an RNG keyed by `(seed, k, t)`.
pub fn build_stream(
    dataset: &Dataset,
    schedule: &DriftSchedule,
    alpha: f64,
    per_timestep_size: usize,
    seed: u64,
) -> Result<StreamGrid> {
    let n_priv = privileged_count(per_timestep_size, alpha)?;
    let table = dataset.swap_table();
    match dataset {
        Dataset::Synthetic { classes } => (0..schedule.clients())
            .map(|k| {
                (0..schedule.timesteps())
                    .map(|t| {
                        let concept = schedule.concept(k, t);
                        let cell_seed =
                            seed::derive_seed(seed, &[seed::TAG_STREAM, k as u64, t as u64]);
                        let examples =
                            generate_synthetic(concept, n_priv, alpha, *classes, cell_seed, &table)?;
                        Ok(TimestepBatch {
                            client: k,
                            timestep: t,
                            examples,
                            concept,
                        })
                    })
                    .collect()
            })
            .collect(),
        Dataset::Idx(src) => idx_stream(src, schedule, alpha, n_priv, seed, &table),
    }
}

fn idx_stream(
    src: &IdxSource,
    schedule: &DriftSchedule,
    alpha: f64,
    n_priv: usize,
    seed: u64,
    table: &SwapTable,
) -> Result<StreamGrid> {
    let n_unpriv = (alpha * n_priv as f64).round() as usize;
    let per_cell = n_priv + n_unpriv;
    let cells = schedule.clients() * schedule.timesteps();
    let required = cells * per_cell;
    if required > src.images.len() {
        return Err(Error::Capacity {
            required,
            available: src.images.len(),
        });
    }
    let mut order: Vec<usize> = (0..src.images.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive_seed(seed, &[seed::TAG_SOURCE])));

    let mut grid = Vec::with_capacity(schedule.clients());
    for k in 0..schedule.clients() {
        let mut row = Vec::with_capacity(schedule.timesteps());
        for t in 0..schedule.timesteps() {
            let start = (k * schedule.timesteps() + t) * per_cell;
            let picks = &order[start..start + per_cell];
            let concept = schedule.concept(k, t);
            let mut examples = Vec::with_capacity(per_cell);
            for (i, &idx) in picks.iter().enumerate() {
                let (img, label) = &src.images[idx];
                let (group, pixels) = if i < n_priv {
                    (PRIVILEGED, img.data.clone())
                } else {
                    (UNPRIVILEGED, transform_group0_image(img)?.data)
                };
                let e = Example {
                    features: pixels,
                    label: *label as usize,
                    group,
                };
                examples.push(apply_concept(&e, concept, table));
            }
            row.push(TimestepBatch {
                client: k,
                timestep: t,
                examples,
                concept,
            });
        }
        grid.push(row);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_schedule, Scenario};

    #[test]
    fn size_equation() {
        assert_eq!(privileged_count(200, 0.1).unwrap(), 182);
        assert_eq!(privileged_count(200, 1.0).unwrap(), 100);
        assert_eq!(privileged_count(200, 0.5).unwrap(), 133);
        assert!(privileged_count(200, 0.0).is_err());
    }

    #[test]
    fn none_schedule_is_all_a() {
        let s = build_schedule(Scenario::None, 3, 4).unwrap();
        let g = build_stream(&Dataset::synthetic(), &s, 0.5, 30, 1).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.iter().flatten().all(|b| b.concept == ConceptId::A));
        assert!(g.iter().flatten().all(|b| b.len() == 30));
    }

    #[test]
    fn cells_follow_schedule() {
        let s = build_schedule(Scenario::S4_1, 10, 10).unwrap();
        let g = build_stream(&Dataset::synthetic(), &s, 0.1, 200, 5).unwrap();
        for k in 0..10 {
            for t in 0..10 {
                let b = &g[k][t];
                assert_eq!((b.client, b.timestep, b.concept), (k, t, s.concept(k, t)));
                assert_eq!(b.group_count(1), 182);
                assert_eq!(b.group_count(0), 18);
                assert!(b.examples.iter().all(|e| e.label < 5));
            }
        }
    }

    #[test]
    fn stream_is_deterministic() {
        let s = build_schedule(Scenario::S4_2, 10, 10).unwrap();
        let a = build_stream(&Dataset::synthetic(), &s, 0.1, 40, 8).unwrap();
        assert_eq!(a, build_stream(&Dataset::synthetic(), &s, 0.1, 40, 8).unwrap());
        assert_ne!(a, build_stream(&Dataset::synthetic(), &s, 0.1, 40, 9).unwrap());
    }

    fn tiny_idx(n: usize) -> IdxSource {
        IdxSource {
            images: (0..n)
                .map(|i| {
                    let mut data = vec![0.0; 4];
                    data[0] = i as f64 / n as f64;
                    (PixelMatrix::new(2, 2, data).unwrap(), (i % 10) as u8)
                })
                .collect(),
        }
    }

    #[test]
    fn idx_capacity_error() {
        let s = build_schedule(Scenario::None, 2, 2).unwrap();
        let err = build_stream(&Dataset::Idx(tiny_idx(30)), &s, 1.0, 10, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::Capacity {
                required: 40,
                available: 30
            }
        ));
    }

    #[test]
    fn idx_cells_are_disjoint_and_group0_transformed() {
        let s = build_schedule(Scenario::None, 2, 3).unwrap();
        let src = tiny_idx(100);
        let g = build_stream(&Dataset::Idx(src), &s, 0.5, 12, 4).unwrap();
        let mut seen = std::collections::HashSet::new();
        for b in g.iter().flatten() {
            assert_eq!(b.group_count(1), 8);
            assert_eq!(b.group_count(0), 4);
            for e in &b.examples {
                // Pixel 0 is unique per source image; for transformed copies it
                // lands at (1, 0) and is inverted.
                let key = if e.group == 1 {
                    e.features[0]
                } else {
                    1.0 - e.features[2]
                };
                assert!(seen.insert(key.to_bits()), "source image reused");
            }
        }
    }
}
