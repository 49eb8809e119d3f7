//! Gaussian-blob stand-in for the image datasets. Each (class, group) pair has
//! its own unit-variance blob centred on a vertex of the hypercube
//! `{-3, 3}^4`, so any two blob means are at least 6 standard deviations apart.

use rand_distr::{Distribution, StandardNormal};

use super::{apply_concept, ConceptId, Example, SwapTable, PRIVILEGED, UNPRIVILEGED};
use crate::error::{Error, Result};
use crate::seed;

pub const SYNTHETIC_FEATURES: usize = 4;
pub const SYNTHETIC_CLASSES: usize = 5;
const MAX_CLASSES: usize = 8;
const HALF_SIDE: f64 = 3.0;

/// Centre of the blob for `class` in `group`.
pub fn blob_mean(class: usize, group: u8) -> [f64; SYNTHETIC_FEATURES] {
    let vertex = class + MAX_CLASSES * usize::from(group == UNPRIVILEGED);
    let mut m = [0.0; SYNTHETIC_FEATURES];
    for (bit, slot) in m.iter_mut().enumerate() {
        // Gray-code the index so consecutive classes differ in one coordinate only
        // and group blobs interleave across the cube.
        let code = vertex ^ (vertex >> 1);
        *slot = if code >> bit & 1 == 1 { HALF_SIDE } else { -HALF_SIDE };
    }
    m
}

fn draw_group(group: u8, n: usize, classes: usize, seed: u64) -> Vec<Example> {
    let mut rng = seed::rng(seed::derive_seed(seed, &[u64::from(group)]));
    (0..n)
        .map(|i| {
            let label = i % classes;
            let mean = blob_mean(label, group);
            let features = mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + z
                })
                .collect();
            Example {
                features,
                label,
                group,
            }
        })
        .collect()
}

/// `n_priv` privileged examples and `round(alpha * n_priv)` unprivileged ones,
/// labels balanced within each group, relabelled under `concept`.
pub fn generate_synthetic(
    concept: ConceptId,
    n_priv: usize,
    alpha: f64,
    classes: usize,
    seed: u64,
    table: &SwapTable,
) -> Result<Vec<Example>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if classes < table.min_classes() || classes > MAX_CLASSES {
        return Err(Error::config(format!(
            "synthetic data supports {}..={MAX_CLASSES} classes with this swap table, got {classes}",
            table.min_classes()
        )));
    }
    if n_priv < classes {
        return Err(Error::config(format!(
            "need at least one privileged example per class ({classes}), got {n_priv}"
        )));
    }
    let n_unpriv = (alpha * n_priv as f64).round() as usize;
    let mut out = draw_group(PRIVILEGED, n_priv, classes, seed);
    out.extend(draw_group(UNPRIVILEGED, n_unpriv, classes, seed));
    Ok(out
        .iter()
        .map(|e| apply_concept(e, concept, table))
        .collect())
}
