//! Accuracy, group-fairness ratios and loss disparity.
//!
//! The three ratio metrics always put the lower group value in the numerator,
//! so every defined value lies in `[0, 1]` and 1 means parity. A metric is
//! `None` (undefined) when the data cannot support it, e.g. a group is absent.

use std::collections::BTreeMap;

use crate::data::{ConceptId, PRIVILEGED, UNPRIVILEGED};
use crate::error::{Error, Result};

/// True label, predicted label and group of one evaluated example.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalRecord {
    pub label: usize,
    pub predicted: usize,
    pub group: u8,
}

impl EvalRecord {
    pub fn new(label: usize, predicted: usize, group: u8) -> Self {
        Self {
            label,
            predicted,
            group,
        }
    }

    fn correct(&self) -> bool {
        self.label == self.predicted
    }
}

/// One row of output: how client `client`'s model fared on its batch at `timestep`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub client: usize,
    pub timestep: usize,
    pub model_id: u64,
    pub true_concept: ConceptId,
    pub n_models: usize,
    pub acc: f64,
    pub aeq: Option<f64>,
    pub oeq: Option<f64>,
    pub opp: Option<f64>,
    pub loss: f64,
    pub loss_g0: Option<f64>,
    pub loss_g1: Option<f64>,
    pub disparity: f64,
}

pub fn accuracy(recs: &[EvalRecord]) -> Result<f64> {
    if recs.is_empty() {
        return Err(Error::EmptyInput("accuracy records"));
    }
    Ok(recs.iter().filter(|r| r.correct()).count() as f64 / recs.len() as f64)
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    (hi > 0.0).then(|| lo / hi)
}

fn group_accuracy(recs: &[EvalRecord], group: u8) -> Option<f64> {
    let (n, hits) = recs
        .iter()
        .filter(|r| r.group == group)
        .fold((0usize, 0usize), |(n, h), r| (n + 1, h + r.correct() as usize));
    (n > 0).then(|| hits as f64 / n as f64)
}

/// Accuracy equality: lower group accuracy over higher.
pub fn aeq(recs: &[EvalRecord]) -> Option<f64> {
    let a0 = group_accuracy(recs, UNPRIVILEGED)?;
    let a1 = group_accuracy(recs, PRIVILEGED)?;
    ratio(a0, a1)
}

/// Per-class hit/total counts for one group, keyed by class.
type ClassCounts = BTreeMap<usize, (usize, usize)>;

fn class_rates(recs: &[EvalRecord], group: u8, by_prediction: bool) -> ClassCounts {
    let mut counts = ClassCounts::new();
    for r in recs.iter().filter(|r| r.group == group) {
        let class = if by_prediction { r.predicted } else { r.label };
        let slot = counts.entry(class).or_default();
        slot.1 += 1;
        slot.0 += r.correct() as usize;
    }
    counts
}

fn rate_ratio(recs: &[EvalRecord], overlap: bool, by_prediction: bool) -> Option<f64> {
    let g0 = class_rates(recs, UNPRIVILEGED, by_prediction);
    let g1 = class_rates(recs, PRIVILEGED, by_prediction);
    let rate = |(hits, n): (usize, usize)| hits as f64 / n as f64;
    if overlap {
        let ratios: Vec<f64> = g0
            .iter()
            .filter_map(|(class, &c0)| {
                let &c1 = g1.get(class)?;
                ratio(rate(c0), rate(c1))
            })
            .collect();
        (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
    } else {
        let mean = |m: &ClassCounts| -> Option<f64> {
            (!m.is_empty()).then(|| m.values().map(|&c| rate(c)).sum::<f64>() / m.len() as f64)
        };
        ratio(mean(&g0)?, mean(&g1)?)
    }
}

/// Overall equality of opportunity, from per-class true positive rates.
///
/// With `overlap` (both groups share the label set) this is the mean over
/// classes of the per-class min/max TPR ratio, using classes where both groups
/// have true instances and at least one TPR is nonzero. Otherwise it is the
/// min/max ratio of the two groups' mean TPRs.
pub fn oeq(recs: &[EvalRecord], overlap: bool) -> Option<f64> {
    rate_ratio(recs, overlap, false)
}

/// Overall predictive parity: as [`oeq`] with positive predictive values,
/// qualifying classes by prediction counts.
pub fn opp(recs: &[EvalRecord], overlap: bool) -> Option<f64> {
    rate_ratio(recs, overlap, true)
}

/// Largest absolute gap between any two group losses.
pub fn disparity(losses_by_group: &BTreeMap<u8, f64>) -> Result<f64> {
    let mut it = losses_by_group.values().copied();
    let first = it.next().ok_or(Error::EmptyInput("group losses"))?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

/// Adjusted Rand index between two labelings of the same items.
///
/// Returns 1.0 when both labelings are trivial in the same way (single cluster
/// or all singletons), where the index is otherwise 0/0.
pub fn adjusted_rand_index(a: &[u64], b: &[u64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            what: "clustering labels",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("clustering labels"));
    }
    let pairs = |n: usize| (n * n.saturating_sub(1) / 2) as f64;
    let mut joint: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut rows: BTreeMap<u64, usize> = BTreeMap::new();
    let mut cols: BTreeMap<u64, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let total = pairs(a.len());
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
