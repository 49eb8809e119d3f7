//! Single-hidden-layer tanh MLP with a softmax head.
//!
//! Parameters live in one flat vector so that averaging, transmission and
//! counting all work on the same representation. Layout, in order:
//! `W1 (hidden x input, row-major) | b1 (hidden) | W2 (classes x hidden) | b2 (classes)`.

use std::borrow::Borrow;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Example;
use crate::error::{Error, Result};
use crate::seed;

/// Lower clamp applied to probabilities inside `-ln p`.
pub const PROB_FLOOR: f64 = 1e-12;

/// Half-width of the uniform weight initialisation.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Architecture {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Architecture {
    pub fn new(input: usize, hidden: usize, classes: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || classes < 2 {
            return Err(Error::config(format!(
                "architecture dims must be positive with at least 2 classes (input={input}, hidden={hidden}, classes={classes})"
            )));
        }
        Ok(Self {
            input,
            hidden,
            classes,
        })
    }

    /// Number of scalars in a parameter vector for this architecture.
    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.classes * self.hidden + self.classes
    }

    fn offsets(&self) -> Offsets {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        Offsets { b1, w2, b2 }
    }
}

#[derive(Clone, Copy)]
struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::Shape {
                what: "parameter vector",
                expected: arch.param_count(),
                got: values.len(),
            });
        }
        Ok(Self { arch, values })
    }

    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            values: vec![0.0; arch.param_count()],
        }
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("local epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Uniform(-0.1, 0.1) weights and zero biases, fully determined by `seed`.
pub fn init_params(arch: Architecture, seed: u64) -> Result<ModelParams> {
    let arch = Architecture::new(arch.input, arch.hidden, arch.classes)?;
    let mut rng = seed::rng(seed::derive_seed(seed, &[seed::TAG_INIT]));
    let off = arch.offsets();
    let mut values = vec![0.0; arch.param_count()];
    for v in &mut values[..off.b1] {
        *v = rng.random_range(-INIT_SCALE..INIT_SCALE);
    }
    for v in &mut values[off.w2..off.b2] {
        *v = rng.random_range(-INIT_SCALE..INIT_SCALE);
    }
    Ok(ModelParams { arch, values })
}

fn check_input(p: &ModelParams, x: &[f64]) -> Result<()> {
    if x.len() != p.arch.input {
        return Err(Error::Shape {
            what: "feature vector",
            expected: p.arch.input,
            got: x.len(),
        });
    }
    Ok(())
}

/// `tanh` through a single `exp`; saturates cleanly to ±1 at both ends.
fn tanh(z: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * z).exp() + 1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Views of `W1`, `b1`, `W2`, `b2` inside the flat vector.
fn layers(p: &ModelParams) -> (&[f64], &[f64], &[f64], &[f64]) {
    let off = p.arch.offsets();
    let (w1, rest) = p.values.split_at(off.b1);
    let (b1, rest) = rest.split_at(off.w2 - off.b1);
    let (w2, b2) = rest.split_at(off.b2 - off.w2);
    (w1, b1, w2, b2)
}

/// Forward pass into caller-provided buffers; `hidden` receives tanh
/// activations, `probs` the softmax output.
fn forward(p: &ModelParams, x: &[f64], hidden: &mut [f64], probs: &mut [f64]) {
    let a = p.arch;
    let (w1, b1, w2, b2) = layers(p);
    for ((h, row), b) in hidden.iter_mut().zip(w1.chunks_exact(a.input)).zip(b1) {
        *h = tanh(dot(row, x) + b);
    }
    for ((z, row), b) in probs.iter_mut().zip(w2.chunks_exact(a.hidden)).zip(b2) {
        *z = dot(row, hidden) + b;
    }
    softmax_in_place(probs);
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Class probabilities for one feature vector.
pub fn predict(p: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    check_input(p, x)?;
    let mut hidden = vec![0.0; p.arch.hidden];
    let mut probs = vec![0.0; p.arch.classes];
    forward(p, x, &mut hidden, &mut probs);
    Ok(probs)
}

/// Index of the most probable class; ties go to the lowest index.
pub fn predict_label(p: &ModelParams, x: &[f64]) -> Result<usize> {
    let probs = predict(p, x)?;
    Ok(argmax(&probs))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_example(p: &ModelParams, e: &Example) -> Result<()> {
    check_input(p, &e.features)?;
    if e.label >= p.arch.classes {
        return Err(Error::Shape {
            what: "class label (exclusive bound)",
            expected: p.arch.classes,
            got: e.label,
        });
    }
    Ok(())
}

fn example_loss(p: &ModelParams, e: &Example, hidden: &mut [f64], probs: &mut [f64]) -> f64 {
    forward(p, &e.features, hidden, probs);
    -probs[e.label].clamp(PROB_FLOOR, 1.0).ln()
}

/// Mean cross-entropy over `batch`.
pub fn loss<E: Borrow<Example>>(p: &ModelParams, batch: &[E]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("loss batch"));
    }
    let mut hidden = vec![0.0; p.arch.hidden];
    let mut probs = vec![0.0; p.arch.classes];
    let mut total = 0.0;
    for e in batch {
        let e = e.borrow();
        check_example(p, e)?;
        total += example_loss(p, e, &mut hidden, &mut probs);
    }
    Ok(total / batch.len() as f64)
}

/// Mean cross-entropy over the examples of group `s`; `None` if the group is
/// absent from the batch.
pub fn group_loss<E: Borrow<Example>>(p: &ModelParams, batch: &[E], s: u8) -> Result<Option<f64>> {
    let subset: Vec<&Example> = batch
        .iter()
        .map(Borrow::borrow)
        .filter(|e| e.group == s)
        .collect();
    if subset.is_empty() {
        return Ok(None);
    }
    loss(p, &subset).map(Some)
}

/// Per-group and overall losses computed in a single pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub overall: f64,
    /// Indexed by group id; `None` for groups absent from the data.
    pub groups: Vec<Option<f64>>,
    pub group_counts: Vec<usize>,
}

impl LossBreakdown {
    pub fn group(&self, s: u8) -> Option<f64> {
        self.groups.get(s as usize).copied().flatten()
    }
}

/// Overall and per-group mean cross-entropy over `batch` for `groups` group ids
/// (ids `0..groups`).
pub fn loss_breakdown<E: Borrow<Example>>(
    p: &ModelParams,
    batch: &[E],
    groups: usize,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("loss batch"));
    }
    let mut hidden = vec![0.0; p.arch.hidden];
    let mut probs = vec![0.0; p.arch.classes];
    let mut sums = vec![0.0; groups];
    let mut counts = vec![0usize; groups];
    let mut total = 0.0;
    for e in batch {
        let e = e.borrow();
        check_example(p, e)?;
        let l = example_loss(p, e, &mut hidden, &mut probs);
        total += l;
        if let Some(slot) = sums.get_mut(e.group as usize) {
            *slot += l;
            counts[e.group as usize] += 1;
        }
    }
    Ok(LossBreakdown {
        overall: total / batch.len() as f64,
        groups: sums
            .iter()
            .zip(&counts)
            .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
            .collect(),
        group_counts: counts,
    })
}

/// Gradient of the mean cross-entropy with respect to every parameter.
pub fn gradient<E: Borrow<Example>>(p: &ModelParams, batch: &[E]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("gradient batch"));
    }
    for e in batch {
        check_example(p, e.borrow())?;
    }
    let mut grad = vec![0.0; p.values.len()];
    let mut scratch = Scratch::new(p.arch);
    accumulate_gradient(p, batch.iter().map(Borrow::borrow), &mut grad, &mut scratch);
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

struct Scratch {
    hidden: Vec<f64>,
    probs: Vec<f64>,
    d_hidden: Vec<f64>,
}

impl Scratch {
    fn new(a: Architecture) -> Self {
        Self {
            hidden: vec![0.0; a.hidden],
            probs: vec![0.0; a.classes],
            d_hidden: vec![0.0; a.hidden],
        }
    }
}

/// Adds the summed (not averaged) per-example gradients into `grad`.
fn accumulate_gradient<'a>(
    p: &ModelParams,
    examples: impl Iterator<Item = &'a Example>,
    grad: &mut [f64],
    s: &mut Scratch,
) {
    let a = p.arch;
    let off = a.offsets();
    let (_, _, w2, _) = layers(p);
    let (g_w1, rest) = grad.split_at_mut(off.b1);
    let (g_b1, rest) = rest.split_at_mut(off.w2 - off.b1);
    let (g_w2, g_b2) = rest.split_at_mut(off.b2 - off.w2);
    for e in examples {
        forward(p, &e.features, &mut s.hidden, &mut s.probs);
        // dL/dz2 = p - onehot(y)
        s.probs[e.label] -= 1.0;
        s.d_hidden.iter_mut().for_each(|d| *d = 0.0);
        let rows = g_w2.chunks_exact_mut(a.hidden).zip(w2.chunks_exact(a.hidden));
        for (((g_row, w_row), &dz), g_b) in rows.zip(&s.probs).zip(g_b2.iter_mut()) {
            for (((g, &w), &h), d) in g_row.iter_mut().zip(w_row).zip(&s.hidden).zip(s.d_hidden.iter_mut()) {
                *g += dz * h;
                *d += dz * w;
            }
            *g_b += dz;
        }
        let rows = g_w1.chunks_exact_mut(a.input).zip(g_b1.iter_mut());
        for ((g_row, g_b), (&d, &h)) in rows.zip(s.d_hidden.iter().zip(&s.hidden)) {
            let dz = d * (1.0 - h * h);
            for (g, x) in g_row.iter_mut().zip(&e.features) {
                *g += dz * x;
            }
            *g_b += dz;
        }
    }
}

/// Minibatch SGD on a copy of `p`.
///
/// Each epoch reshuffles the data with an RNG seeded from `cfg.seed`, splits it
/// into batches of `cfg.batch_size` (the last one may be short) and takes one
/// gradient step per batch.
pub fn local_train<E: Borrow<Example>>(
    p: &ModelParams,
    data: &[E],
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training data"));
    }
    for e in data {
        check_example(p, e.borrow())?;
    }
    let mut out = p.clone();
    let mut rng = seed::rng(seed::derive_seed(cfg.seed, &[seed::TAG_SHUFFLE]));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; p.values.len()];
    let mut scratch = Scratch::new(p.arch);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            accumulate_gradient(
                &out,
                chunk.iter().map(|&i| data[i].borrow()),
                &mut grad,
                &mut scratch,
            );
            let step = cfg.learning_rate / chunk.len() as f64;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NumericFailure {
                    epoch,
                    batch: batch_idx,
                });
            }
            for (w, g) in out.values.iter_mut().zip(&grad) {
                *w -= step * g;
            }
        }
    }
    if !out.is_finite() {
        return Err(Error::NumericFailure {
            epoch: cfg.epochs - 1,
            batch: data.len().div_ceil(cfg.batch_size) - 1,
        });
    }
    Ok(out)
}

/// Convex combination of `models` with weights normalised by their sum.
///
/// Accumulation runs in list order so the result is reproducible bit for bit.
pub fn weighted_average(models: &[&ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let first = models
        .first()
        .ok_or(Error::EmptyInput("models to average"))?;
    if weights.len() != models.len() {
        return Err(Error::Shape {
            what: "averaging weights",
            expected: models.len(),
            got: weights.len(),
        });
    }
    for m in models {
        if m.arch != first.arch {
            return Err(Error::Shape {
                what: "averaged parameter vector",
                expected: first.values.len(),
                got: m.values.len(),
            });
        }
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::config("averaging weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::config("averaging weights sum to zero"));
    }
    let mut values = vec![0.0; first.values.len()];
    for (m, &w) in models.iter().zip(weights) {
        let share = w / total;
        for (acc, v) in values.iter_mut().zip(&m.values) {
            *acc += share * v;
        }
    }
    Ok(ModelParams {
        arch: first.arch,
        values,
    })
}
