//! Simulation of federated learning under group-specific distributed concept
//! drift.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: a small tanh MLP with softmax output, cross-entropy loss,
//!   backpropagation, minibatch SGD and weighted parameter averaging.
//! * [`data`]: drift schedules, group-specific label-swap concepts, synthetic
//!   Gaussian-blob tasks, the IDX reader and per-client timestep streams.
//! * [`metrics`]: accuracy, AEQ/OEQ/OPP fairness ratios and loss disparity.
//! * [`federation`]: the multi-model engine (FairFedDrift, FedDrift) and the
//!   FedAvg and Oracle baselines, with communication/computation counters.
//! * [`harness`]: run configuration, sweeps, CSV/JSON output and summaries.

pub mod data;
pub mod error;
pub mod federation;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod seed;

pub use data::{
    build_schedule, build_stream, ConceptId, Dataset, DriftSchedule, Example, Scenario, StreamGrid,
    SwapTable, TimestepBatch,
};
pub use error::{Error, Result};
pub use federation::{
    run_federation, Algorithm, AlgorithmKind, CostCounters, FederationConfig, FederationRun,
    ModelId, ModelPool, Threshold, Window,
};
pub use metrics::{EvalRecord, MetricsRecord};
pub use model::{Architecture, ModelParams, TrainConfig};
