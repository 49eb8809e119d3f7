//! The multi-model federation engine and its baselines.
//!
//! One engine drives all four algorithms; they differ only in the assignment
//! step and in whether models are merged:
//!
//! | algorithm      | assignment                         | merging          |
//! |----------------|------------------------------------|------------------|
//! | FedAvg         | everyone on model 0                | none             |
//! | FedDrift       | global-loss threshold              | global loss      |
//! | FairFedDrift   | per-group loss thresholds          | per-group losses |
//! | Oracle         | ground-truth concept id            | none             |

mod assign;
mod counters;
mod engine;
mod merge;
mod pool;
mod train;

use std::fmt;
use std::str::FromStr;

pub use assign::{
    assign_fair, assign_feddrift, assign_oracle, decide_fair, decide_global, evaluate_models,
    spawn_model, Assignment, LossRow, LossTable,
};
pub use counters::CostCounters;
pub use engine::{run_federation, FederationRun, TimestepLog};
pub use merge::{
    cross_losses, distance_matrix, merge_matrix, merge_step, pair_gap, plan_merges, CrossLosses,
    DistanceMatrix, MergeEvent,
};
pub use pool::{GlobalModel, ModelPool, RefLosses, Retained};
pub use train::train_round;

use crate::error::{Error, Result};
use crate::model::{Architecture, TrainConfig};

pub type ModelId = u64;

/// Number of sensitive groups the engine tracks.
pub const GROUPS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    FedAvg,
    FedDrift,
    FairFedDrift,
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::FedAvg,
        Algorithm::FedDrift,
        Algorithm::FairFedDrift,
        Algorithm::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedDrift => "feddrift",
            Algorithm::FairFedDrift => "fairfeddrift",
            Algorithm::Oracle => "oracle",
        }
    }

    pub fn detects_drift(self) -> bool {
        matches!(self, Algorithm::FedDrift | Algorithm::FairFedDrift)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown algorithm {s:?} (expected fedavg, feddrift, fairfeddrift or oracle)"
                ))
            })
    }
}

/// Tolerated loss increase between consecutive timesteps.
#[derive(Clone, Debug, PartialEq)]
pub enum Threshold {
    Uniform(f64),
    /// One value per group id.
    PerGroup(Vec<f64>),
}

impl Threshold {
    /// Threshold that never triggers.
    pub fn infinite() -> Self {
        Threshold::Uniform(f64::INFINITY)
    }

    pub fn group(&self, s: u8) -> f64 {
        match self {
            Threshold::Uniform(d) => *d,
            Threshold::PerGroup(v) => v.get(s as usize).copied().unwrap_or(f64::INFINITY),
        }
    }

    /// The single value used for global-loss decisions.
    pub fn global(&self) -> f64 {
        match self {
            Threshold::Uniform(d) => *d,
            Threshold::PerGroup(v) => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Threshold::Uniform(d) => Threshold::Uniform(d * c),
            Threshold::PerGroup(v) => Threshold::PerGroup(v.iter().map(|d| d * c).collect()),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |d: f64| d > 0.0;
        let valid = match self {
            Threshold::Uniform(d) => ok(*d),
            Threshold::PerGroup(v) => !v.is_empty() && v.iter().all(|&d| ok(d)),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::config(format!("drift threshold must be > 0, got {self}")))
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one = |f: &mut fmt::Formatter<'_>, d: f64| {
            if d == f64::INFINITY {
                f.write_str("inf")
            } else {
                write!(f, "{d}")
            }
        };
        match self {
            Threshold::Uniform(d) => one(f, *d),
            Threshold::PerGroup(v) => {
                for (i, d) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str("/")?;
                    }
                    one(f, *d)?;
                }
                Ok(())
            }
        }
    }
}

/// How many past timesteps of data and assignments clients retain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Window {
    Full,
    /// Keep timesteps `max(0, t - w) ..= t`.
    Last(usize),
}

impl Window {
    /// Earliest timestep kept while processing timestep `t`.
    pub fn earliest(self, t: usize) -> usize {
        match self {
            Window::Full => 0,
            Window::Last(w) => t.saturating_sub(w),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Full => f.write_str("full"),
            Window::Last(w) => write!(f, "{w}"),
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(Window::Full);
        }
        match s.parse::<usize>() {
            Ok(w) if w >= 1 => Ok(Window::Last(w)),
            _ => Err(Error::config(format!(
                "window must be 'full' or a positive integer, got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmKind {
    pub algorithm: Algorithm,
    /// Ignored by FedAvg and Oracle.
    pub delta: Threshold,
    pub window: Window,
}

impl AlgorithmKind {
    pub fn new(algorithm: Algorithm, delta: f64, window: Window) -> Self {
        Self {
            algorithm,
            delta: Threshold::Uniform(delta),
            window,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederationConfig {
    pub clients: usize,
    pub timesteps: usize,
    /// Communication rounds per timestep.
    pub rounds: usize,
    pub train: TrainConfig,
    pub kind: AlgorithmKind,
    pub arch: Architecture,
    pub seed: u64,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 || self.timesteps == 0 || self.rounds == 0 {
            return Err(Error::config(format!(
                "K, T and R must be >= 1 (K={}, T={}, R={})",
                self.clients, self.timesteps, self.rounds
            )));
        }
        self.train.validate()?;
        if self.kind.algorithm.detects_drift() {
            self.kind.delta.validate()?;
        }
        Architecture::new(self.arch.input, self.arch.hidden, self.arch.classes)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_algorithms_and_windows() {
        assert_eq!("FairFedDrift".parse::<Algorithm>().unwrap(), Algorithm::FairFedDrift);
        assert!("fedprox".parse::<Algorithm>().is_err());
        assert_eq!("full".parse::<Window>().unwrap(), Window::Full);
        assert_eq!("3".parse::<Window>().unwrap(), Window::Last(3));
        assert!("0".parse::<Window>().is_err());
        assert_eq!(Window::Last(3).earliest(2), 0);
        assert_eq!(Window::Last(3).earliest(7), 4);
    }

    #[test]
    fn thresholds() {
        let t = Threshold::PerGroup(vec![0.5, 1.5]);
        assert_eq!(t.group(0), 0.5);
        assert_eq!(t.global(), 1.5);
        assert_eq!(t.to_string(), "0.5/1.5");
        assert_eq!(Threshold::infinite().to_string(), "inf");
        assert!(Threshold::Uniform(0.0).validate().is_err());
    }
}
