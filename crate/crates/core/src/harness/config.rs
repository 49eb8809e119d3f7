//! Run configuration: flat `key = value` text, overridable key by key.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{build_schedule, Dataset, DriftSchedule, IdxSource, Scenario};
use crate::error::{Error, Result};
use crate::federation::{Algorithm, AlgorithmKind, FederationConfig, Threshold, Window};
use crate::model::{Architecture, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetMode {
    Synthetic,
    Idx,
}

impl fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetMode::Synthetic => "synthetic",
            DatasetMode::Idx => "idx",
        })
    }
}

/// Every knob of an experiment. Sweeps run over `deltas x windows x seeds`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetMode,
    pub scenario: Scenario,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub deltas: Vec<Threshold>,
    pub windows: Vec<Window>,
    pub clients: usize,
    pub timesteps: usize,
    pub rounds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub hidden: usize,
    /// Examples per client per timestep.
    pub size: usize,
    /// Class count for the synthetic dataset.
    pub classes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetMode::Synthetic,
            scenario: Scenario::S4_1,
            algorithm: Algorithm::FairFedDrift,
            alpha: 0.1,
            deltas: vec![Threshold::Uniform(1.0)],
            windows: vec![Window::Full],
            clients: 10,
            timesteps: 10,
            rounds: 10,
            epochs: 5,
            batch_size: 32,
            learning_rate: 0.1,
            seeds: (0..5).collect(),
            out: PathBuf::from("results"),
            idx_images: None,
            idx_labels: None,
            hidden: 16,
            size: 200,
            classes: crate::data::SYNTHETIC_CLASSES,
        }
    }
}

/// Accepted keys, in documentation order.
pub const KEYS: [&str; 19] = [
    "dataset",
    "scenario",
    "algorithm",
    "alpha",
    "delta",
    "window",
    "clients",
    "timesteps",
    "rounds",
    "epochs",
    "batch_size",
    "learning_rate",
    "seeds",
    "out",
    "idx_images",
    "idx_labels",
    "hidden",
    "size",
    "classes",
];

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::config(format!("{key}: expected {expected}, got {value:?}"))
}

fn count(key: &str, value: &str) -> Result<usize> {
    match value.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(bad(key, value, "a positive integer")),
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn threshold(value: &str) -> Result<Threshold> {
    let parts = value
        .split('/')
        .map(|p| match p.trim().parse::<f64>() {
            Ok(d) if d > 0.0 => Ok(d),
            _ => Err(bad("delta", value, "positive numbers or inf")),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(match parts.as_slice() {
        [d] => Threshold::Uniform(*d),
        _ => Threshold::PerGroup(parts),
    })
}

impl RunConfig {
    /// Applies one `key = value` setting. Dashes in keys are read as underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "dataset" => {
                self.dataset = match value.to_ascii_lowercase().as_str() {
                    "synthetic" => DatasetMode::Synthetic,
                    "idx" => DatasetMode::Idx,
                    _ => return Err(bad(&key, value, "synthetic or idx")),
                }
            }
            "scenario" => self.scenario = value.parse()?,
            "algorithm" => self.algorithm = value.parse()?,
            "alpha" => {
                self.alpha = match value.parse::<f64>() {
                    Ok(a) if a > 0.0 && a <= 1.0 => a,
                    _ => return Err(bad(&key, value, "a number in (0, 1]")),
                }
            }
            "delta" => {
                self.deltas = list(value).map(threshold).collect::<Result<_>>()?;
                if self.deltas.is_empty() {
                    return Err(bad(&key, value, "a nonempty list"));
                }
            }
            "window" => {
                self.windows = list(value).map(str::parse).collect::<Result<_>>()?;
                if self.windows.is_empty() {
                    return Err(bad(&key, value, "a nonempty list"));
                }
            }
            "clients" => self.clients = count(&key, value)?,
            "timesteps" => self.timesteps = count(&key, value)?,
            "rounds" => self.rounds = count(&key, value)?,
            "epochs" => self.epochs = count(&key, value)?,
            "batch_size" => self.batch_size = count(&key, value)?,
            "learning_rate" => {
                self.learning_rate = match value.parse::<f64>() {
                    Ok(l) if l > 0.0 && l.is_finite() => l,
                    _ => return Err(bad(&key, value, "a positive finite number")),
                }
            }
            "seeds" => {
                // A single number is a count; a comma list names the seeds.
                self.seeds = if value.contains(',') {
                    list(value)
                        .map(|s| s.parse::<u64>().map_err(|_| bad(&key, value, "integers")))
                        .collect::<Result<_>>()?
                } else {
                    (0..count(&key, value)? as u64).collect()
                };
            }
            "out" => self.out = PathBuf::from(value),
            "idx_images" => self.idx_images = Some(PathBuf::from(value)),
            "idx_labels" => self.idx_labels = Some(PathBuf::from(value)),
            "hidden" => self.hidden = count(&key, value)?,
            "size" => self.size = count(&key, value)?,
            "classes" => self.classes = count(&key, value)?,
            _ => {
                return Err(Error::config(format!(
                    "unknown key {key:?} (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies every setting in `text`: one `key = value` per line, `#` starts
    /// a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                field: "line",
                detail: format!("line {}: expected key = value, got {line:?}", n + 1),
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Cross-field checks that single settings cannot catch.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.deltas.is_empty() || self.windows.is_empty() {
            return Err(Error::config("seed, delta and window lists must be nonempty"));
        }
        if self.dataset == DatasetMode::Idx && (self.idx_images.is_none() || self.idx_labels.is_none()) {
            return Err(Error::config("dataset = idx needs idx_images and idx_labels"));
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match self.dataset {
            DatasetMode::Synthetic => Ok(Dataset::Synthetic {
                classes: self.classes,
            }),
            DatasetMode::Idx => {
                let (Some(images), Some(labels)) = (&self.idx_images, &self.idx_labels) else {
                    return Err(Error::config("dataset = idx needs idx_images and idx_labels"));
                };
                Ok(Dataset::Idx(IdxSource::load(images, labels)?))
            }
        }
    }

    pub fn schedule(&self) -> Result<DriftSchedule> {
        build_schedule(self.scenario, self.clients, self.timesteps)
    }

    pub fn architecture(&self, dataset: &Dataset) -> Result<Architecture> {
        Architecture::new(dataset.feature_dim(), self.hidden, dataset.classes())
    }

    /// Sweep points in output order: delta, then window, then seed.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for delta in &self.deltas {
            for &window in &self.windows {
                for &seed in &self.seeds {
                    out.push(SweepPoint {
                        seed,
                        delta: delta.clone(),
                        window,
                    });
                }
            }
        }
        out
    }

    pub fn federation_config(&self, arch: Architecture, point: &SweepPoint) -> FederationConfig {
        FederationConfig {
            clients: self.clients,
            timesteps: self.timesteps,
            rounds: self.rounds,
            train: TrainConfig {
                epochs: self.epochs,
                batch_size: self.batch_size,
                learning_rate: self.learning_rate,
                seed: point.seed,
            },
            kind: AlgorithmKind {
                algorithm: self.algorithm,
                delta: point.delta.clone(),
                window: point.window,
            },
            arch,
            seed: point.seed,
        }
    }
}

/// One run of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub seed: u64,
    pub delta: Threshold,
    pub window: Window,
}

/// Defaults, then the file (if any), then `overrides` in order.
pub fn parse_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text, path)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(p: &[(&str, &str)]) -> Vec<(String, String)> {
        p.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = parse_config(None, &[]).unwrap();
        assert_eq!((cfg.clients, cfg.timesteps, cfg.rounds), (10, 10, 10));
        assert_eq!((cfg.epochs, cfg.batch_size), (5, 32));
        assert_eq!(cfg.learning_rate, 0.1);
        assert_eq!(cfg.seeds.len(), 5);
    }

    #[test]
    fn zero_alpha_is_rejected() {
        let err = parse_config(None, &pairs(&[("alpha", "0")])).unwrap_err();
        assert!(err.to_string().contains("alpha"));
        assert!(parse_config(None, &pairs(&[("alpha", "1.5")])).is_err());
        assert!(parse_config(None, &pairs(&[("alpha", "1")])).is_ok());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config(None, &pairs(&[("rouds", "3")])).unwrap_err();
        assert!(err.to_string().contains("rouds"));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# comment\nrounds = 3\ndelta = 0.5, 1.0\nwindow=full,3\n\nseeds = 2\n").unwrap();
        let cfg = parse_config(Some(&path), &pairs(&[("rounds", "7")])).unwrap();
        assert_eq!(cfg.rounds, 7);
        assert_eq!(cfg.deltas, vec![Threshold::Uniform(0.5), Threshold::Uniform(1.0)]);
        assert_eq!(cfg.windows, vec![Window::Full, Window::Last(3)]);
        assert_eq!(cfg.seeds, vec![0, 1]);
        assert_eq!(cfg.points().len(), 2 * 2 * 2);
    }

    #[test]
    fn list_forms() {
        let cfg = parse_config(
            None,
            &pairs(&[("seeds", "3,9"), ("delta", "inf, 0.2/0.4"), ("idx-images", "a")]),
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![3, 9]);
        assert_eq!(
            cfg.deltas,
            vec![Threshold::infinite(), Threshold::PerGroup(vec![0.2, 0.4])]
        );
        assert_eq!(cfg.idx_images, Some(PathBuf::from("a")));
    }

    #[test]
    fn range_errors() {
        for (k, v) in [
            ("delta", "0"),
            ("delta", "-1"),
            ("window", "0"),
            ("clients", "0"),
            ("learning_rate", "0"),
            ("seeds", "0"),
            ("dataset", "csv"),
        ] {
            assert!(parse_config(None, &pairs(&[(k, v)])).is_err(), "{k}={v}");
        }
        assert!(parse_config(None, &pairs(&[("dataset", "idx")])).is_err());
    }

    #[test]
    fn malformed_line_is_a_parse_error() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("rounds 3", Path::new("x.cfg")).unwrap_err();
        assert!(matches!(err, Error::Parse { field: "line", .. }));
    }
}
