//! Run configuration: a flat `key = value` file plus command-line overrides.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown keys are rejected. The canonical rendering lists every key in a
//! fixed order and its SHA-256 is the config digest used to name run
//! directories and pair experiment runs.

use std::fmt::Write as _;
use std::path::Path;

use lkm_core::{AdamConfig, LossConfig, ModelConfig, SplitCounts, TrainConfig};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value '{value}' for '{key}': {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
}

/// Where molecules come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generated in memory from `synthetic_count` and `synthetic_seed`.
    Synthetic,
    /// An extended-XYZ file.
    File(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub data: DataSource,
    pub target: String,
    pub synthetic_count: usize,
    pub synthetic_seed: u64,
    pub synthetic_cutoff: f64,
    pub split: SplitCounts,
    pub split_seed: u64,
    /// z-score the targets with train-set statistics.
    pub standardize: bool,
    pub overhead_steps: usize,
    /// Fill the step-time columns of experiment reports. Off by default so
    /// reports are byte-stable.
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            data: DataSource::Synthetic,
            target: lkm_core::synthetic::TARGET_NAME.to_string(),
            synthetic_count: 500,
            synthetic_seed: 2024,
            synthetic_cutoff: 5.0,
            split: SplitCounts {
                train: 400,
                val: 50,
                test: None,
            },
            split_seed: 1,
            standardize: true,
            overhead_steps: 100,
            timing: false,
        }
    }
}

pub const KEYS: &[&str] = &[
    "n_layers",
    "embedding_dim",
    "n_rbf",
    "cutoff",
    "n_element_types",
    "seed",
    "base_lr",
    "beta1",
    "beta2",
    "adam_epsilon",
    "warmup_steps",
    "epochs",
    "batch_size",
    "gamma",
    "detach_mean",
    "data",
    "target",
    "synthetic_count",
    "synthetic_seed",
    "synthetic_cutoff",
    "n_train",
    "n_val",
    "n_test",
    "split_seed",
    "standardize",
    "overhead_steps",
    "timing",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn finite(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse(key, value)?;
    if !v.is_finite() {
        return Err(ConfigError::Value {
            key: key.into(),
            value: value.into(),
            reason: "must be finite".into(),
        });
    }
    Ok(v)
}

impl RunConfig {
    /// Sets one key. The single `seed` drives both weight init and shuffling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "n_layers" => self.model.n_layers = parse(key, value)?,
            "embedding_dim" => self.model.embedding_dim = parse(key, value)?,
            "n_rbf" => self.model.n_rbf = parse(key, value)?,
            "cutoff" => self.model.cutoff = finite(key, value)?,
            "n_element_types" => self.model.n_element_types = parse(key, value)?,
            "seed" => {
                let s = parse(key, value)?;
                self.model.seed = s;
                self.train.seed = s;
            }
            "base_lr" => self.train.base_lr = finite(key, value)?,
            "beta1" => self.train.adam.beta1 = finite(key, value)?,
            "beta2" => self.train.adam.beta2 = finite(key, value)?,
            "adam_epsilon" => self.train.adam.epsilon = finite(key, value)?,
            "warmup_steps" => self.train.warmup_steps = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "gamma" => self.loss.gamma = finite(key, value)?,
            "detach_mean" => self.loss.detach_mean = parse(key, value)?,
            "data" => {
                self.data = if value == "synthetic" {
                    DataSource::Synthetic
                } else {
                    DataSource::File(value.to_string())
                }
            }
            "target" => self.target = value.to_string(),
            "synthetic_count" => self.synthetic_count = parse(key, value)?,
            "synthetic_seed" => self.synthetic_seed = parse(key, value)?,
            "synthetic_cutoff" => self.synthetic_cutoff = finite(key, value)?,
            "n_train" => self.split.train = parse(key, value)?,
            "n_val" => self.split.val = parse(key, value)?,
            "n_test" => {
                self.split.test = if value == "rest" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "split_seed" => self.split_seed = parse(key, value)?,
            "standardize" => {
                self.standardize = match value {
                    "zscore" => true,
                    "none" => false,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            value: value.into(),
                            reason: "expected 'zscore' or 'none'".into(),
                        })
                    }
                }
            }
            "overhead_steps" => self.overhead_steps = parse(key, value)?,
            "timing" => self.timing = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let v = match key {
            "n_layers" => self.model.n_layers.to_string(),
            "embedding_dim" => self.model.embedding_dim.to_string(),
            "n_rbf" => self.model.n_rbf.to_string(),
            "cutoff" => format!("{:?}", self.model.cutoff),
            "n_element_types" => self.model.n_element_types.to_string(),
            "seed" => self.model.seed.to_string(),
            "base_lr" => format!("{:?}", self.train.base_lr),
            "beta1" => format!("{:?}", self.train.adam.beta1),
            "beta2" => format!("{:?}", self.train.adam.beta2),
            "adam_epsilon" => format!("{:?}", self.train.adam.epsilon),
            "warmup_steps" => self.train.warmup_steps.to_string(),
            "epochs" => self.train.epochs.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "gamma" => format!("{:?}", self.loss.gamma),
            "detach_mean" => self.loss.detach_mean.to_string(),
            "data" => match &self.data {
                DataSource::Synthetic => "synthetic".into(),
                DataSource::File(p) => p.clone(),
            },
            "target" => self.target.clone(),
            "synthetic_count" => self.synthetic_count.to_string(),
            "synthetic_seed" => self.synthetic_seed.to_string(),
            "synthetic_cutoff" => format!("{:?}", self.synthetic_cutoff),
            "n_train" => self.split.train.to_string(),
            "n_val" => self.split.val.to_string(),
            "n_test" => self
                .split
                .test
                .map_or_else(|| "rest".into(), |n| n.to_string()),
            "split_seed" => self.split_seed.to_string(),
            "standardize" => if self.standardize { "zscore" } else { "none" }.into(),
            "overhead_steps" => self.overhead_steps.to_string(),
            "timing" => self.timing.to_string(),
            _ => return None,
        };
        Some(v)
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: k + 1,
                    message: format!("expected key = value, found '{line}'"),
                });
            };
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    /// `"default"` yields the built-in defaults; anything else is a file path.
    pub fn load(path: &str) -> Result<Self, ConfigError> {
        if path == "default" {
            return Ok(Self::default());
        }
        let text =
            std::fs::read_to_string(Path::new(path)).map_err(|source| ConfigError::Read {
                path: path.to_string(),
                source,
            })?;
        Self::parse_str(&text)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let Some((k, v)) = o.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: 0,
                    message: format!("override '{o}' is not key=value"),
                });
            };
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Every key in a fixed order; parses back to an equal config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key).unwrap()).unwrap();
        }
        out
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }

    pub fn short_digest(&self) -> String {
        self.digest()[..12].to_string()
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        let mut c = self.clone();
        c.loss.gamma = gamma;
        c
    }

    pub fn adam(&self) -> AdamConfig {
        self.train.adam
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["gamma=0.5", "n_test=20", "data=x.xyz", "cutoff=4.25"])
            .unwrap();
        let back = RunConfig::parse_str(&cfg.render()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = RunConfig::default();
        for key in KEYS {
            let mut c = cfg.clone();
            c.set(key, &cfg.get(key).unwrap()).unwrap();
            assert_eq!(c, cfg, "{key}");
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            RunConfig::parse_str("learning_rate = 1"),
            Err(ConfigError::UnknownKey(k)) if k == "learning_rate"
        ));
    }

    #[test]
    fn comments_and_syntax() {
        let cfg = RunConfig::parse_str("# desk\n\nepochs = 3  # short\n").unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert!(matches!(
            RunConfig::parse_str("epochs 3"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(RunConfig::parse_str("epochs = three").is_err());
        assert!(RunConfig::parse_str("gamma = inf").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let b = a.with_gamma(0.0);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn seed_sets_both_seeds() {
        let mut c = RunConfig::default();
        c.set("seed", "7").unwrap();
        assert_eq!((c.model.seed, c.train.seed), (7, 7));
    }
}
