#![allow(dead_code)]

use lkm::RunConfig;
use lkm_core::SplitCounts;

/// A config that trains in well under a second.
pub fn tiny() -> RunConfig {
    let mut cfg = RunConfig {
        synthetic_count: 40,
        split: SplitCounts {
            train: 24,
            val: 8,
            test: None,
        },
        ..RunConfig::default()
    };
    cfg.model.n_layers = 2;
    cfg.model.embedding_dim = 8;
    cfg.model.n_rbf = 8;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 8;
    cfg.train.warmup_steps = 2;
    cfg
}

/// The same settings as `key=value` overrides for the command line.
pub const TINY_OVERRIDES: &[&str] = &[
    "synthetic_count=40",
    "n_train=24",
    "n_val=8",
    "n_layers=2",
    "embedding_dim=8",
    "n_rbf=8",
    "epochs=2",
    "batch_size=8",
    "warmup_steps=2",
];
