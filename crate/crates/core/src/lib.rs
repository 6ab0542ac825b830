//! Numerical core for layer-to-layer knowledge mixing (LKM) on molecular
//! message-passing networks.
//!
//! Everything here is allocation-only (`no_std` + `alloc`): a tape-based
//! reverse-mode autodiff engine, cutoff-radius molecular graphs, a
//! deep-supervised MPNN whose per-layer atom embeddings are exposed, the
//! mixing loss that pulls those embeddings toward their cross-layer mean,
//! Adam with a warmup/cosine schedule, and the training loop. File formats,
//! timing and the command line live in the `lkm` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod data;
pub mod elements;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod lkm;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, OpKind, Tape, Var};
pub use data::{fit_standardizer, split, Dataset, Molecule, SplitCounts, Standardizer};
pub use error::{Error, Result};
pub use gradcheck::{
    check_model_loss, check_ops, grad_check, grad_check_many, GradEntry, GradReport, OpCheck,
};
pub use graph::{build_graph, rbf_expand, Edge, MolecularGraph};
pub use lkm::{
    embedding_dispersion, kd_loss, mean_embedding, total_loss, LossBreakdown, LossConfig, TaskLoss,
};
pub use metrics::{delta_emae, mean_absolute_error, winning_tasks};
pub use model::{BoundParams, ForwardResult, LayerEmbeddingSet, Model, ModelConfig};
pub use optim::{adam_step, AdamConfig, AdamState, Schedule};
pub use tensor::Tensor;
pub use train::{
    evaluate, evaluate_prepared, predict_prepared, train, train_observed, train_prepared,
    EpochRecord, PreparedSet, StepRecord, TrainConfig, TrainHistory, TrainOutcome, Trainer,
};
