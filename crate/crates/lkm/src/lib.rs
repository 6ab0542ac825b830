//! File formats, experiment harness and command line for layer-to-layer
//! knowledge mixing. The numerics live in `lkm-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod history;
pub mod pipeline;
pub mod xyz;

pub use config::RunConfig;
pub use error::{LkmError, Result};
