//! Layer-to-layer knowledge mixing loss.
//!
//! For a molecule with `n` atoms and `m` layers, the per-atom mean embedding is
//! `ē_i = (1/m) Σ_j e_{i,j}` and the mixing loss is
//! `L_kd = 1/(m n) Σ_i Σ_j ||ē_i - e_{i,j}||²`, averaging over every
//! (atom, layer) pair. Gradients flow through both the layer embeddings and
//! the mean unless [`LossConfig::detach_mean`] is set. The training objective
//! is `L_total = MAE(y, ŷ) + γ L_kd`.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::LayerEmbeddingSet;
use crate::tensor::Tensor;

pub const DEFAULT_GAMMA: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TaskLoss {
    #[default]
    MeanAbsoluteError,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Mixing strength, `>= 0`.
    pub gamma: f64,
    pub task_loss: TaskLoss,
    /// Treat `ē_i` as a constant teacher (stop-gradient through the mean).
    pub detach_mean: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            task_loss: TaskLoss::MeanAbsoluteError,
            detach_mean: false,
        }
    }
}

impl LossConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub task: Var,
    pub kd: Var,
    pub total: Var,
    pub task_loss: f64,
    pub kd_loss: f64,
    pub total_loss: f64,
    pub gamma: f64,
}

/// `[n, d]` per-atom mean over layers.
pub fn mean_embedding(tape: &mut Tape, set: &LayerEmbeddingSet) -> Result<Var> {
    tape.mean_axis(set.embeddings, 1)
}

/// Mixing loss of one molecule.
pub fn kd_loss(tape: &mut Tape, set: &LayerEmbeddingSet) -> Result<Var> {
    kd_loss_with(tape, set, false)
}

pub fn kd_loss_with(tape: &mut Tape, set: &LayerEmbeddingSet, detach_mean: bool) -> Result<Var> {
    if set.n_layers == 0 || set.n_atoms == 0 {
        return Err(Error::InvalidArgument(
            "mixing loss needs at least one atom and one layer".into(),
        ));
    }
    let mut mean = mean_embedding(tape, set)?;
    if detach_mean {
        let frozen = tape.value(mean).clone();
        mean = tape.constant(frozen);
    }
    let spread = tape.broadcast(mean, 1, set.n_layers)?;
    let diff = tape.sub(spread, set.embeddings)?;
    let sq = tape.square(diff)?;
    let total = tape.sum(sq)?;
    tape.mul_scalar(total, 1.0 / (set.n_layers * set.n_atoms) as f64)
}

/// Mean of per-molecule mixing losses.
pub fn batch_kd_loss(tape: &mut Tape, per_molecule: &[Var]) -> Result<Var> {
    mean_of_scalars(tape, per_molecule)
}

fn mean_of_scalars(tape: &mut Tape, values: &[Var]) -> Result<Var> {
    let Some((&first, rest)) = values.split_first() else {
        return Err(Error::InvalidArgument("empty batch".into()));
    };
    let mut acc = first;
    for &v in rest {
        acc = tape.add(acc, v)?;
    }
    tape.mul_scalar(acc, 1.0 / values.len() as f64)
}

/// Assembles `L_task = mean |y - ŷ|` and `L_total = L_task + γ L_kd`.
pub fn total_loss(
    tape: &mut Tape,
    predictions: &[Var],
    targets: &[f64],
    kd: Var,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    config.validate()?;
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let residuals = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let r = tape.add_scalar(p, -y)?;
            tape.abs(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let task = match config.task_loss {
        TaskLoss::MeanAbsoluteError => mean_of_scalars(tape, &residuals)?,
    };
    let weighted = tape.mul_scalar(kd, config.gamma)?;
    let total = tape.add(task, weighted)?;
    Ok(LossBreakdown {
        task,
        kd,
        total,
        task_loss: tape.item(task),
        kd_loss: tape.item(kd),
        total_loss: tape.item(total),
        gamma: config.gamma,
    })
}

/// Value of the mixing loss for a `[n, m, d]` tensor without recording anything.
/// Bitwise equal to [`kd_loss`].
pub fn embedding_dispersion(embeddings: &Tensor) -> Result<f64> {
    let &[n, m, d] = embeddings.shape() else {
        return Err(Error::InvalidArgument(format!(
            "layer embeddings must be rank 3, got {:?}",
            embeddings.shape()
        )));
    };
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(
            "mixing loss needs at least one atom and one layer".into(),
        ));
    }
    let v = embeddings.values();
    let mut mean = alloc::vec![0.0; d];
    let mut total = 0.0;
    for i in 0..n {
        mean.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..m {
            let row = &v[(i * m + j) * d..(i * m + j + 1) * d];
            mean.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        mean.iter_mut().for_each(|x| *x /= m as f64);
        for j in 0..m {
            let row = &v[(i * m + j) * d..(i * m + j + 1) * d];
            for (a, b) in mean.iter().zip(row) {
                let diff = a - b;
                total += diff * diff;
            }
        }
    }
    Ok(total * (1.0 / (m * n) as f64))
}
