//! Central finite-difference checks of tape gradients.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{OpKind, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::MolecularGraph;
use crate::lkm::{kd_loss_with, total_loss, LossConfig};
use crate::model::{BoundParams, Model};
use crate::tensor::Tensor;

/// One compared coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEntry {
    /// Index of the input tensor.
    pub tensor: usize,
    /// Flat index within that tensor.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub per_parameter_errors: Vec<GradEntry>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }

    /// The entry with the largest relative error.
    pub fn worst(&self) -> Option<&GradEntry> {
        self.per_parameter_errors
            .iter()
            .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Checks the gradient of a scalar function of one tensor.
pub fn grad_check<F>(f: F, x: &Tensor, epsilon: f64, tolerance: f64) -> Result<GradReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(
        |tape, vars| f(tape, vars[0]),
        core::slice::from_ref(x),
        epsilon,
        tolerance,
    )
}

/// Checks the gradient of a scalar function of several tensors, coordinate by
/// coordinate, against `(f(x + eps e_k) - f(x - eps e_k)) / (2 eps)`.
pub fn grad_check_many<F>(
    f: F,
    inputs: &[Tensor],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::InvalidArgument(alloc::format!(
            "epsilon must lie in (0, 1e-2], got {epsilon}"
        )));
    }
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        scalar_of(&tape, out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    let first = scalar_of(&tape, out)?;
    let second = eval(inputs)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }
    let grads = tape.backward(out)?;

    let mut entries = Vec::new();
    let mut max_err: f64 = 0.0;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, var) in vars.iter().enumerate() {
        let analytic_all = grads.get(*var);
        for k in 0..inputs[ti].len() {
            let orig = inputs[ti].values()[k];
            work[ti].values_mut()[k] = orig + epsilon;
            let plus = eval(&work)?;
            work[ti].values_mut()[k] = orig - epsilon;
            let minus = eval(&work)?;
            work[ti].values_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let analytic = analytic_all.map_or(0.0, |g| g[k]);
            let rel = relative_error(analytic, numeric);
            max_err = max_err.max(rel);
            entries.push(GradEntry {
                tensor: ti,
                index: k,
                analytic,
                numeric,
                relative_error: rel,
            });
        }
    }
    Ok(GradReport {
        max_relative_error: max_err,
        tolerance,
        per_parameter_errors: entries,
    })
}

/// Checks the gradient of the full training loss `L_total` of one molecule
/// (standardized `target`) with respect to every model parameter.
pub fn check_model_loss(
    model: &Model,
    graph: &MolecularGraph,
    target: f64,
    loss: &LossConfig,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradReport> {
    let config = *model.config();
    grad_check_many(
        |tape, vars| {
            let params = BoundParams::from_vars(tape, &config, vars.to_vec())?;
            let out = model.forward(tape, &params, graph)?;
            let kd = kd_loss_with(tape, &out.layer_embeddings, loss.detach_mean)?;
            Ok(total_loss(tape, &[out.prediction], &[target], kd, loss)?.total)
        },
        model.parameters(),
        epsilon,
        tolerance,
    )
}

/// Result of checking one operation.
#[derive(Debug, Clone)]
pub struct OpCheck {
    pub op: &'static str,
    pub report: GradReport,
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    // keep magnitudes in [0.1, 1] so |x| is differentiable at every sample
    let values = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), values).expect("shape and length agree")
}

/// Reduces `out` to a scalar with fixed random weights so every output entry
/// carries a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

/// Gradient-checks every [`OpKind`] on random inputs drawn from `seed`.
/// Returns one entry per operation, in [`OpKind::NAMES`] order.
pub fn check_ops(seed: u64, epsilon: f64, tolerance: f64) -> Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(OpKind::NAMES.len());
    for &name in &OpKind::NAMES {
        let c = rng.gen_range(-2.0..2.0);
        let rows = rng.gen_range(2..5usize);
        let cols = rng.gen_range(1..4usize);
        let inner = rng.gen_range(1..4usize);
        let a = random_tensor(&mut rng, &[rows, cols]);
        let b = random_tensor(&mut rng, &[rows, cols]);
        let (inputs, out_shape): (Vec<Tensor>, Vec<usize>) = match name {
            "add" | "sub" | "mul" => (vec![a, b], vec![rows, cols]),
            "add_scalar" | "mul_scalar" | "shifted_softplus" | "abs" | "square" => {
                (vec![a], vec![rows, cols])
            }
            "add_row" => (vec![a, random_tensor(&mut rng, &[cols])], vec![rows, cols]),
            "matmul" => (
                vec![a, random_tensor(&mut rng, &[cols, inner])],
                vec![rows, inner],
            ),
            "sum" => (vec![a], vec![]),
            "sum_axis" | "mean_axis" => (
                vec![random_tensor(&mut rng, &[rows, 2, cols])],
                vec![rows, cols],
            ),
            "broadcast" => (vec![a], vec![rows, 3, cols]),
            "stack" => (vec![a, b], vec![rows, 2, cols]),
            "concat" => (
                vec![a, random_tensor(&mut rng, &[rows, inner])],
                vec![rows, cols + inner],
            ),
            "gather" => (vec![a], vec![4, cols]),
            "scatter_add" => (vec![random_tensor(&mut rng, &[4, cols])], vec![rows, cols]),
            _ => unreachable!("OpKind::NAMES lists {name}"),
        };
        let gather_idx: Vec<usize> = (0..4).map(|_| rng.gen_range(0..rows)).collect();
        let weights = random_tensor(&mut rng, &out_shape);
        let report = grad_check_many(
            |tape, v| {
                let y = match name {
                    "add" => tape.add(v[0], v[1])?,
                    "sub" => tape.sub(v[0], v[1])?,
                    "mul" => tape.mul(v[0], v[1])?,
                    "add_scalar" => tape.add_scalar(v[0], c)?,
                    "mul_scalar" => tape.mul_scalar(v[0], c)?,
                    "add_row" => tape.add_row(v[0], v[1])?,
                    "matmul" => tape.matmul(v[0], v[1])?,
                    "sum" => tape.sum(v[0])?,
                    "sum_axis" => tape.sum_axis(v[0], 1)?,
                    "mean_axis" => tape.mean_axis(v[0], 1)?,
                    "broadcast" => tape.broadcast(v[0], 1, 3)?,
                    "stack" => tape.stack(&[v[0], v[1]], 1)?,
                    "shifted_softplus" => tape.shifted_softplus(v[0])?,
                    "abs" => tape.abs(v[0])?,
                    "square" => tape.square(v[0])?,
                    "concat" => tape.concat(&[v[0], v[1]])?,
                    "gather" => tape.gather(v[0], &gather_idx)?,
                    "scatter_add" => tape.scatter_add(v[0], &gather_idx, rows)?,
                    _ => unreachable!(),
                };
                debug_assert_eq!(tape.op(y).map(OpKind::name), Some(name));
                weighted_sum(tape, y, &weights)
            },
            &inputs,
            epsilon,
            tolerance,
        )?;
        out.push(OpCheck { op: name, report });
    }
    Ok(out)
}

fn scalar_of(tape: &Tape, var: Var) -> Result<f64> {
    let v = tape.value(var);
    if v.len() != 1 {
        return Err(Error::NonScalarLoss {
            shape: v.shape().to_vec(),
        });
    }
    Ok(v.values()[0])
}
