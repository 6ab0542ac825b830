//! Deep-supervised message-passing network.
//!
//! Layer `j` (1-based) computes, for every directed edge `a -> b`,
//! `msg = ssp([h_a, rbf_ab] W_msg + b_msg)`, sums messages at each receiver,
//! and updates `h_b <- h_b + ssp(agg_b W_upd + b_upd)`. The updated state is the
//! layer embedding `e_{b,j}`; each layer owns a readout MLP `d -> d/2 -> 1`
//! whose outputs, summed over atoms and layers, form the prediction.
//!
//! Parameters in canonical order (this is also the checkpoint order):
//!
//! | name                   | shape              |
//! |------------------------|--------------------|
//! | `element_embedding`    | `[n_elements, d]`  |
//! | per layer `j`:         |                    |
//! | `layer{j}.message.w`   | `[d + n_rbf, d]`   |
//! | `layer{j}.message.b`   | `[d]`              |
//! | `layer{j}.update.w`    | `[d, d]`           |
//! | `layer{j}.update.b`    | `[d]`              |
//! | `layer{j}.readout1.w`  | `[d, h]`           |
//! | `layer{j}.readout1.b`  | `[h]`              |
//! | `layer{j}.readout2.w`  | `[h, 1]`           |
//! | `layer{j}.readout2.b`  | `[1]`              |
//!
//! with `h = max(d / 2, 1)`, so the count is
//! `n_elements*d + m*((d+n_rbf)*d + d + d*d + d + d*h + h + h + 1)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{MolecularGraph, DEFAULT_CUTOFF, DEFAULT_N_RBF};
use crate::tensor::Tensor;

const PER_LAYER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub embedding_dim: usize,
    pub n_rbf: usize,
    /// Å
    pub cutoff: f64,
    /// Embedding rows; atomic number `Z` uses row `Z`.
    pub n_element_types: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            embedding_dim: 64,
            n_rbf: DEFAULT_N_RBF,
            cutoff: DEFAULT_CUTOFF,
            n_element_types: 10,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.embedding_dim == 0 || self.n_rbf == 0 {
            return Err(Error::InvalidArgument(format!(
                "n_layers, embedding_dim and n_rbf must be >= 1: {self:?}"
            )));
        }
        if self.n_element_types == 0 {
            return Err(Error::InvalidArgument(
                "n_element_types must be >= 1".into(),
            ));
        }
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cutoff must be positive, got {}",
                self.cutoff
            )));
        }
        Ok(())
    }

    pub fn readout_hidden(&self) -> usize {
        (self.embedding_dim / 2).max(1)
    }

    /// Names and shapes of all parameters in canonical order.
    pub fn parameter_layout(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.embedding_dim;
        let h = self.readout_hidden();
        let mut out = vec![("element_embedding".into(), vec![self.n_element_types, d])];
        for j in 1..=self.n_layers {
            out.push((format!("layer{j}.message.w"), vec![d + self.n_rbf, d]));
            out.push((format!("layer{j}.message.b"), vec![d]));
            out.push((format!("layer{j}.update.w"), vec![d, d]));
            out.push((format!("layer{j}.update.b"), vec![d]));
            out.push((format!("layer{j}.readout1.w"), vec![d, h]));
            out.push((format!("layer{j}.readout1.b"), vec![h]));
            out.push((format!("layer{j}.readout2.w"), vec![h, 1]));
            out.push((format!("layer{j}.readout2.b"), vec![1]));
        }
        out
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let d = self.embedding_dim;
        let h = self.readout_hidden();
        let per_layer = (d + self.n_rbf) * d + d + d * d + d + d * h + h + h + 1;
        self.n_element_types * d + self.n_layers * per_layer
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: Vec<Tensor>,
}

/// Parameters recorded on a tape, in canonical order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    /// Wraps variables already on a tape; they must follow the canonical order.
    pub fn from_vars(tape: &Tape, config: &ModelConfig, vars: Vec<Var>) -> Result<Self> {
        let layout = config.parameter_layout();
        if vars.len() != layout.len() {
            return Err(Error::InvalidArgument(format!(
                "model has {} parameter tensors, got {} variables",
                layout.len(),
                vars.len()
            )));
        }
        for (v, (_, shape)) in vars.iter().zip(&layout) {
            if tape.value(*v).shape() != shape.as_slice() {
                return Err(Error::Shape {
                    op: "bind",
                    lhs: shape.clone(),
                    rhs: tape.value(*v).shape().to_vec(),
                });
            }
        }
        Ok(Self { vars })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn layer(&self, j: usize, k: usize) -> Var {
        self.vars[1 + j * PER_LAYER + k]
    }
}

/// Stacked per-layer embeddings `e_{i,j}`, shape `[n_atoms, n_layers, dim]`.
#[derive(Debug, Clone, Copy)]
pub struct LayerEmbeddingSet {
    pub embeddings: Var,
    pub n_atoms: usize,
    pub n_layers: usize,
    pub dim: usize,
}

impl LayerEmbeddingSet {
    /// Records a `[n, m, d]` tensor as an embedding set.
    pub fn from_tensor(tape: &mut Tape, tensor: Tensor, requires_grad: bool) -> Result<Self> {
        let &[n, m, d] = tensor.shape() else {
            return Err(Error::InvalidArgument(format!(
                "layer embeddings must be rank 3, got {:?}",
                tensor.shape()
            )));
        };
        Ok(Self {
            embeddings: tape.leaf(tensor, requires_grad),
            n_atoms: n,
            n_layers: m,
            dim: d,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    /// Scalar prediction in standardized units.
    pub prediction: Var,
    pub layer_embeddings: LayerEmbeddingSet,
    /// Per-layer `[n_atoms, dim]` embeddings before stacking.
    pub layer_states: Vec<Var>,
    /// Per-layer scalar readout summed over atoms; these add up to `prediction`.
    pub layer_contributions: Vec<Var>,
}

impl Model {
    /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. The embedding
    /// table maps one-hot element vectors, so its fan-in is 1.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = config
            .parameter_layout()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let values = if name.ends_with(".b") {
                    vec![0.0; n]
                } else {
                    let fan_in = if name == "element_embedding" {
                        1
                    } else {
                        shape[0]
                    };
                    let bound = 1.0 / libm::sqrt(fan_in as f64);
                    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
                };
                Tensor::from_parts(shape, values)
            })
            .collect();
        Ok(Self { config, params })
    }

    /// Rebuilds a model from explicit parameter tensors (checkpoint loading).
    pub fn from_parameters(config: ModelConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let layout = config.parameter_layout();
        if layout.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in layout.iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(Error::InvalidArgument(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    p.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Total number of scalar parameters.
    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// All parameters concatenated in canonical order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|t| t.values().iter().copied())
            .collect()
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> BoundParams {
        BoundParams {
            vars: self
                .params
                .iter()
                .map(|p| tape.leaf(p.clone(), requires_grad))
                .collect(),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        graph: &MolecularGraph,
    ) -> Result<ForwardResult> {
        let n = graph.n_atoms();
        let n_el = self.config.n_element_types;
        if graph.n_rbf() != self.config.n_rbf {
            return Err(Error::InvalidArgument(format!(
                "graph has {} radial features, model expects {}",
                graph.n_rbf(),
                self.config.n_rbf
            )));
        }
        let species: Vec<usize> = graph.atomic_numbers().iter().map(|&z| z as usize).collect();
        if let Some(&z) = species.iter().find(|&&z| z >= n_el) {
            return Err(Error::IndexOutOfRange {
                what: "element type",
                index: z,
                bound: n_el,
            });
        }

        let mut h = tape.gather(params.vars[0], &species)?;
        let edge_features = tape.constant(graph.edge_features().clone());
        let mut layer_states = Vec::with_capacity(self.config.n_layers);
        let mut layer_contributions = Vec::with_capacity(self.config.n_layers);
        for j in 0..self.config.n_layers {
            let p = |k| params.layer(j, k);
            let h_src = tape.gather(h, graph.sources())?;
            let msg_in = tape.concat(&[h_src, edge_features])?;
            let msg = dense(tape, msg_in, p(0), p(1))?;
            let msg = tape.shifted_softplus(msg)?;
            let agg = tape.scatter_add(msg, graph.targets(), n)?;
            let upd = dense(tape, agg, p(2), p(3))?;
            let upd = tape.shifted_softplus(upd)?;
            h = tape.add(h, upd)?;
            layer_states.push(h);

            let r = dense(tape, h, p(4), p(5))?;
            let r = tape.shifted_softplus(r)?;
            let r = dense(tape, r, p(6), p(7))?;
            layer_contributions.push(tape.sum(r)?);
        }
        let mut prediction = layer_contributions[0];
        for &c in &layer_contributions[1..] {
            prediction = tape.add(prediction, c)?;
        }
        let stacked = tape.stack(&layer_states, 1)?;
        Ok(ForwardResult {
            prediction,
            layer_embeddings: LayerEmbeddingSet {
                embeddings: stacked,
                n_atoms: n,
                n_layers: self.config.n_layers,
                dim: self.config.embedding_dim,
            },
            layer_states,
            layer_contributions,
        })
    }

    /// Inference-only prediction in standardized units.
    pub fn predict(&self, graph: &MolecularGraph) -> Result<f64> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let out = self.forward(&mut tape, &params, graph)?;
        Ok(tape.item(out.prediction))
    }
}

fn dense(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}
