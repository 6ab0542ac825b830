//! Cutoff-radius molecular graphs with smooth radial distance features.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::data::{distance, Molecule};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_CUTOFF: f64 = 5.0;
pub const DEFAULT_N_RBF: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    /// Å
    pub distance: f64,
}

/// Directed edges `(i, j)` for every ordered pair with `i != j` closer than the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    atomic_numbers: Vec<u32>,
    edges: Vec<Edge>,
    sources: Vec<usize>,
    targets: Vec<usize>,
    edge_features: Tensor,
    cutoff: f64,
    n_rbf: usize,
}

impl MolecularGraph {
    pub fn n_atoms(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn atomic_numbers(&self) -> &[u32] {
        &self.atomic_numbers
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Source atom of every edge, in edge order.
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    /// Receiving atom of every edge, in edge order.
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// `[n_edges, n_rbf]`, row `k` is `rbf_expand` of edge `k`'s distance.
    pub fn edge_features(&self) -> &Tensor {
        &self.edge_features
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn n_rbf(&self) -> usize {
        self.n_rbf
    }
}

/// Cosine window: `0.5 (cos(pi d / cutoff) + 1)` inside the cutoff, 0 outside.
pub fn envelope(distance: f64, cutoff: f64) -> f64 {
    if distance < cutoff {
        0.5 * (libm::cos(PI * distance / cutoff) + 1.0)
    } else {
        0.0
    }
}

/// Gaussian radial basis with centres evenly spaced on `[0, cutoff]`, width
/// `cutoff / n_rbf`, multiplied by the cosine envelope.
pub fn rbf_expand(distance: f64, n_rbf: usize, cutoff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_rbf);
    rbf_expand_into(distance, n_rbf, cutoff, &mut out);
    out
}

fn rbf_expand_into(distance: f64, n_rbf: usize, cutoff: f64, out: &mut Vec<f64>) {
    let env = envelope(distance, cutoff);
    let sigma = cutoff / n_rbf as f64;
    for k in 0..n_rbf {
        let mu = if n_rbf == 1 {
            0.0
        } else {
            k as f64 * cutoff / (n_rbf - 1) as f64
        };
        let z = (distance - mu) / sigma;
        out.push(env * libm::exp(-z * z));
    }
}

pub fn build_graph(molecule: &Molecule, cutoff: f64, n_rbf: usize) -> Result<MolecularGraph> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cutoff must be positive, got {cutoff}"
        )));
    }
    if n_rbf == 0 {
        return Err(Error::InvalidArgument("n_rbf must be at least 1".into()));
    }
    let pos = molecule.positions();
    let n = pos.len();
    let mut edges = Vec::new();
    let mut features = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = distance(&pos[i], &pos[j]);
            if d < cutoff {
                edges.push(Edge {
                    source: i,
                    target: j,
                    distance: d,
                });
                rbf_expand_into(d, n_rbf, cutoff, &mut features);
            }
        }
    }
    let edge_features = Tensor::new(alloc::vec![edges.len(), n_rbf], features)?;
    Ok(MolecularGraph {
        atomic_numbers: molecule.atomic_numbers().to_vec(),
        sources: edges.iter().map(|e| e.source).collect(),
        targets: edges.iter().map(|e| e.target).collect(),
        edges,
        edge_features,
        cutoff,
        n_rbf,
    })
}
