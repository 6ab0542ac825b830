//! Molecules, datasets, splits and target standardization.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Closest two atoms may be before a structure is rejected, in Å.
pub const MIN_ATOM_SEPARATION: f64 = 1e-6;

/// Atomic numbers, Cartesian positions in Å, and named scalar targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    atomic_numbers: Vec<u32>,
    positions: Vec<[f64; 3]>,
    targets: BTreeMap<String, f64>,
}

impl Molecule {
    pub fn new(
        atomic_numbers: Vec<u32>,
        positions: Vec<[f64; 3]>,
        targets: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if atomic_numbers.is_empty() {
            return Err(Error::InvalidData("molecule has no atoms".into()));
        }
        if atomic_numbers.len() != positions.len() {
            return Err(Error::InvalidData(format!(
                "{} atomic numbers but {} positions",
                atomic_numbers.len(),
                positions.len()
            )));
        }
        if atomic_numbers.contains(&0) {
            return Err(Error::InvalidData("atomic number 0".into()));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidData("non-finite coordinate".into()));
        }
        for i in 0..positions.len() {
            for j in 0..i {
                if distance(&positions[i], &positions[j]) <= MIN_ATOM_SEPARATION {
                    return Err(Error::InvalidData(format!("atoms {j} and {i} coincide")));
                }
            }
        }
        Ok(Self {
            atomic_numbers,
            positions,
            targets,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn atomic_numbers(&self) -> &[u32] {
        &self.atomic_numbers
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn targets(&self) -> &BTreeMap<String, f64> {
        &self.targets
    }

    pub fn target(&self, name: &str) -> Option<f64> {
        self.targets.get(name).copied()
    }

    /// Same atoms and targets at new positions (validated again).
    pub fn with_positions(&self, positions: Vec<[f64; 3]>) -> Result<Self> {
        Self::new(self.atomic_numbers.clone(), positions, self.targets.clone())
    }

    /// Atoms reordered so that new atom `k` is old atom `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = alloc::vec![false; self.n_atoms()];
        for &o in order {
            if o >= seen.len() || seen[o] {
                return Err(Error::InvalidArgument("order is not a permutation".into()));
            }
            seen[o] = true;
        }
        if order.len() != self.n_atoms() {
            return Err(Error::InvalidArgument("order is not a permutation".into()));
        }
        Self::new(
            order.iter().map(|&o| self.atomic_numbers[o]).collect(),
            order.iter().map(|&o| self.positions[o]).collect(),
            self.targets.clone(),
        )
    }
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    libm::sqrt(dx * dx + dy * dy + dz * dz)
}

/// Affine map between physical target units and the z-scored units the model
/// is trained in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub const IDENTITY: Standardizer = Standardizer {
        mean: 0.0,
        std: 1.0,
    };

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    molecules: Vec<Molecule>,
    target_name: String,
    standardizer: Option<Standardizer>,
}

impl Dataset {
    /// Every molecule must carry `target_name`.
    pub fn new(molecules: Vec<Molecule>, target_name: impl Into<String>) -> Result<Self> {
        let target_name = target_name.into();
        if let Some(i) = molecules
            .iter()
            .position(|m| m.target(&target_name).is_none())
        {
            return Err(Error::InvalidData(format!(
                "molecule {i} lacks target '{target_name}'"
            )));
        }
        Ok(Self {
            molecules,
            target_name,
            standardizer: None,
        })
    }

    pub fn molecules(&self) -> &[Molecule] {
        &self.molecules
    }

    pub fn len(&self) -> usize {
        self.molecules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molecules.is_empty()
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn standardizer(&self) -> Option<Standardizer> {
        self.standardizer
    }

    pub fn set_standardizer(&mut self, s: Standardizer) -> Result<()> {
        if !(s.std > 0.0) || !s.mean.is_finite() || !s.std.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "standardizer std must be positive and finite, got {s:?}"
            )));
        }
        self.standardizer = Some(s);
        Ok(())
    }

    /// Physical-unit target of molecule `i`.
    pub fn target(&self, i: usize) -> f64 {
        self.molecules[i]
            .target(&self.target_name)
            .expect("dataset invariant: every molecule has the target")
    }

    pub fn targets(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.target(i)).collect()
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Self {
            molecules: indices.iter().map(|&i| self.molecules[i].clone()).collect(),
            target_name: self.target_name.clone(),
            standardizer: self.standardizer,
        }
    }
}

/// How many molecules go into each split; `test: None` takes the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: Option<usize>,
}

/// Shuffles indices with `seed`, then cuts train, validation and test in order.
pub fn split(
    dataset: &Dataset,
    counts: SplitCounts,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let n = dataset.len();
    let fixed = counts.train + counts.val;
    let test = match counts.test {
        Some(t) => t,
        None => n.saturating_sub(fixed),
    };
    if fixed + test > n {
        return Err(Error::InvalidArgument(format!(
            "split counts ({}, {}, {test}) exceed dataset size {n}",
            counts.train, counts.val
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, rest) = order.split_at(counts.train);
    let (val, rest) = rest.split_at(counts.val);
    let test = &rest[..test];
    Ok((
        dataset.subset(train),
        dataset.subset(val),
        dataset.subset(test),
    ))
}

/// Mean and population standard deviation of the targets, std clamped to `>= 1e-8`.
pub fn fit_standardizer(train: &Dataset) -> Result<Standardizer> {
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot fit a standardizer on an empty dataset".to_string(),
        ));
    }
    let n = train.len() as f64;
    let mean = (0..train.len()).map(|i| train.target(i)).sum::<f64>() / n;
    let var = (0..train.len())
        .map(|i| {
            let d = train.target(i) - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(Standardizer {
        mean,
        std: libm::sqrt(var).max(1e-8),
    })
}
