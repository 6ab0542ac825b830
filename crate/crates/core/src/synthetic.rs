//! Seeded synthetic molecules labelled by a Lennard-Jones-form pair potential.
//!
//! For atoms `a`, `b` at distance `r < cutoff` the pair energy is
//! `eps(Za, Zb) * ((r0/r)^12 - 2 (r0/r)^6)`, which has its minimum `-eps` at `r = r0`.
//! The molecular energy is the sum over unordered pairs.
//!
//! | pair | eps (eV) | r0 (Å) |
//! |------|----------|--------|
//! | H-H  | 0.05     | 0.90   |
//! | H-C  | 0.08     | 1.00   |
//! | H-N  | 0.07     | 0.98   |
//! | H-O  | 0.06     | 0.95   |
//! | C-C  | 0.12     | 1.10   |
//! | C-N  | 0.11     | 1.08   |
//! | C-O  | 0.10     | 1.05   |
//! | N-N  | 0.10     | 1.05   |
//! | N-O  | 0.09     | 1.02   |
//! | O-O  | 0.08     | 1.00   |

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{distance, Dataset, Molecule};
use crate::error::{Error, Result};

pub const ELEMENTS: [u32; 4] = [1, 6, 7, 8];
pub const MIN_ATOMS: usize = 3;
pub const MAX_ATOMS: usize = 12;
/// Rejection sampling keeps every pair at least this far apart (Å).
pub const MIN_DISTANCE: f64 = 0.8;
pub const TARGET_NAME: &str = "energy";

const MAX_ATTEMPTS_PER_ATOM: usize = 10_000;

/// `(Za, Zb, eps, r0)` with `Za <= Zb`.
pub const PAIR_TABLE: [(u32, u32, f64, f64); 10] = [
    (1, 1, 0.05, 0.90),
    (1, 6, 0.08, 1.00),
    (1, 7, 0.07, 0.98),
    (1, 8, 0.06, 0.95),
    (6, 6, 0.12, 1.10),
    (6, 7, 0.11, 1.08),
    (6, 8, 0.10, 1.05),
    (7, 7, 0.10, 1.05),
    (7, 8, 0.09, 1.02),
    (8, 8, 0.08, 1.00),
];

/// `(eps, r0)` for an element pair, order-insensitive.
pub fn pair_parameters(za: u32, zb: u32) -> Option<(f64, f64)> {
    let (lo, hi) = if za <= zb { (za, zb) } else { (zb, za) };
    PAIR_TABLE
        .iter()
        .find(|&&(a, b, _, _)| a == lo && b == hi)
        .map(|&(_, _, eps, r0)| (eps, r0))
}

pub fn pair_energy(za: u32, zb: u32, r: f64) -> Result<f64> {
    let (eps, r0) = pair_parameters(za, zb)
        .ok_or_else(|| Error::InvalidData(format!("no pair parameters for elements {za}-{zb}")))?;
    let s6 = libm::pow(r0 / r, 6.0);
    Ok(eps * (s6 * s6 - 2.0 * s6))
}

/// Sum of pair energies over unordered pairs closer than `cutoff`.
pub fn energy(atomic_numbers: &[u32], positions: &[[f64; 3]], cutoff: f64) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let r = distance(&positions[i], &positions[j]);
            if r < cutoff {
                total += pair_energy(atomic_numbers[i], atomic_numbers[j], r)?;
            }
        }
    }
    Ok(total)
}

/// Side length (Å) of the cube atoms are sampled in: about 15 Å³ per atom at
/// the upper atom count, the density of small organic molecules. Denser boxes
/// put most pairs deep in the repulsive wall and the labels become heavy-tailed.
pub fn box_side(n_atoms: usize) -> f64 {
    2.0 * libm::cbrt(n_atoms as f64) + 1.0
}

/// Generates `count` molecules as a pure function of `seed`.
pub fn generate(count: usize, seed: u64, cutoff: f64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if !(cutoff > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff must be positive, got {cutoff}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut molecules = Vec::with_capacity(count);
    for k in 0..count {
        let n = rng.gen_range(MIN_ATOMS..=MAX_ATOMS);
        let side = box_side(n);
        let z: Vec<u32> = (0..n)
            .map(|_| ELEMENTS[rng.gen_range(0..ELEMENTS.len())])
            .collect();
        let mut positions: Vec<[f64; 3]> = Vec::with_capacity(n);
        for a in 0..n {
            let mut placed = false;
            for _ in 0..MAX_ATTEMPTS_PER_ATOM {
                let p = [
                    rng.gen::<f64>() * side,
                    rng.gen::<f64>() * side,
                    rng.gen::<f64>() * side,
                ];
                if positions.iter().all(|q| distance(&p, q) >= MIN_DISTANCE) {
                    positions.push(p);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::InvalidData(format!(
                    "molecule {k}: could not place atom {a} after {MAX_ATTEMPTS_PER_ATOM} attempts"
                )));
            }
        }
        let e = energy(&z, &positions, cutoff)?;
        let mut targets = BTreeMap::new();
        targets.insert(TARGET_NAME.to_string(), e);
        molecules.push(Molecule::new(z, positions, targets)?);
    }
    Dataset::new(molecules, TARGET_NAME)
}
