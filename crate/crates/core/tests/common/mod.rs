#![allow(dead_code)]

use std::collections::BTreeMap;

use lkm_core::{ModelConfig, Molecule};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn molecule(z: &[u32], positions: &[[f64; 3]], energy: f64) -> Molecule {
    let mut targets = BTreeMap::new();
    targets.insert("energy".to_string(), energy);
    Molecule::new(z.to_vec(), positions.to_vec(), targets).unwrap()
}

/// 3..=`max_atoms` atoms of H/C/N/O in a small box, pairs at least 0.8 Å apart.
pub fn random_molecule(rng: &mut ChaCha8Rng, max_atoms: usize) -> Molecule {
    let n = rng.gen_range(3..=max_atoms);
    let side = 1.5 * (n as f64).cbrt() + 1.0;
    let mut pos: Vec<[f64; 3]> = Vec::new();
    while pos.len() < n {
        let p = [
            rng.gen::<f64>() * side,
            rng.gen::<f64>() * side,
            rng.gen::<f64>() * side,
        ];
        if pos.iter().all(|q| dist(&p, q) >= 0.8) {
            pos.push(p);
        }
    }
    let z: Vec<u32> = (0..n).map(|_| [1, 6, 7, 8][rng.gen_range(0..4)]).collect();
    molecule(&z, &pos, rng.gen_range(-1.0..1.0))
}

pub fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Uniformly random rotation matrix from a normalized quaternion.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let mut q = [0.0f64; 4];
    loop {
        for c in &mut q {
            *c = rng.gen_range(-1.0..1.0);
        }
        let n2: f64 = q.iter().map(|c| c * c).sum();
        if n2 > 1e-3 && n2 <= 1.0 {
            let n = n2.sqrt();
            q.iter_mut().for_each(|c| *c /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

pub fn rigid_motion(positions: &[[f64; 3]], r: &[[f64; 3]; 3], t: [f64; 3]) -> Vec<[f64; 3]> {
    positions
        .iter()
        .map(|p| {
            let mut out = [0.0; 3];
            for (i, o) in out.iter_mut().enumerate() {
                *o = r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i];
            }
            out
        })
        .collect()
}

pub fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

pub fn small_config(n_layers: usize, embedding_dim: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        n_layers,
        embedding_dim,
        n_rbf: 8,
        seed,
        ..ModelConfig::default()
    }
}
