#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rectree::oracle::DiscreteDistribution;
use rectree::{CellId, Dataset, Subtree, TreeConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_data(dim: usize, n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    Dataset::new(dim, (0..n * dim).map(|_| r.random::<f64>()).collect()).unwrap()
}

/// Points clustered around a few centers, so deep cells get populated.
pub fn clustered_data(dim: usize, n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let k = r.random_range(1..6);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| r.random_range(0.1..0.9)).collect())
        .collect();
    let spread = 10f64.powf(r.random_range(-4.0..-1.0));
    let mut pts = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let c = &centers[r.random_range(0..k)];
        for &ck in c {
            let v: f64 = ck + spread * (r.random::<f64>() - 0.5);
            pts.push(v.clamp(0.0, 1.0 - f64::EPSILON));
        }
    }
    Dataset::new(dim, pts).unwrap()
}

/// Grows a subtree by repeatedly attaching a random child to a random member.
pub fn random_subtree(dim: usize, size: usize, max_depth: u32, seed: u64) -> Subtree {
    let tree = TreeConfig::new(dim).unwrap();
    let mut r = rng(seed);
    let mut cells = vec![CellId::root(dim)];
    let mut attempts = 0;
    while cells.len() < size && attempts < 50 * size {
        attempts += 1;
        let parent = cells[r.random_range(0..cells.len())].clone();
        if parent.depth >= max_depth {
            continue;
        }
        let children = tree.children(&parent).unwrap();
        let child = children[r.random_range(0..children.len())].clone();
        if !cells.contains(&child) {
            cells.push(child);
        }
    }
    Subtree::new(dim, cells).unwrap()
}

/// Distinct atoms on a coarse dyadic grid with random integer multiplicities.
pub fn random_distribution(
    max_atoms: usize,
    max_dim: usize,
    seed: u64,
) -> (DiscreteDistribution, Vec<usize>) {
    let mut r = rng(seed);
    let dim = r.random_range(1..=max_dim);
    let resolution = r.random_range(3..=10);
    let m = r.random_range(1..=max_atoms.min(1 << (resolution * dim).min(20)));
    let mut seen = std::collections::BTreeSet::new();
    let mut atoms = Vec::new();
    while seen.len() < m {
        let key: Vec<u64> = (0..dim)
            .map(|_| r.random_range(0..1u64 << resolution))
            .collect();
        if seen.insert(key.clone()) {
            // Off-lattice jitter keeps atoms away from cell boundaries.
            atoms.extend(
                key.iter().map(|&k| {
                    (k as f64 + r.random_range(0.05..0.95)) / (1u64 << resolution) as f64
                }),
            );
        }
    }
    let counts: Vec<usize> = (0..m).map(|_| r.random_range(1..=5)).collect();
    let dist = DiscreteDistribution::from_multiplicities(dim, atoms, &counts).unwrap();
    (dist, counts)
}
