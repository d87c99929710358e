mod common;

use proptest::prelude::*;
use rand::Rng;
use rectree::{outer_leaves, CellId, TreeConfig};

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, dim)
}

proptest! {
    #[test]
    fn located_cell_contains_the_point(dim in 1usize..5, seed in any::<u64>(), depth in 0u32..30) {
        let mut r = common::rng(seed);
        let x: Vec<f64> = (0..dim).map(|_| r.random()).collect();
        let tree = TreeConfig::new(dim).unwrap();
        let cell = tree.locate(&x, depth).unwrap();
        prop_assert!(cell.contains_point(&x));
        prop_assert_eq!(cell.depth, depth);
    }

    #[test]
    fn locate_nests(x in point(3), depth in 0u32..31) {
        let tree = TreeConfig::new(3).unwrap();
        let fine = tree.locate(&x, depth + 1).unwrap();
        let coarse = tree.locate(&x, depth).unwrap();
        prop_assert_eq!(fine.parent(), coarse.clone());
        prop_assert!(tree.children(&coarse).unwrap().contains(&fine));
    }

    #[test]
    fn children_tile_the_parent(dim in 1usize..4, depth in 0u32..10, seed in any::<u64>()) {
        let tree = TreeConfig::new(dim).unwrap();
        let mut r = common::rng(seed);
        let x: Vec<f64> = (0..dim).map(|_| r.random()).collect();
        let cell = tree.locate(&x, depth).unwrap();
        let children = tree.children(&cell).unwrap();
        prop_assert_eq!(children.len(), 1usize << dim);
        let volume: f64 = children.iter().map(CellId::volume).sum();
        prop_assert_eq!(volume, cell.volume());
        for _ in 0..50 {
            let y: Vec<f64> = cell
                .lower_corner()
                .iter()
                .map(|&lo| lo + r.random::<f64>() * cell.side())
                .collect();
            if cell.contains_point(&y) {
                prop_assert_eq!(children.iter().filter(|c| c.contains_point(&y)).count(), 1);
            }
        }
    }

    #[test]
    fn diameter_and_volume_laws(dim in 1usize..9, x in point(8), depth in 0u32..20) {
        let tree = TreeConfig::new(dim).unwrap();
        let cell = tree.locate(&x[..dim], depth).unwrap();
        let side = 2f64.powi(-(depth as i32));
        prop_assert!((cell.diameter() - (dim as f64).sqrt() * side).abs() <= 1e-15 * cell.diameter());
        prop_assert_eq!(cell.volume(), 2f64.powi(-((depth as usize * dim) as i32)));
    }

    #[test]
    fn outer_leaves_tile_and_obey_the_count_bound(
        dim in 1usize..4,
        size in 1usize..200,
        seed in any::<u64>(),
    ) {
        let tree = TreeConfig::new(dim).unwrap();
        let subtree = common::random_subtree(dim, size, 12, seed);
        let leaves = outer_leaves(&tree, &subtree).unwrap();
        let a = 1usize << dim;
        prop_assert!(leaves.len() <= (a - 1) * subtree.len() + 1);
        for leaf in leaves.iter() {
            prop_assert!(!subtree.contains(leaf));
            prop_assert!(leaf.is_root() || subtree.contains(&leaf.parent()));
        }
        let mut r = common::rng(seed ^ 1);
        for _ in 0..200 {
            let x: Vec<f64> = (0..dim).map(|_| r.random()).collect();
            prop_assert_eq!(leaves.iter().filter(|l| l.contains_point(&x)).count(), 1);
        }
    }
}

#[test]
fn every_depth_partitions_the_cube() {
    let tree = TreeConfig::new(2).unwrap();
    let mut r = common::rng(99);
    for _ in 0..10_000 {
        let x = [r.random::<f64>(), r.random::<f64>()];
        let depth = r.random_range(0..=tree.max_depth);
        let cell = tree.locate(&x, depth).unwrap();
        assert!(cell.contains_point(&x));
        // Neighbouring cells at the same depth must not contain x.
        for axis in 0..2 {
            for step in [-1i64, 1] {
                let k = cell.index[axis] as i64 + step;
                if k < 0 || k >= 1i64 << depth {
                    continue;
                }
                let mut index = cell.index.clone();
                index[axis] = k as u64;
                assert!(!CellId::new(depth, index).unwrap().contains_point(&x));
            }
        }
    }
}
