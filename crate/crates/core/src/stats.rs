//! Per-cell empirical statistics: counts, centers of mass, local
//! distortions and refinement gains.
//!
//! Points are sorted once in Morton order of their deepest lattice
//! coordinates, which makes every cell at every depth a contiguous run.
//! Each cell is then reduced exactly with two passes over its run: the
//! mean first, the scatter around it second.

use std::cmp::Ordering;

use rustc_hash::FxHashMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::partition::{lattice_coords, CellId, HARD_MAX_DEPTH};

/// Empirical statistics of one nonempty cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStats {
    /// Number of sample points in the cell.
    pub count: usize,
    /// Center of mass of those points.
    pub center: Vec<f64>,
    /// `(1/n) Σ_{x_i ∈ I} ‖x_i − center‖²`, normalized by the full sample size.
    pub local_error: f64,
    /// Refinement gain `sqrt((1/n) Σ_J n_J ‖c_J − c_I‖²)`; `None` at the depth cap.
    pub gain: Option<f64>,
}

/// Sparse statistics for every nonempty cell of depth `<= depth_cap`.
#[derive(Clone, Debug)]
pub struct StatsTable {
    dim: usize,
    n: usize,
    depth_cap: u32,
    cells: FxHashMap<CellId, CellStats>,
}

impl StatsTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn depth_cap(&self) -> u32 {
        self.depth_cap
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, cell: &CellId) -> Option<&CellStats> {
        self.cells.get(cell)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellId, &CellStats)> {
        self.cells.iter()
    }

    /// `n_I`, zero for cells with no points.
    pub fn count(&self, cell: &CellId) -> usize {
        self.cells.get(cell).map_or(0, |s| s.count)
    }

    /// `Ê_I`, zero for cells with no points.
    pub fn local_error(&self, cell: &CellId) -> f64 {
        self.cells.get(cell).map_or(0.0, |s| s.local_error)
    }

    /// `ĉ_I`, or the cube center when the cell holds no points.
    pub fn center_or_fallback(&self, cell: &CellId) -> Vec<f64> {
        match self.cells.get(cell) {
            Some(s) => s.center.clone(),
            None => cell.center(),
        }
    }

    /// `ε̂_I`. Cells without points have zero gain; cells at the depth cap
    /// have no children statistics and are refused.
    pub fn gain(&self, cell: &CellId) -> Result<f64> {
        if cell.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: cell.dim(),
            });
        }
        if cell.depth >= self.depth_cap {
            return Err(Error::GainUndefined {
                cell: cell.clone(),
                depth_cap: self.depth_cap,
            });
        }
        Ok(self.cells.get(cell).and_then(|s| s.gain).unwrap_or(0.0))
    }

    /// `Ê_I − Σ_{J ∈ C(I)} Ê_J`, the error-difference form of `ε̂²_I`.
    pub fn error_drop(&self, cell: &CellId) -> Result<f64> {
        if cell.depth >= self.depth_cap {
            return Err(Error::GainUndefined {
                cell: cell.clone(),
                depth_cap: self.depth_cap,
            });
        }
        let children: f64 = self.children_of(cell).map(|(_, s)| s.local_error).sum();
        Ok(self.local_error(cell) - children)
    }

    /// Stored (nonempty) children of `cell`.
    pub fn children_of<'a>(
        &'a self,
        cell: &'a CellId,
    ) -> impl Iterator<Item = (CellId, &'a CellStats)> + 'a {
        crate::partition::children_unchecked(cell)
            .into_iter()
            .filter_map(move |c| self.cells.get(&c).map(|s| (c, s)))
    }
}

/// Morton (Z-order) comparison of two lattice vectors of equal depth.
fn morton_cmp(a: &[u64], b: &[u64]) -> Ordering {
    let mut axis = 0;
    let mut top = 0u64;
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        let diff = x ^ y;
        if top < diff && top < (top ^ diff) {
            axis = k;
            top = diff;
        }
    }
    a[axis].cmp(&b[axis])
}

struct Builder<'a> {
    data: &'a Dataset,
    coords: Vec<u64>,
    order: Vec<usize>,
    depth_cap: u32,
    inv_n: f64,
    cells: FxHashMap<CellId, CellStats>,
}

impl Builder<'_> {
    fn coords_of(&self, point: usize) -> &[u64] {
        let d = self.data.dim();
        &self.coords[point * d..(point + 1) * d]
    }

    fn visit(&mut self, depth: u32, lo: usize, hi: usize) -> (usize, Vec<f64>) {
        let dim = self.data.dim();
        let shift = self.depth_cap - depth;
        let index: Vec<u64> = self
            .coords_of(self.order[lo])
            .iter()
            .map(|k| k >> shift)
            .collect();

        let count = hi - lo;
        let mut center = vec![0.0; dim];
        for &i in &self.order[lo..hi] {
            for (c, x) in center.iter_mut().zip(self.data.point(i)) {
                *c += x;
            }
        }
        center.iter_mut().for_each(|c| *c /= count as f64);
        let scatter: f64 = self.order[lo..hi]
            .iter()
            .map(|&i| squared_distance(self.data.point(i), &center))
            .sum();

        let gain = if depth < self.depth_cap {
            let child_shift = shift - 1;
            let mut spread = 0.0;
            let mut start = lo;
            while start < hi {
                let key: Vec<u64> = self
                    .coords_of(self.order[start])
                    .iter()
                    .map(|k| k >> child_shift)
                    .collect();
                let mut end = start + 1;
                while end < hi
                    && self
                        .coords_of(self.order[end])
                        .iter()
                        .zip(&key)
                        .all(|(k, q)| k >> child_shift == *q)
                {
                    end += 1;
                }
                let (child_count, child_center) = self.visit(depth + 1, start, end);
                spread += child_count as f64 * squared_distance(&child_center, &center);
                start = end;
            }
            Some((spread * self.inv_n).sqrt())
        } else {
            None
        };

        self.cells.insert(
            CellId { depth, index },
            CellStats {
                count,
                center: center.clone(),
                local_error: scatter * self.inv_n,
                gain,
            },
        );
        (count, center)
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Statistics of every nonempty cell down to `depth_cap`; gains for every
/// cell above it.
pub fn build_stats(data: &Dataset, depth_cap: u32) -> Result<StatsTable> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if depth_cap > HARD_MAX_DEPTH {
        return Err(Error::DepthExceeded {
            depth: depth_cap,
            max_depth: HARD_MAX_DEPTH,
        });
    }
    let dim = data.dim();
    let n = data.len();
    let mut coords = Vec::with_capacity(n * dim);
    for (index, point) in data.iter().enumerate() {
        let c = lattice_coords(point, depth_cap).map_err(|(axis, value)| Error::OutOfDomain {
            index,
            axis,
            value,
        })?;
        coords.extend(c);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        morton_cmp(
            &coords[a * dim..(a + 1) * dim],
            &coords[b * dim..(b + 1) * dim],
        )
    });

    let mut builder = Builder {
        data,
        coords,
        order,
        depth_cap,
        inv_n: 1.0 / n as f64,
        cells: FxHashMap::default(),
    };
    builder.visit(0, 0, n);
    Ok(StatsTable {
        dim,
        n,
        depth_cap,
        cells: builder.cells,
    })
}

/// `ε̂_I` looked up in a table.
pub fn gain(stats: &StatsTable, cell: &CellId) -> Result<f64> {
    stats.gain(cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_point() -> Dataset {
        Dataset::new(1, vec![0.1, 0.9]).unwrap()
    }

    #[test]
    fn single_point_has_no_spread() {
        let data = Dataset::new(2, vec![0.3, 0.8]).unwrap();
        let stats = build_stats(&data, 5).unwrap();
        assert_eq!(stats.len(), 6);
        for (cell, s) in stats.iter() {
            assert_eq!(s.count, 1);
            assert_eq!(s.center, vec![0.3, 0.8]);
            assert_eq!(s.local_error, 0.0);
            if cell.depth < 5 {
                assert_eq!(s.gain, Some(0.0));
            }
        }
    }

    #[test]
    fn two_point_fixture() {
        let stats = build_stats(&two_point(), 1).unwrap();
        let root = CellId::root(1);
        let r = stats.get(&root).unwrap();
        assert!((r.local_error - 0.16).abs() < 1e-15);
        assert!((stats.gain(&root).unwrap() - 0.4).abs() < 1e-15);
        assert!((stats.error_drop(&root).unwrap() - 0.16).abs() < 1e-15);
        for k in 0..2 {
            let c = CellId::new(1, vec![k]).unwrap();
            assert_eq!(stats.local_error(&c), 0.0);
        }
    }

    #[test]
    fn gain_at_the_cap_is_undefined() {
        let stats = build_stats(&two_point(), 1).unwrap();
        let child = CellId::new(1, vec![0]).unwrap();
        assert!(matches!(
            stats.gain(&child),
            Err(Error::GainUndefined { .. })
        ));
    }

    #[test]
    fn gain_of_empty_cell_is_zero() {
        let stats = build_stats(&two_point(), 3).unwrap();
        let empty = CellId::new(2, vec![1]).unwrap();
        assert_eq!(stats.count(&empty), 0);
        assert_eq!(stats.gain(&empty).unwrap(), 0.0);
        assert_eq!(stats.center_or_fallback(&empty), vec![0.375]);
    }

    #[test]
    fn all_points_in_one_child() {
        let data = Dataset::new(1, vec![0.05, 0.1, 0.2, 0.3, 0.45]).unwrap();
        let stats = build_stats(&data, 4).unwrap();
        let root = CellId::root(1);
        let left = CellId::new(1, vec![0]).unwrap();
        assert_eq!(stats.gain(&root).unwrap(), 0.0);
        let drop = stats.local_error(&root) - stats.local_error(&left);
        assert!(drop.abs() <= 1e-15);
    }

    #[test]
    fn identical_centers_give_zero_gain() {
        // Children of the root each hold a symmetric pair around 0.5.
        let data = Dataset::new(1, vec![0.25, 0.75]).unwrap();
        let stats = build_stats(&data, 2).unwrap();
        let left = CellId::new(1, vec![0]).unwrap();
        assert_eq!(stats.gain(&left).unwrap(), 0.0);
    }

    #[test]
    fn cap_beyond_float_resolution_is_refused() {
        let data = Dataset::new(1, vec![0.2, 0.4]).unwrap();
        assert!(matches!(
            build_stats(&data, 60),
            Err(Error::DepthExceeded { .. })
        ));
    }

    #[test]
    fn counts_sum_to_n_and_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [1, 2, 3] {
            let pts: Vec<f64> = (0..500 * dim).map(|_| rng.random::<f64>()).collect();
            let data = Dataset::new(dim, pts).unwrap();
            let cap = 6;
            let stats = build_stats(&data, cap).unwrap();
            for depth in 0..=cap {
                let total: usize = stats
                    .iter()
                    .filter(|(c, _)| c.depth == depth)
                    .map(|(_, s)| s.count)
                    .sum();
                assert_eq!(total, 500);
            }
            for (cell, s) in stats.iter() {
                if cell.depth < cap {
                    let g = s.gain.unwrap();
                    let drop = stats.error_drop(cell).unwrap();
                    assert!((g * g - drop).abs() <= 1e-9 * s.local_error.max(1e-300));
                }
            }
        }
    }

    #[test]
    fn morton_order_groups_cells() {
        let a = [0b01u64, 0b10];
        let b = [0b10u64, 0b01];
        // `b` differs from `a` in the top bit of axis 0 and of axis 1; ties
        // resolve to the lower axis.
        assert_eq!(morton_cmp(&a, &b), Ordering::Less);
        assert_eq!(morton_cmp(&a, &a), Ordering::Equal);
    }
}
