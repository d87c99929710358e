//! Dyadic partition tree over the half-open unit cube `[0,1)^D`.
//!
//! The tree is implicit: a cell is an address `(depth, lattice index)` and
//! navigation is arithmetic. Only subtrees and outer-leaf partitions are
//! materialized, as ordered sets of addresses.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default depth cap. Lattice indices stay far below `u64::MAX`.
pub const DEFAULT_MAX_DEPTH: u32 = 32;

/// Beyond this depth `floor(2^j x)` no longer distinguishes `f64` inputs.
pub const HARD_MAX_DEPTH: u32 = 52;

/// Largest supported ambient dimension (`2^D` must fit a `u64`).
pub const MAX_DIM: usize = 32;

/// Address of the dyadic cube `prod_k [index_k 2^-depth, (index_k + 1) 2^-depth)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub depth: u32,
    pub index: Vec<u64>,
}

impl CellId {
    pub fn root(dim: usize) -> Self {
        Self {
            depth: 0,
            index: vec![0; dim],
        }
    }

    /// Checked constructor: every lattice coordinate must be `< 2^depth`.
    pub fn new(depth: u32, index: Vec<u64>) -> Result<Self> {
        if index.is_empty() || index.len() > MAX_DIM {
            return Err(Error::InvalidConfig(format!(
                "cell dimension {} outside 1..={MAX_DIM}",
                index.len()
            )));
        }
        if depth > HARD_MAX_DEPTH {
            return Err(Error::DepthExceeded {
                depth,
                max_depth: HARD_MAX_DEPTH,
            });
        }
        let side = 1u64 << depth;
        if let Some(k) = index.iter().find(|&&k| k >= side) {
            return Err(Error::InvalidConfig(format!(
                "lattice coordinate {k} out of range at depth {depth}"
            )));
        }
        Ok(Self { depth, index })
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn is_root(&self) -> bool {
        self.depth == 0
    }

    /// Parent cell; the root is its own parent.
    pub fn parent(&self) -> CellId {
        if self.depth == 0 {
            return self.clone();
        }
        CellId {
            depth: self.depth - 1,
            index: self.index.iter().map(|k| k >> 1).collect(),
        }
    }

    /// Ancestor at `depth` (which must not exceed `self.depth`).
    pub fn ancestor(&self, depth: u32) -> CellId {
        debug_assert!(depth <= self.depth);
        let shift = self.depth - depth;
        CellId {
            depth,
            index: self.index.iter().map(|k| k >> shift).collect(),
        }
    }

    /// True when `other` is this cell or one of its descendants.
    pub fn contains_cell(&self, other: &CellId) -> bool {
        other.depth >= self.depth
            && other.dim() == self.dim()
            && other.ancestor(self.depth).index == self.index
    }

    pub fn side(&self) -> f64 {
        (-(self.depth as f64)).exp2()
    }

    pub fn lower_corner(&self) -> Vec<f64> {
        let side = self.side();
        self.index.iter().map(|&k| k as f64 * side).collect()
    }

    /// Geometric center of the cube; the code vector for cells with no data.
    pub fn center(&self) -> Vec<f64> {
        let side = self.side();
        self.index
            .iter()
            .map(|&k| (k as f64 + 0.5) * side)
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        (self.dim() as f64).sqrt() * self.side()
    }

    /// Lebesgue volume `2^{-jD}`.
    pub fn volume(&self) -> f64 {
        (-(self.depth as f64) * self.dim() as f64).exp2()
    }

    /// Half-open membership test.
    pub fn contains_point(&self, point: &[f64]) -> bool {
        let scale = (self.depth as f64).exp2();
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.index)
                .all(|(&x, &k)| (0.0..1.0).contains(&x) && (x * scale).floor() as u64 == k)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {:?})", self.depth, self.index)
    }
}

/// Geometry of the dyadic tree: dimension, branching factor and depth cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub dim: usize,
    pub branching: u64,
    pub max_depth: u32,
}

impl TreeConfig {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_max_depth(dim, DEFAULT_MAX_DEPTH)
    }

    pub fn with_max_depth(dim: usize, max_depth: u32) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidConfig(format!(
                "dimension {dim} outside 1..={MAX_DIM}"
            )));
        }
        if max_depth == 0 || max_depth > HARD_MAX_DEPTH {
            return Err(Error::InvalidConfig(format!(
                "max_depth {max_depth} outside 1..={HARD_MAX_DEPTH}"
            )));
        }
        Ok(Self {
            dim,
            branching: 1u64 << dim,
            max_depth,
        })
    }

    pub fn root(&self) -> CellId {
        CellId::root(self.dim)
    }

    fn check_depth(&self, depth: u32) -> Result<()> {
        if depth > self.max_depth {
            Err(Error::DepthExceeded {
                depth,
                max_depth: self.max_depth,
            })
        } else {
            Ok(())
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            })
        } else {
            Ok(())
        }
    }

    /// The unique cell of `depth` containing `point`.
    pub fn locate(&self, point: &[f64], depth: u32) -> Result<CellId> {
        self.check_dim(point.len())?;
        self.check_depth(depth)?;
        let index = lattice_coords(point, depth).map_err(|(axis, value)| Error::OutOfDomain {
            index: 0,
            axis,
            value,
        })?;
        Ok(CellId { depth, index })
    }

    /// The `2^D` children, ordered by their offset bit pattern (bit `k` of
    /// the position is the offset along axis `k`).
    pub fn children(&self, cell: &CellId) -> Result<Vec<CellId>> {
        self.check_dim(cell.dim())?;
        if cell.depth >= self.max_depth {
            return Err(Error::DepthExceeded {
                depth: cell.depth + 1,
                max_depth: self.max_depth,
            });
        }
        Ok(children_unchecked(cell))
    }

    pub fn parent(&self, cell: &CellId) -> CellId {
        cell.parent()
    }
}

pub(crate) fn children_unchecked(cell: &CellId) -> Vec<CellId> {
    let dim = cell.dim();
    (0..1u64 << dim)
        .map(|bits| CellId {
            depth: cell.depth + 1,
            index: cell
                .index
                .iter()
                .enumerate()
                .map(|(k, &i)| 2 * i + ((bits >> k) & 1))
                .collect(),
        })
        .collect()
}

/// `floor(2^depth x_k)` per coordinate, or the first offending `(axis, value)`.
pub(crate) fn lattice_coords(
    point: &[f64],
    depth: u32,
) -> std::result::Result<Vec<u64>, (usize, f64)> {
    let scale = (depth as f64).exp2();
    point
        .iter()
        .enumerate()
        .map(|(axis, &x)| {
            if (0.0..1.0).contains(&x) {
                Ok((x * scale).floor() as u64)
            } else {
                Err((axis, x))
            }
        })
        .collect()
}

/// A finite, parent-closed set of cells containing the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtree {
    dim: usize,
    cells: BTreeSet<CellId>,
}

impl Subtree {
    pub fn root_only(dim: usize) -> Self {
        Self {
            dim,
            cells: BTreeSet::from([CellId::root(dim)]),
        }
    }

    /// Validates the root and parent-closure invariants.
    pub fn new(dim: usize, cells: impl IntoIterator<Item = CellId>) -> Result<Self> {
        let cells: BTreeSet<CellId> = cells.into_iter().collect();
        if !cells.contains(&CellId::root(dim)) {
            return Err(Error::InvalidSubtree("root is missing".into()));
        }
        for cell in &cells {
            if cell.dim() != dim {
                return Err(Error::InvalidSubtree(format!(
                    "{cell} has dimension {}, expected {dim}",
                    cell.dim()
                )));
            }
            if !cells.contains(&cell.parent()) {
                return Err(Error::InvalidSubtree(format!(
                    "parent of {cell} is missing"
                )));
            }
        }
        Ok(Self { dim, cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: &CellId) -> bool {
        self.cells.contains(cell)
    }

    pub fn is_root_only(&self) -> bool {
        self.cells.len() == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = &CellId> {
        self.cells.iter()
    }

    pub fn cells(&self) -> &BTreeSet<CellId> {
        &self.cells
    }

    pub fn max_depth(&self) -> u32 {
        self.cells.iter().map(|c| c.depth).max().unwrap_or(0)
    }

    pub fn is_subset(&self, other: &Subtree) -> bool {
        self.cells.is_subset(&other.cells)
    }
}

/// Smallest subtree containing every marked cell: the union of their
/// ancestor chains, plus the root.
pub fn smallest_subtree<'a>(dim: usize, marked: impl IntoIterator<Item = &'a CellId>) -> Subtree {
    let mut cells = BTreeSet::from([CellId::root(dim)]);
    for cell in marked {
        let mut current = cell.clone();
        // Stop as soon as a chain joins one already inserted.
        while cells.insert(current.clone()) {
            current = current.parent();
        }
    }
    Subtree { dim, cells }
}

/// A finite family of pairwise disjoint cells whose union is the cube.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterLeafPartition {
    dim: usize,
    leaves: BTreeSet<CellId>,
}

impl OuterLeafPartition {
    /// Checks that `leaves` tiles the cube: either the root alone, or
    /// exactly the outer leaves of the subtree formed by their strict
    /// ancestors.
    pub fn from_leaves(dim: usize, leaves: impl IntoIterator<Item = CellId>) -> Result<Self> {
        let leaves: BTreeSet<CellId> = leaves.into_iter().collect();
        if let Some(bad) = leaves.iter().find(|c| c.dim() != dim) {
            return Err(Error::InvalidPartition(format!(
                "{bad} has the wrong dimension"
            )));
        }
        let root = CellId::root(dim);
        if leaves.len() == 1 && leaves.contains(&root) {
            return Ok(Self { dim, leaves });
        }
        if leaves.is_empty() || leaves.contains(&root) {
            return Err(Error::InvalidPartition(
                "leaves do not tile the cube".into(),
            ));
        }
        let parents: Vec<CellId> = leaves.iter().map(CellId::parent).collect();
        let internal = smallest_subtree(dim, parents.iter());
        if internal.iter().any(|c| leaves.contains(c)) {
            return Err(Error::InvalidPartition(
                "a leaf contains another leaf".into(),
            ));
        }
        let expected: BTreeSet<CellId> = internal
            .iter()
            .flat_map(children_unchecked)
            .filter(|c| !internal.contains(c))
            .collect();
        if expected != leaves {
            return Err(Error::InvalidPartition(
                "leaves do not tile the cube".into(),
            ));
        }
        Ok(Self { dim, leaves })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn contains(&self, cell: &CellId) -> bool {
        self.leaves.contains(cell)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CellId> {
        self.leaves.iter()
    }

    pub fn leaves(&self) -> &BTreeSet<CellId> {
        &self.leaves
    }

    pub fn max_depth(&self) -> u32 {
        self.leaves.iter().map(|c| c.depth).max().unwrap_or(0)
    }
}

/// `Λ(T) = {I ∉ T : parent(I) ∈ T}`.
pub fn outer_leaves(tree: &TreeConfig, subtree: &Subtree) -> Result<OuterLeafPartition> {
    if subtree.dim() != tree.dim {
        return Err(Error::DimensionMismatch {
            expected: tree.dim,
            got: subtree.dim(),
        });
    }
    // Re-validate: a Subtree can be deserialized without going through `new`.
    let subtree = Subtree::new(subtree.dim(), subtree.iter().cloned())?;
    let mut leaves = BTreeSet::new();
    for cell in subtree.iter() {
        for child in tree.children(cell)? {
            if !subtree.contains(&child) {
                leaves.insert(child);
            }
        }
    }
    Ok(OuterLeafPartition {
        dim: tree.dim,
        leaves,
    })
}
