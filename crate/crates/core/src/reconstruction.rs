//! Reconstruction trees: threshold the refinement gains, keep the smallest
//! subtree holding every cell whose gain reaches the threshold, and quantize
//! each outer leaf to its center of mass.

use std::collections::BTreeSet;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::partition::{
    lattice_coords, outer_leaves, smallest_subtree, CellId, OuterLeafPartition, Subtree,
    TreeConfig, MAX_DIM,
};
use crate::stats::{build_stats, squared_distance, StatsTable};

/// Data-size dependent depth truncation and threshold.
///
/// `j_n = floor(γ ln n / ln a)`, `c_a = 1 / (128 (a + 1))` and
/// `η_n = sqrt((γ + β) ln n / (c_a n))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub gamma: f64,
    pub beta: f64,
    pub branching: u64,
}

pub const DEFAULT_GAMMA: f64 = 1.5;
pub const DEFAULT_BETA: f64 = 1.0;

impl RateSchedule {
    pub fn new(gamma: f64, beta: f64, dim: usize) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "gamma = {gamma} must be > 0"
            )));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidSchedule(format!("beta = {beta} must be > 0")));
        }
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidSchedule(format!(
                "dimension {dim} unsupported"
            )));
        }
        Ok(Self {
            gamma,
            beta,
            branching: 1u64 << dim,
        })
    }

    pub fn with_defaults(dim: usize) -> Result<Self> {
        Self::new(DEFAULT_GAMMA, DEFAULT_BETA, dim)
    }

    pub fn dim(&self) -> usize {
        self.branching.trailing_zeros() as usize
    }

    /// `j_n`. The quotient is nudged by 1e-9 so that exact powers of `a`
    /// are not lost to rounding in the logarithms.
    pub fn depth(&self, n: usize) -> u32 {
        if n <= 1 {
            return 0;
        }
        let x = self.gamma * (n as f64).ln() / (self.branching as f64).ln();
        (x + 1e-9).floor() as u32
    }

    pub fn c_a(&self) -> f64 {
        1.0 / (128.0 * (self.branching as f64 + 1.0))
    }

    /// `η_n`; zero for `n <= 1`.
    pub fn eta(&self, n: usize) -> f64 {
        if n <= 1 {
            return 0.0;
        }
        let n = n as f64;
        ((self.gamma + self.beta) * n.ln() / (self.c_a() * n)).sqrt()
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(eta))
    }
}

/// Cells of depth `<= depth_cap` whose gain is at least `eta`.
pub fn marked_cells(stats: &StatsTable, eta: f64, depth_cap: u32) -> Result<Vec<CellId>> {
    check_eta(eta)?;
    if depth_cap >= stats.depth_cap() {
        return Err(Error::GainUndefined {
            cell: CellId {
                depth: depth_cap,
                index: vec![0; stats.dim()],
            },
            depth_cap: stats.depth_cap(),
        });
    }
    Ok(stats
        .iter()
        .filter(|(c, s)| c.depth <= depth_cap && s.gain.is_some_and(|g| g >= eta))
        .map(|(c, _)| c.clone())
        .collect())
}

/// `T̂_η`: the root alone when no cell of depth `<= depth_cap` reaches the
/// threshold, otherwise the ancestor closure of the cells that do.
///
/// Gains at `depth_cap` need children statistics, so `stats` must extend
/// at least one level deeper.
pub fn threshold_subtree(stats: &StatsTable, eta: f64, depth_cap: u32) -> Result<Subtree> {
    let marked = marked_cells(stats, eta, depth_cap)?;
    Ok(smallest_subtree(stats.dim(), marked.iter()))
}

/// A finite partition of the cube with one code vector per cell.
#[derive(Clone, Debug)]
pub struct Quantizer {
    leaves: OuterLeafPartition,
    codebook: FxHashMap<CellId, Vec<f64>>,
    threshold: f64,
    depth_cap: u32,
    schedule: RateSchedule,
    min_leaf_depth: u32,
    max_leaf_depth: u32,
}

impl PartialEq for Quantizer {
    fn eq(&self, other: &Self) -> bool {
        self.leaves == other.leaves
            && self.codebook == other.codebook
            && self.threshold.to_bits() == other.threshold.to_bits()
            && self.depth_cap == other.depth_cap
            && self.schedule == other.schedule
    }
}

impl Quantizer {
    /// Code vectors from `stats`: the center of mass of occupied leaves,
    /// the cube center of empty ones.
    pub fn from_partition(
        leaves: OuterLeafPartition,
        stats: &StatsTable,
        threshold: f64,
        depth_cap: u32,
        schedule: RateSchedule,
    ) -> Result<Self> {
        if leaves.dim() != stats.dim() {
            return Err(Error::DimensionMismatch {
                expected: stats.dim(),
                got: leaves.dim(),
            });
        }
        if leaves.max_depth() > stats.depth_cap() {
            return Err(Error::DepthExceeded {
                depth: leaves.max_depth(),
                max_depth: stats.depth_cap(),
            });
        }
        let codebook = leaves
            .iter()
            .map(|c| (c.clone(), stats.center_or_fallback(c)))
            .collect();
        Self::assemble(leaves, codebook, threshold, depth_cap, schedule)
    }

    /// Assembles a quantizer from explicit code vectors, one per leaf.
    pub fn from_codebook(
        leaves: OuterLeafPartition,
        codebook: FxHashMap<CellId, Vec<f64>>,
        threshold: f64,
        depth_cap: u32,
        schedule: RateSchedule,
    ) -> Result<Self> {
        if codebook.len() != leaves.len() || leaves.iter().any(|c| !codebook.contains_key(c)) {
            return Err(Error::InvalidPartition(
                "codebook and leaves disagree".into(),
            ));
        }
        if codebook.values().any(|v| v.len() != leaves.dim()) {
            return Err(Error::InvalidPartition(
                "code vector of the wrong length".into(),
            ));
        }
        Self::assemble(leaves, codebook, threshold, depth_cap, schedule)
    }

    fn assemble(
        leaves: OuterLeafPartition,
        codebook: FxHashMap<CellId, Vec<f64>>,
        threshold: f64,
        depth_cap: u32,
        schedule: RateSchedule,
    ) -> Result<Self> {
        if schedule.dim() != leaves.dim() {
            return Err(Error::InvalidSchedule(format!(
                "schedule branching {} does not match dimension {}",
                schedule.branching,
                leaves.dim()
            )));
        }
        let min_leaf_depth = leaves.iter().map(|c| c.depth).min().unwrap_or(0);
        let max_leaf_depth = leaves.max_depth();
        Ok(Self {
            leaves,
            codebook,
            threshold,
            depth_cap,
            schedule,
            min_leaf_depth,
            max_leaf_depth,
        })
    }

    pub fn dim(&self) -> usize {
        self.leaves.dim()
    }

    pub fn leaves(&self) -> &OuterLeafPartition {
        &self.leaves
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// The truncation depth `j_n` used when fitting.
    pub fn depth_cap(&self) -> u32 {
        self.depth_cap
    }

    pub fn schedule(&self) -> &RateSchedule {
        &self.schedule
    }

    /// `(leaf, code vector)` pairs in leaf order.
    pub fn entries(&self) -> impl Iterator<Item = (&CellId, &[f64])> {
        self.leaves.iter().map(|c| (c, self.codebook[c].as_slice()))
    }

    /// The leaf containing `point`.
    pub fn encode(&self, point: &[f64]) -> Result<CellId> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        let deepest = lattice_coords(point, self.max_leaf_depth).map_err(|(axis, value)| {
            Error::OutOfDomain {
                index: 0,
                axis,
                value,
            }
        })?;
        let mut probe = CellId {
            depth: 0,
            index: deepest.clone(),
        };
        for depth in self.min_leaf_depth..=self.max_leaf_depth {
            let shift = self.max_leaf_depth - depth;
            probe.depth = depth;
            for (p, k) in probe.index.iter_mut().zip(&deepest) {
                *p = k >> shift;
            }
            if self.codebook.contains_key(&probe) {
                return Ok(probe);
            }
        }
        Err(Error::InvalidPartition("no leaf contains the point".into()))
    }

    /// The code vector of a leaf.
    pub fn decode(&self, id: &CellId) -> Result<&[f64]> {
        self.codebook
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownLeaf(id.clone()))
    }

    /// `P̂(x)`: decode ∘ encode.
    pub fn project(&self, point: &[f64]) -> Result<&[f64]> {
        let leaf = self.encode(point)?;
        Ok(&self.codebook[&leaf])
    }
}

/// Builds the quantizer for threshold `eta`: statistics to depth `j_n + 1`,
/// cells of depth `<= j_n` eligible for marking, leaves at depth
/// `<= j_n + 1`.
pub fn fit(data: &Dataset, eta: f64, schedule: &RateSchedule) -> Result<Quantizer> {
    let stats = fit_stats(data, schedule)?;
    quantizer_from_stats(&stats, eta, schedule)
}

fn fit_stats(data: &Dataset, schedule: &RateSchedule) -> Result<StatsTable> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if schedule.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: schedule.dim(),
        });
    }
    let tree = TreeConfig::new(data.dim())?;
    let depth_cap = schedule.depth(data.len());
    if depth_cap + 1 > tree.max_depth {
        return Err(Error::DepthExceeded {
            depth: depth_cap + 1,
            max_depth: tree.max_depth,
        });
    }
    build_stats(data, depth_cap + 1)
}

/// Threshold a table built to depth `j + 1` at depth cap `j`.
pub fn quantizer_from_stats(
    stats: &StatsTable,
    eta: f64,
    schedule: &RateSchedule,
) -> Result<Quantizer> {
    let depth_cap = stats
        .depth_cap()
        .checked_sub(1)
        .ok_or(Error::GainUndefined {
            cell: CellId::root(stats.dim()),
            depth_cap: 0,
        })?;
    let tree = TreeConfig::with_max_depth(stats.dim(), stats.depth_cap().max(1))?;
    let subtree = threshold_subtree(stats, eta, depth_cap)?;
    let leaves = outer_leaves(&tree, &subtree)?;
    Quantizer::from_partition(leaves, stats, eta, depth_cap, *schedule)
}

/// Mean squared reconstruction error over `data`.
pub fn empirical_distortion(q: &Quantizer, data: &Dataset) -> Result<f64> {
    Ok(distortion_with_stderr(q, data)?.0)
}

/// Mean squared reconstruction error and the standard error of that mean.
pub fn distortion_with_stderr(q: &Quantizer, data: &Dataset) -> Result<(f64, f64)> {
    if data.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: data.dim(),
        });
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let errors = data
        .iter()
        .enumerate()
        .map(|(i, x)| {
            q.project(x)
                .map(|c| squared_distance(x, c))
                .map_err(|e| match e {
                    Error::OutOfDomain { axis, value, .. } => Error::OutOfDomain {
                        index: i,
                        axis,
                        value,
                    },
                    other => other,
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = if errors.len() > 1 {
        errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, (var / n).sqrt()))
}

/// One threshold of a sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub eta: f64,
    pub quantizer: Quantizer,
    pub leaf_count: usize,
    pub train_distortion: f64,
}

/// Fits one quantizer per threshold, sharing a single statistics pass.
pub fn sweep(data: &Dataset, etas: &[f64], schedule: &RateSchedule) -> Result<Vec<SweepRow>> {
    for &eta in etas {
        check_eta(eta)?;
    }
    let stats = fit_stats(data, schedule)?;
    etas.iter()
        .map(|&eta| {
            let quantizer = quantizer_from_stats(&stats, eta, schedule)?;
            let train_distortion = empirical_distortion(&quantizer, data)?;
            Ok(SweepRow {
                eta,
                leaf_count: quantizer.leaf_count(),
                quantizer,
                train_distortion,
            })
        })
        .collect()
}

/// Literal set-builder form of `T̂_η`, enumerating every cell down to
/// `depth_cap`. Exponential; for cross-checking on small instances.
pub fn threshold_subtree_by_enumeration(
    stats: &StatsTable,
    eta: f64,
    depth_cap: u32,
) -> Result<Subtree> {
    check_eta(eta)?;
    let dim = stats.dim();
    let mut all = vec![CellId::root(dim)];
    let mut frontier = all.clone();
    for _ in 0..depth_cap {
        frontier = frontier
            .iter()
            .flat_map(crate::partition::children_unchecked)
            .collect();
        all.extend(frontier.iter().cloned());
    }
    let mut marked = Vec::new();
    for cell in &all {
        if stats.gain(cell)? >= eta {
            marked.push(cell.clone());
        }
    }
    if marked.is_empty() {
        return Ok(Subtree::root_only(dim));
    }
    let cells: BTreeSet<CellId> = all
        .into_iter()
        .filter(|i| marked.iter().any(|j| i.contains_cell(j)))
        .collect();
    Subtree::new(dim, cells)
}
