//! Exact population quantities for finitely supported distributions.
//!
//! Everything here is a finite weighted sum computed by direct grouping of
//! atoms per cell, independently of the Morton-ordered reduction used for
//! empirical statistics, so the two can check each other.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::{FxHashMap, FxHashSet};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::partition::{
    lattice_coords, outer_leaves, smallest_subtree, CellId, OuterLeafPartition, Subtree,
    TreeConfig, HARD_MAX_DEPTH, MAX_DIM,
};
use crate::stats::squared_distance;

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Finite weighted point set in `[0,1)^D` with distinct atoms and weights
/// summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    dim: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidDistribution(format!("dimension {dim}")));
        }
        if atoms.len() != weights.len() * dim || weights.is_empty() {
            return Err(Error::InvalidDistribution(format!(
                "{} coordinates for {} weights in dimension {dim}",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "weight {w} is not positive"
            )));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, not 1"
            )));
        }
        for (index, atom) in atoms.chunks_exact(dim).enumerate() {
            if let Some((axis, &value)) = atom
                .iter()
                .enumerate()
                .find(|(_, x)| !(0.0..1.0).contains(*x))
            {
                return Err(Error::OutOfDomain { index, axis, value });
            }
        }
        let mut seen = FxHashSet::default();
        for atom in atoms.chunks_exact(dim) {
            let key: Vec<u64> = atom.iter().map(|x| x.to_bits()).collect();
            if !seen.insert(key) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {atom:?} appears twice"
                )));
            }
        }
        Ok(Self {
            dim,
            atoms,
            weights,
        })
    }

    /// Equal weights on every atom.
    pub fn uniform(dim: usize, atoms: Vec<f64>) -> Result<Self> {
        let m = atoms.len() / dim.max(1);
        Self::new(dim, atoms, vec![1.0 / m as f64; m])
    }

    /// Weights `m_i / Σ m`, the empirical measure of a dataset holding atom
    /// `i` with multiplicity `m_i`.
    pub fn from_multiplicities(dim: usize, atoms: Vec<f64>, counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if counts.contains(&0) || total == 0 {
            return Err(Error::InvalidDistribution(
                "multiplicities must be positive".into(),
            ));
        }
        let weights = counts.iter().map(|&m| m as f64 / total as f64).collect();
        Self::new(dim, atoms, weights)
    }

    /// Dataset repeating atom `i` `counts[i]` times.
    pub fn replicate(&self, counts: &[usize]) -> Result<Dataset> {
        if counts.len() != self.len() {
            return Err(Error::InvalidDistribution(
                "one multiplicity per atom required".into(),
            ));
        }
        let mut points = Vec::new();
        for (atom, &m) in self.atoms.chunks_exact(self.dim).zip(counts) {
            for _ in 0..m {
                points.extend_from_slice(atom);
            }
        }
        Dataset::new(self.dim, points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.atoms
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    /// Smallest depth at which every atom sits in its own cell.
    pub fn isolation_depth(&self) -> Result<u32> {
        for depth in 0..=HARD_MAX_DEPTH {
            let mut cells = FxHashSet::default();
            let distinct = self
                .atoms
                .chunks_exact(self.dim)
                .all(|a| cells.insert(lattice_coords(a, depth).expect("validated atom")));
            if distinct {
                return Ok(depth);
            }
        }
        Err(Error::InvalidDistribution(format!(
            "atoms are not separated by depth {HARD_MAX_DEPTH}"
        )))
    }

    /// Isolation depth plus one: below it every gain vanishes.
    pub fn default_depth_cap(&self) -> Result<u32> {
        let cap = self.isolation_depth()? + 1;
        if cap >= HARD_MAX_DEPTH {
            return Err(Error::DepthExceeded {
                depth: cap + 1,
                max_depth: HARD_MAX_DEPTH,
            });
        }
        Ok(cap)
    }
}

/// Population statistics of one cell with positive mass.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCell {
    /// `ρ(I)`.
    pub mass: f64,
    /// `c_I`, the conditional mean.
    pub center: Vec<f64>,
    /// `E_I = ∫_I ‖x − c_I‖² dρ`.
    pub error: f64,
    /// `ε_I = sqrt(Σ_J ρ_J ‖c_J − c_I‖²)`; `None` at the depth cap.
    pub gain: Option<f64>,
}

/// Exact statistics for every cell of positive mass down to `depth_cap`.
#[derive(Clone, Debug)]
pub struct OracleTable {
    dim: usize,
    depth_cap: u32,
    cells: FxHashMap<CellId, OracleCell>,
}

impl OracleTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth_cap(&self) -> u32 {
        self.depth_cap
    }

    pub fn get(&self, cell: &CellId) -> Option<&OracleCell> {
        self.cells.get(cell)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellId, &OracleCell)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn error(&self, cell: &CellId) -> f64 {
        self.cells.get(cell).map_or(0.0, |c| c.error)
    }

    /// `ε_I`, zero for null cells.
    pub fn gain(&self, cell: &CellId) -> Result<f64> {
        if cell.depth >= self.depth_cap {
            return Err(Error::GainUndefined {
                cell: cell.clone(),
                depth_cap: self.depth_cap,
            });
        }
        Ok(self.cells.get(cell).and_then(|c| c.gain).unwrap_or(0.0))
    }

    fn children<'a>(&'a self, cell: &'a CellId) -> impl Iterator<Item = &'a OracleCell> + 'a {
        crate::partition::children_unchecked(cell)
            .into_iter()
            .filter_map(move |c| self.cells.get(&c))
    }

    /// `E_I − Σ_J E_J`.
    pub fn error_drop(&self, cell: &CellId) -> f64 {
        self.error(cell) - self.children(cell).map(|c| c.error).sum::<f64>()
    }

    /// `ρ_I Σ_J ‖c_J − c_I‖²`, the parent-mass variant of the spread.
    /// It does not satisfy the within-between identity in general.
    pub fn parent_mass_spread(&self, cell: &CellId) -> f64 {
        match self.cells.get(cell) {
            None => 0.0,
            Some(parent) => {
                parent.mass
                    * self
                        .children(cell)
                        .map(|c| squared_distance(&c.center, &parent.center))
                        .sum::<f64>()
            }
        }
    }

    /// `T_η` at the given depth cap.
    pub fn subtree(&self, eta: f64, depth_cap: u32) -> Result<Subtree> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidThreshold(eta));
        }
        if depth_cap >= self.depth_cap {
            return Err(Error::GainUndefined {
                cell: CellId::root(self.dim),
                depth_cap: self.depth_cap,
            });
        }
        let marked: Vec<&CellId> = self
            .cells
            .iter()
            .filter(|(c, s)| c.depth <= depth_cap && s.gain.is_some_and(|g| g >= eta))
            .map(|(c, _)| c)
            .collect();
        if let Some(deepest) = marked.iter().find(|c| c.depth == depth_cap) {
            return Err(Error::CapTooSmall {
                cell: (*deepest).clone(),
                depth_cap,
            });
        }
        Ok(smallest_subtree(self.dim, marked))
    }

    /// `T_η`, its outer leaves `Λ_η`, the code vectors and the exact
    /// distortion `Σ_{I ∈ Λ_η} E_I`.
    pub fn fit(&self, eta: f64, depth_cap: u32) -> Result<OracleFit> {
        let subtree = self.subtree(eta, depth_cap)?;
        let tree = TreeConfig::with_max_depth(self.dim, self.depth_cap)?;
        let leaves = outer_leaves(&tree, &subtree)?;
        let codebook = leaves
            .iter()
            .map(|c| {
                let code = self
                    .cells
                    .get(c)
                    .map_or_else(|| c.center(), |s| s.center.clone());
                (c.clone(), code)
            })
            .collect();
        let distortion = compensated_sum(leaves.iter().map(|c| self.error(c)));
        Ok(OracleFit {
            subtree,
            leaves,
            codebook,
            distortion,
        })
    }
}

/// Population quantizer for one threshold.
#[derive(Clone, Debug)]
pub struct OracleFit {
    pub subtree: Subtree,
    pub leaves: OuterLeafPartition,
    pub codebook: BTreeMap<CellId, Vec<f64>>,
    /// `E(P_{Λ_η})`.
    pub distortion: f64,
}

/// Exact `ρ_I, c_I, E_I, ε_I` for every cell of positive mass with depth
/// `<= depth_cap`.
pub fn oracle_stats(dist: &DiscreteDistribution, depth_cap: u32) -> Result<OracleTable> {
    if depth_cap > HARD_MAX_DEPTH {
        return Err(Error::DepthExceeded {
            depth: depth_cap,
            max_depth: HARD_MAX_DEPTH,
        });
    }
    let dim = dist.dim();
    let mut cells = FxHashMap::default();
    for depth in 0..=depth_cap {
        let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
        for i in 0..dist.len() {
            let key = lattice_coords(dist.atom(i), depth).expect("validated atom");
            groups.entry(key).or_default().push(i);
        }
        for (index, members) in groups {
            let mass = compensated_sum(members.iter().map(|&i| dist.weight(i)));
            let center: Vec<f64> = (0..dim)
                .map(|k| {
                    compensated_sum(members.iter().map(|&i| dist.weight(i) * dist.atom(i)[k]))
                        / mass
                })
                .collect();
            let error = compensated_sum(
                members
                    .iter()
                    .map(|&i| dist.weight(i) * squared_distance(dist.atom(i), &center)),
            );
            cells.insert(
                CellId { depth, index },
                OracleCell {
                    mass,
                    center,
                    error,
                    gain: None,
                },
            );
        }
    }
    let gains: Vec<(CellId, f64)> = cells
        .iter()
        .filter(|(c, _)| c.depth < depth_cap)
        .map(|(c, parent)| {
            let spread = compensated_sum(
                crate::partition::children_unchecked(c)
                    .iter()
                    .filter_map(|j| cells.get(j))
                    .map(|child| child.mass * squared_distance(&child.center, &parent.center)),
            );
            (c.clone(), spread.sqrt())
        })
        .collect();
    for (c, g) in gains {
        cells.get_mut(&c).expect("present").gain = Some(g);
    }
    Ok(OracleTable {
        dim,
        depth_cap,
        cells,
    })
}

/// `T_η`: ancestor closure of the cells of depth `<= depth_cap` with
/// `ε_I >= η`. Fails if a marked cell sits at `depth_cap`, since the
/// untruncated subtree could then extend further.
pub fn oracle_subtree(dist: &DiscreteDistribution, eta: f64, depth_cap: u32) -> Result<Subtree> {
    oracle_stats(dist, depth_cap + 1)?.subtree(eta, depth_cap)
}

/// `E(P_{Λ_η})` at the automatic depth cap.
pub fn approximation_error(dist: &DiscreteDistribution, eta: f64) -> Result<f64> {
    let cap = dist.default_depth_cap()?;
    Ok(oracle_stats(dist, cap + 1)?.fit(eta, cap)?.distortion)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeafCountRow {
    pub eta: f64,
    pub subtree_size: usize,
    pub leaf_count: usize,
}

/// `(η, ♯T_η, ♯Λ_η)` for each threshold.
pub fn leaf_count_bound_monitor(
    dist: &DiscreteDistribution,
    etas: &[f64],
) -> Result<Vec<LeafCountRow>> {
    let cap = dist.default_depth_cap()?;
    let table = oracle_stats(dist, cap + 1)?;
    etas.iter()
        .map(|&eta| {
            let fit = table.fit(eta, cap)?;
            Ok(LeafCountRow {
                eta,
                subtree_size: fit.subtree.len(),
                leaf_count: fit.leaves.len(),
            })
        })
        .collect()
}

/// Every cell of depth `<= depth`, null ones included. For exhaustive
/// checks on small trees.
pub fn enumerate_cells(dim: usize, depth: u32) -> BTreeSet<CellId> {
    let mut all = BTreeSet::from([CellId::root(dim)]);
    let mut frontier = vec![CellId::root(dim)];
    for _ in 0..depth {
        frontier = frontier
            .iter()
            .flat_map(crate::partition::children_unchecked)
            .collect();
        all.extend(frontier.iter().cloned());
    }
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atoms() -> DiscreteDistribution {
        DiscreteDistribution::uniform(1, vec![0.1, 0.9]).unwrap()
    }

    #[test]
    fn two_atom_fixture() {
        let table = oracle_stats(&two_atoms(), 3).unwrap();
        let root = CellId::root(1);
        assert!((table.error(&root) - 0.16).abs() < 1e-15);
        assert!((table.gain(&root).unwrap() - 0.4).abs() < 1e-15);
        let sub = oracle_subtree(&two_atoms(), 0.3, 2).unwrap();
        assert_eq!(sub, Subtree::root_only(1));
        let fit = table.fit(0.3, 2).unwrap();
        assert_eq!(fit.leaves.len(), 2);
        assert_eq!(fit.distortion, 0.0);
    }

    #[test]
    fn single_atom_has_no_error() {
        let dist = DiscreteDistribution::uniform(2, vec![0.3, 0.6]).unwrap();
        let table = oracle_stats(&dist, 6).unwrap();
        assert!(table.iter().all(|(_, c)| c.error == 0.0 && c.mass == 1.0));
    }

    #[test]
    fn large_threshold_keeps_the_root() {
        let dist = DiscreteDistribution::uniform(2, vec![0.1, 0.1, 0.9, 0.2, 0.4, 0.8]).unwrap();
        let cap = dist.default_depth_cap().unwrap();
        for eta in [1.0, 1.5, 10.0] {
            assert_eq!(
                oracle_subtree(&dist, eta, cap).unwrap(),
                Subtree::root_only(2)
            );
            let e = approximation_error(&dist, eta).unwrap();
            let root = oracle_stats(&dist, 1).unwrap().error(&CellId::root(2));
            // Λ_1 refines the root, so E(P) < E_X unless the children's
            // centers coincide.
            assert!(e <= root);
        }
    }

    #[test]
    fn tiny_threshold_isolates_atoms() {
        let dist = DiscreteDistribution::uniform(1, vec![0.1, 0.35, 0.6, 0.61]).unwrap();
        assert_eq!(approximation_error(&dist, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn cap_too_small_is_reported() {
        let dist = DiscreteDistribution::uniform(1, vec![0.6, 0.61]).unwrap();
        // The two atoms share cells down to depth 5, where they split.
        assert!(matches!(
            oracle_subtree(&dist, 1e-6, 5),
            Err(Error::CapTooSmall { .. })
        ));
        let cap = dist.default_depth_cap().unwrap();
        assert!(oracle_subtree(&dist, 1e-6, cap).is_ok());
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(1, vec![0.1, 0.2], vec![0.5, 0.4]).is_err());
        assert!(DiscreteDistribution::new(1, vec![0.1, 0.2], vec![1.0, 0.0]).is_err());
        assert!(DiscreteDistribution::new(1, vec![0.1, 1.2], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDistribution::new(1, vec![0.1, 0.1], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDistribution::from_multiplicities(1, vec![0.1, 0.2], &[3, 1]).is_ok());
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let values = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn leaf_counts_for_large_threshold() {
        let dist = DiscreteDistribution::uniform(2, vec![0.1, 0.1, 0.9, 0.7]).unwrap();
        let rows = leaf_count_bound_monitor(&dist, &[1.0]).unwrap();
        assert_eq!(rows[0].subtree_size, 1);
        assert_eq!(rows[0].leaf_count, 4);
    }
}
