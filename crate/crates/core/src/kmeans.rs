//! Lloyd's algorithm with k-means++ seeding, the reference quantizer that
//! reconstruction trees are compared against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::stats::squared_distance;

pub const DEFAULT_MAX_ITERS: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansModel {
    pub centers: Vec<Vec<f64>>,
    pub k: usize,
    pub iterations_run: usize,
    pub final_objective: f64,
    /// Objective after seeding and after every Lloyd update.
    pub objective_history: Vec<f64>,
}

/// Index of the nearest center and the squared distance to it; ties go to
/// the lowest index.
pub fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(centers: &[Vec<f64>], data: &Dataset) -> Vec<(usize, f64)> {
    let points: Vec<&[f64]> = data.iter().collect();
    points.par_iter().map(|x| nearest(centers, x)).collect()
}

fn objective(assignment: &[(usize, f64)]) -> f64 {
    assignment.iter().map(|(_, d)| d).sum::<f64>() / assignment.len() as f64
}

/// k-means++: first center uniform over the data, each next one drawn with
/// probability proportional to the squared distance to the closest center
/// chosen so far.
fn seed_centers(data: &Dataset, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers = vec![data.point(rng.random_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = data
        .iter()
        .map(|x| squared_distance(x, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            // Rounding can leave `acc` short of `target`; fall back to the
            // last point with positive weight.
            if dist[pick] == 0.0 {
                pick = dist.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = data.point(next).to_vec();
        for (d, x) in dist.iter_mut().zip(data.iter()) {
            *d = d.min(squared_distance(x, &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd iterations from a k-means++ start until the relative improvement
/// drops below `tol` or `max_iters` updates have run.
///
/// A center left without points is moved onto the point farthest from its
/// own center; several empty clusters take successively farther points.
pub fn kmeans_fit(
    data: &Dataset,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansModel> {
    let n = data.len();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let dim = data.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(data, k, &mut rng);
    let mut assignment = assign(&centers, data);
    let mut current = objective(&assignment);
    let mut history = vec![current];
    let mut iterations_run = 0;

    while iterations_run < max_iters && current > 0.0 {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &(j, _)) in data.iter().zip(&assignment) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(x) {
                *s += v;
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        if !empty.is_empty() {
            let mut far: Vec<usize> = (0..n).collect();
            far.sort_by(|&a, &b| assignment[b].1.total_cmp(&assignment[a].1).then(a.cmp(&b)));
            for (j, &i) in empty.iter().zip(&far) {
                centers[*j] = data.point(i).to_vec();
            }
        }
        iterations_run += 1;
        assignment = assign(&centers, data);
        let next = objective(&assignment);
        history.push(next);
        let improvement = (current - next) / current;
        current = next;
        if improvement < tol {
            break;
        }
    }

    Ok(KMeansModel {
        centers,
        k,
        iterations_run,
        final_objective: current,
        objective_history: history,
    })
}

/// Mean squared distance to the nearest center.
pub fn kmeans_distortion(model: &KMeansModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if model.centers.first().map(Vec::len) != Some(data.dim()) {
        return Err(Error::DimensionMismatch {
            expected: model.centers.first().map_or(0, Vec::len),
            got: data.dim(),
        });
    }
    Ok(objective(&assign(&model.centers, data)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::build_stats;
    use crate::CellId;

    fn random(dim: usize, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(dim, (0..n * dim).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn k_equals_n_reaches_zero() {
        let data = random(2, 25, 3);
        let model = kmeans_fit(&data, 25, 1, 300, 1e-10).unwrap();
        assert_eq!(model.final_objective, 0.0);
    }

    #[test]
    fn k_one_is_the_global_mean() {
        let data = random(3, 400, 4);
        let model = kmeans_fit(&data, 1, 9, 300, 1e-10).unwrap();
        let root = build_stats(&data, 0).unwrap();
        let s = root.get(&CellId::root(3)).unwrap();
        for (a, b) in model.centers[0].iter().zip(&s.center) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((model.final_objective - s.local_error).abs() <= 1e-12 * s.local_error);
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..10 {
            let data = random(2, 300, seed);
            let model = kmeans_fit(&data, 7, seed, 300, 1e-10).unwrap();
            for w in model.objective_history.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert_eq!(
                kmeans_distortion(&model, &data).unwrap(),
                model.final_objective
            );
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let data = random(2, 200, 11);
        let a = kmeans_fit(&data, 5, 42, 300, 1e-10).unwrap();
        let b = kmeans_fit(&data, 5, 42, 300, 1e-10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_k() {
        let data = random(1, 5, 0);
        assert!(matches!(
            kmeans_fit(&data, 6, 0, 10, 1e-10),
            Err(Error::InvalidK { k: 6, n: 5 })
        ));
        assert!(kmeans_fit(&data, 0, 0, 10, 1e-10).is_err());
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let centers = vec![vec![0.0], vec![1.0]];
        assert_eq!(nearest(&centers, &[0.5]).0, 0);
    }

    #[test]
    fn a_point_on_a_center_costs_nothing() {
        let model = KMeansModel {
            centers: vec![vec![0.25, 0.5]],
            k: 1,
            iterations_run: 0,
            final_objective: 0.0,
            objective_history: vec![],
        };
        let data = Dataset::new(2, vec![0.25, 0.5]).unwrap();
        assert_eq!(kmeans_distortion(&model, &data).unwrap(), 0.0);
    }

    #[test]
    fn duplicate_points_fill_empty_clusters() {
        // Three distinct locations, k = 3; seeding must still pick them all.
        let data = Dataset::new(1, vec![0.1, 0.1, 0.1, 0.5, 0.9, 0.9]).unwrap();
        let model = kmeans_fit(&data, 3, 0, 100, 1e-10).unwrap();
        assert_eq!(model.final_objective, 0.0);
    }
}
