//! Experiment harness: distortion against sample size under the
//! data-driven threshold schedule, distortion against threshold, the exact
//! approximation-error trend, and the k-means comparison.
//!
//! Every run is a pure function of its configuration. Per-job seeds are
//! derived from the base seed, the sample size and the trial number, jobs
//! run in parallel and results are sorted before aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::data_gen::{sample, GeneratorSpec};
use crate::error::{Error, Result};
use crate::kmeans::{kmeans_distortion, kmeans_fit, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::oracle::{oracle_stats, DiscreteDistribution};
use crate::reconstruction::{
    distortion_with_stderr, empirical_distortion, fit, sweep, RateSchedule, DEFAULT_BETA,
    DEFAULT_GAMMA,
};

/// SplitMix64 finalizer, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

const TRAIN_STREAM: u64 = 1;
const HOLDOUT_STREAM: u64 = 2;

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Limiting exponent of the distortion rate in `ln n / n`: `2s / (2s + 1)`.
pub fn rate_exponent(s: f64) -> f64 {
    2.0 * s / (2.0 * s + 1.0)
}

/// Limiting exponent of the approximation error in `η`: `4s / (2s + 1)`.
pub fn approximation_exponent(s: f64) -> f64 {
    4.0 * s / (2.0 * s + 1.0)
}

/// `2^8, 2^9, ..., 2^16`.
pub fn default_n_grid() -> Vec<usize> {
    (8..=16).map(|k| 1usize << k).collect()
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_trials() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateExperimentConfig {
    pub generator: GeneratorSpec,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Defaults to `10 * max(n_grid)`.
    #[serde(default)]
    pub holdout_n: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

impl RateExperimentConfig {
    pub fn new(generator: GeneratorSpec) -> Self {
        Self {
            generator,
            n_grid: default_n_grid(),
            gamma: DEFAULT_GAMMA,
            beta: DEFAULT_BETA,
            holdout_n: None,
            trials: default_trials(),
            seed: 0,
        }
    }

    pub fn holdout_size(&self) -> usize {
        self.holdout_n
            .unwrap_or_else(|| 10 * self.n_grid.iter().copied().max().unwrap_or(0))
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return Err(Error::InvalidExperiment(
                "n_grid must be nonempty and positive".into(),
            ));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidExperiment(
                "n_grid must be strictly increasing".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidExperiment("trials must be >= 1".into()));
        }
        if self.holdout_size() == 0 {
            return Err(Error::InvalidExperiment("holdout_n must be >= 1".into()));
        }
        RateSchedule::new(self.gamma, self.beta, self.generator.ambient_dim)?;
        Ok(())
    }
}

/// One sample size, aggregated over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub eta_n: f64,
    pub j_n: u32,
    pub leaf_count: f64,
    pub holdout_distortion_mean: f64,
    pub holdout_distortion_std: f64,
}

/// One `(n, trial)` run before aggregation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTrial {
    pub n: usize,
    pub trial: usize,
    pub leaf_count: usize,
    pub holdout_distortion: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateResult {
    pub rows: Vec<RateRow>,
    pub trials: Vec<RateTrial>,
    /// Slope of `ln(mean holdout distortion)` against `ln(ln n / n)`.
    pub fitted_slope: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// For each `n`: sample, fit at `η_n`, score on an independent holdout;
/// then fit the log-log slope across `n`.
pub fn run_rate_experiment(cfg: &RateExperimentConfig) -> Result<RateResult> {
    cfg.validate()?;
    let schedule = RateSchedule::new(cfg.gamma, cfg.beta, cfg.generator.ambient_dim)?;
    let holdout_n = cfg.holdout_size();
    let jobs: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.trials).map(move |t| (n, t)))
        .collect();
    let mut trials = jobs
        .par_iter()
        .map(|&(n, trial)| {
            let ids = [n as u64, trial as u64];
            let train = sample(
                &cfg.generator
                    .with_seed(derive_seed(cfg.seed, &[TRAIN_STREAM, ids[0], ids[1]])),
                n,
            )?;
            let holdout = sample(
                &cfg.generator
                    .with_seed(derive_seed(cfg.seed, &[HOLDOUT_STREAM, ids[0], ids[1]])),
                holdout_n,
            )?;
            let q = fit(&train, schedule.eta(n).max(f64::MIN_POSITIVE), &schedule)?;
            Ok(RateTrial {
                n,
                trial,
                leaf_count: q.leaf_count(),
                holdout_distortion: empirical_distortion(&q, &holdout)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    trials.sort_by_key(|t| (t.n, t.trial));

    let rows: Vec<RateRow> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let group: Vec<&RateTrial> = trials.iter().filter(|t| t.n == n).collect();
            let distortions: Vec<f64> = group.iter().map(|t| t.holdout_distortion).collect();
            let (mean, std) = mean_std(&distortions);
            RateRow {
                n,
                eta_n: schedule.eta(n),
                j_n: schedule.depth(n),
                leaf_count: group.iter().map(|t| t.leaf_count as f64).sum::<f64>()
                    / group.len() as f64,
                holdout_distortion_mean: mean,
                holdout_distortion_std: std,
            }
        })
        .collect();

    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.n > 1 && r.holdout_distortion_mean > 0.0)
        .map(|r| {
            let n = r.n as f64;
            ((n.ln() / n).ln(), r.holdout_distortion_mean.ln())
        })
        .unzip();
    Ok(RateResult {
        rows,
        trials,
        fitted_slope: least_squares_slope(&xs, &ys),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaSweepRow {
    pub eta: f64,
    pub leaf_count: usize,
    pub train_distortion: f64,
    pub holdout_distortion: f64,
}

/// Distortion against threshold for one training sample.
pub fn run_eta_sweep_experiment(
    generator: &GeneratorSpec,
    n: usize,
    etas: &[f64],
    schedule: &RateSchedule,
    holdout_n: usize,
) -> Result<Vec<EtaSweepRow>> {
    let train = sample(generator, n)?;
    let holdout = sample(
        &generator.with_seed(derive_seed(generator.seed, &[HOLDOUT_STREAM])),
        holdout_n,
    )?;
    sweep(&train, etas, schedule)?
        .into_iter()
        .map(|row| {
            Ok(EtaSweepRow {
                eta: row.eta,
                leaf_count: row.leaf_count,
                train_distortion: row.train_distortion,
                holdout_distortion: empirical_distortion(&row.quantizer, &holdout)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxRow {
    pub eta: f64,
    pub exact_distortion: f64,
    pub leaf_count: usize,
    /// False for rows with zero distortion (every atom isolated), which
    /// have no logarithm.
    pub in_fit: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxTrendResult {
    pub rows: Vec<ApproxRow>,
    /// Slope of `ln E(P_{Λ_η})` against `ln η` over the rows in the fit.
    pub fitted_slope: Option<f64>,
}

/// Exact oracle distortion for each threshold.
pub fn run_approximation_trend(
    dist: &DiscreteDistribution,
    etas: &[f64],
) -> Result<ApproxTrendResult> {
    let cap = dist.default_depth_cap()?;
    let table = oracle_stats(dist, cap + 1)?;
    let rows = etas
        .par_iter()
        .map(|&eta| {
            let fit = table.fit(eta, cap)?;
            Ok(ApproxRow {
                eta,
                exact_distortion: fit.distortion,
                leaf_count: fit.leaves.len(),
                in_fit: fit.distortion > 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.in_fit)
        .map(|r| (r.eta.ln(), r.exact_distortion.ln()))
        .unzip();
    Ok(ApproxTrendResult {
        fitted_slope: least_squares_slope(&xs, &ys),
        rows,
    })
}

/// `per_axis^dim` equal-weight atoms at the centers of the cells of a
/// regular grid.
pub fn grid_distribution(dim: usize, per_axis: usize) -> Result<DiscreteDistribution> {
    let total = per_axis
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::InvalidDistribution("grid too large".into()))?;
    let mut atoms = Vec::with_capacity(total * dim);
    for flat in 0..total {
        let mut rest = flat;
        for _ in 0..dim {
            atoms.push(((rest % per_axis) as f64 + 0.5) / per_axis as f64);
            rest /= per_axis;
        }
    }
    DiscreteDistribution::uniform(dim, atoms)
}

/// Geometric grid of `count` thresholds from `hi` down to `lo`.
pub fn geometric_etas(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![hi];
    }
    let ratio = (lo / hi).ln() / (count - 1) as f64;
    (0..count)
        .map(|i| (hi.ln() + ratio * i as f64).exp())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub eta: f64,
    pub leaf_count: usize,
    pub k: usize,
    pub tree_train_distortion: f64,
    pub tree_holdout_distortion: f64,
    pub kmeans_train_distortion: f64,
    pub kmeans_holdout_distortion: f64,
}

/// Reconstruction tree against k-means with `k` equal to the tree's leaf
/// count (capped at `n`). Report only.
pub fn run_baseline_comparison(
    generator: &GeneratorSpec,
    n: usize,
    etas: &[f64],
    schedule: &RateSchedule,
    holdout_n: usize,
    kmeans_seed: u64,
) -> Result<Vec<BaselineRow>> {
    let train = sample(generator, n)?;
    let holdout = sample(
        &generator.with_seed(derive_seed(generator.seed, &[HOLDOUT_STREAM])),
        holdout_n,
    )?;
    let rows = sweep(&train, etas, schedule)?;
    rows.par_iter()
        .map(|row| {
            let k = row.leaf_count.min(train.len());
            let model = kmeans_fit(&train, k, kmeans_seed, DEFAULT_MAX_ITERS, DEFAULT_TOL)?;
            Ok(BaselineRow {
                eta: row.eta,
                leaf_count: row.leaf_count,
                k,
                tree_train_distortion: row.train_distortion,
                tree_holdout_distortion: empirical_distortion(&row.quantizer, &holdout)?,
                kmeans_train_distortion: model.final_objective,
                kmeans_holdout_distortion: kmeans_distortion(&model, &holdout)?,
            })
        })
        .collect()
}

/// Holdout distortion with its standard error.
pub fn holdout_estimate(q: &crate::Quantizer, holdout: &Dataset) -> Result<(f64, f64)> {
    distortion_with_stderr(q, holdout)
}
