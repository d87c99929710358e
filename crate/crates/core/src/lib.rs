//! Reconstruction trees: multi-scale vector quantization by thresholded
//! refinement of a dyadic partition tree.
//!
//! A dataset in `[0,1)^D` is summarized per dyadic cell (count, center of
//! mass, local distortion). Cells whose refinement gain reaches a threshold
//! `η` are kept together with their ancestors; the outer leaves of that
//! subtree form the quantization cells and their centers of mass the code
//! vectors. Smaller `η` gives finer, nested partitions.
//!
//! Besides the empirical algorithm the crate has an exact oracle for
//! finitely supported distributions, a k-means baseline, synthetic
//! samplers and an experiment harness.

pub mod codebook;
pub mod data;
pub mod data_gen;
pub mod error;
pub mod experiment;
pub mod kmeans;
pub mod oracle;
pub mod partition;
pub mod reconstruction;
pub mod stats;

pub use data::{normalize, AffineMap, Dataset};
pub use error::{Error, Result};
pub use partition::{
    outer_leaves, smallest_subtree, CellId, OuterLeafPartition, Subtree, TreeConfig,
};
pub use reconstruction::{
    empirical_distortion, fit, sweep, threshold_subtree, Quantizer, RateSchedule,
};
pub use stats::{build_stats, CellStats, StatsTable};
