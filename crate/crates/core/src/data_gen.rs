//! Synthetic samplers: the uniform cube, a bounded-density cube, and
//! low-dimensional manifolds embedded in `R^D`.
//!
//! Manifold samples are drawn uniformly with respect to surface measure,
//! zero-padded to `D` coordinates, rotated by a fixed random orthogonal
//! matrix and mapped by a similarity into a ball of diameter `< 1` centered
//! in the unit cube. The rotation and the similarity depend only on the
//! manifold and `rotation_seed`, never on the drawn points, so independent
//! samples (training and holdout) come from the same distribution.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{AffineMap, Dataset};
use crate::error::{Error, Result};
use crate::partition::MAX_DIM;

/// Keeps manifold images strictly inside the cube.
const BALL_MARGIN: f64 = 1e-9;

pub const DEFAULT_ROTATION_SEED: u64 = 0x5eed_2019;

const SWISS_T_MIN: f64 = 1.5 * PI;
const SWISS_T_MAX: f64 = 4.5 * PI;
const SWISS_HEIGHT: f64 = 21.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    UniformCube,
    /// Density proportional to `p1 + (p2 - p1) * mean(x)` on the cube, so
    /// the density ratio is bounded by `p2 / p1`.
    DensityCube {
        p1: f64,
        p2: f64,
    },
    Circle,
    Sphere,
    SwissRoll,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub ambient_dim: usize,
    pub seed: u64,
    /// Reserved; must be zero.
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_rotation_seed")]
    pub rotation_seed: u64,
}

fn default_rotation_seed() -> u64 {
    DEFAULT_ROTATION_SEED
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, ambient_dim: usize, seed: u64) -> Self {
        Self {
            kind,
            ambient_dim,
            seed,
            noise: 0.0,
            rotation_seed: DEFAULT_ROTATION_SEED,
        }
    }

    /// Same distribution, different sample stream.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            GeneratorKind::UniformCube | GeneratorKind::DensityCube { .. } => self.ambient_dim,
            GeneratorKind::Circle => 1,
            GeneratorKind::Sphere | GeneratorKind::SwissRoll => 2,
        }
    }

    /// The regularity exponent `s = 1/d` that dyadic cells satisfy for this
    /// distribution.
    pub fn regularity(&self) -> f64 {
        1.0 / self.intrinsic_dim() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.ambient_dim;
        if d == 0 || d > MAX_DIM {
            return Err(Error::UnsupportedGenerator(format!(
                "ambient dimension {d} outside 1..={MAX_DIM}"
            )));
        }
        if self.noise != 0.0 {
            return Err(Error::UnsupportedGenerator(
                "noise is reserved and must be 0".into(),
            ));
        }
        let min_dim = match self.kind {
            GeneratorKind::UniformCube => 1,
            GeneratorKind::DensityCube { p1, p2 } => {
                if !(p1 > 0.0 && p1 <= p2 && p2.is_finite()) {
                    return Err(Error::UnsupportedGenerator(format!(
                        "density bounds must satisfy 0 < p1 <= p2 < inf, got ({p1}, {p2})"
                    )));
                }
                1
            }
            GeneratorKind::Circle => 2,
            GeneratorKind::Sphere | GeneratorKind::SwissRoll => 3,
        };
        if d < min_dim {
            return Err(Error::UnsupportedGenerator(format!(
                "{:?} needs ambient dimension >= {min_dim}, got {d}",
                self.kind
            )));
        }
        Ok(())
    }
}

/// How manifold coordinates are placed in the cube: `y = map(R · pad(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    /// Row-major `D x D` orthogonal matrix.
    pub rotation: Vec<f64>,
    pub map: AffineMap,
    /// Number of leading coordinates used by the manifold before padding.
    pub raw_dim: usize,
}

impl Embedding {
    fn new(spec: &GeneratorSpec, raw_dim: usize, center: &[f64], radius: f64) -> Self {
        let d = spec.ambient_dim;
        let rotation = random_rotation(d, spec.rotation_seed);
        let mut padded = center.to_vec();
        padded.resize(d, 0.0);
        let rotated_center = mat_vec(&rotation, &padded, d);
        let scale = (1.0 - BALL_MARGIN) / (2.0 * radius);
        let shift = rotated_center.iter().map(|c| 0.5 - scale * c).collect();
        Self {
            rotation,
            map: AffineMap { scale, shift },
            raw_dim,
        }
    }

    fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn embed(&self, raw: &[f64]) -> Vec<f64> {
        let mut padded = raw.to_vec();
        padded.resize(self.dim(), 0.0);
        self.map
            .apply(&mat_vec(&self.rotation, &padded, self.dim()))
    }

    /// Inverse of [`Embedding::embed`], returning all `D` coordinates (the
    /// padding ones should come back as zero).
    pub fn unembed(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let x = self.map.invert(y);
        (0..d)
            .map(|i| (0..d).map(|k| self.rotation[k * d + i] * x[k]).sum())
            .collect()
    }
}

fn mat_vec(m: &[f64], x: &[f64], d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| (0..d).map(|k| m[i * d + k] * x[k]).sum())
        .collect()
}

/// Orthogonal matrix from Gram-Schmidt on a Gaussian matrix (rows).
fn random_rotation(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        // Two passes keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for r in &rows {
                let dot: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(x, a)| *x -= dot * a);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    rows.concat()
}

/// The embedding used by a manifold generator; `None` for cube kinds.
pub fn embedding(spec: &GeneratorSpec) -> Result<Option<Embedding>> {
    spec.validate()?;
    Ok(match spec.kind {
        GeneratorKind::UniformCube | GeneratorKind::DensityCube { .. } => None,
        GeneratorKind::Circle => Some(Embedding::new(spec, 2, &[0.0, 0.0], 1.0)),
        GeneratorKind::Sphere => Some(Embedding::new(spec, 3, &[0.0, 0.0, 0.0], 1.0)),
        GeneratorKind::SwissRoll => {
            let radius = (SWISS_T_MAX * SWISS_T_MAX + (SWISS_HEIGHT / 2.0).powi(2)).sqrt();
            Some(Embedding::new(
                spec,
                3,
                &[0.0, SWISS_HEIGHT / 2.0, 0.0],
                radius,
            ))
        }
    })
}

fn raw_manifold_point(kind: GeneratorKind, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match kind {
        GeneratorKind::Circle => {
            let theta = 2.0 * PI * rng.random::<f64>();
            vec![theta.cos(), theta.sin()]
        }
        GeneratorKind::Sphere => loop {
            let g: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break g.iter().map(|x| x / norm).collect();
            }
        },
        GeneratorKind::SwissRoll => {
            // The spiral's speed at parameter t is sqrt(1 + t^2); accept t
            // with that weight so that samples are uniform in arclength.
            let top = (1.0 + SWISS_T_MAX * SWISS_T_MAX).sqrt();
            let t = loop {
                let t = SWISS_T_MIN + (SWISS_T_MAX - SWISS_T_MIN) * rng.random::<f64>();
                if rng.random::<f64>() * top < (1.0 + t * t).sqrt() {
                    break t;
                }
            };
            let h = SWISS_HEIGHT * rng.random::<f64>();
            vec![t * t.cos(), h, t * t.sin()]
        }
        _ => unreachable!("not a manifold kind"),
    }
}

/// `n` independent draws, deterministic in `spec.seed`.
pub fn sample(spec: &GeneratorSpec, n: usize) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = spec.ambient_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut points = Vec::with_capacity(n * d);
    match (spec.kind, embedding(spec)?) {
        (GeneratorKind::UniformCube, _) => {
            points.extend((0..n * d).map(|_| rng.random::<f64>()));
            Dataset::new(d, points)
        }
        (GeneratorKind::DensityCube { p1, p2 }, _) => {
            let mut x = vec![0.0; d];
            while points.len() < n * d {
                x.iter_mut().for_each(|v| *v = rng.random::<f64>());
                let mean = x.iter().sum::<f64>() / d as f64;
                if rng.random::<f64>() * p2 < p1 + (p2 - p1) * mean {
                    points.extend_from_slice(&x);
                }
            }
            Dataset::new(d, points)
        }
        (kind, Some(emb)) => {
            for _ in 0..n {
                let y = emb.embed(&raw_manifold_point(kind, &mut rng));
                points.extend(y.into_iter().map(|v| v.clamp(0.0, 1.0 - f64::EPSILON)));
            }
            Dataset::with_map(d, points, emb.map.clone())
        }
        (kind, None) => Err(Error::UnsupportedGenerator(format!("{kind:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_reproducible() {
        let spec = GeneratorSpec::new(GeneratorKind::UniformCube, 1, 17);
        let a = sample(&spec, 4).unwrap();
        let b = sample(&spec, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample(&spec.with_seed(18), 4).unwrap());
    }

    #[test]
    fn circle_samples_lie_on_the_circle() {
        let spec = GeneratorSpec::new(GeneratorKind::Circle, 3, 5);
        let data = sample(&spec, 1000).unwrap();
        let emb = embedding(&spec).unwrap().unwrap();
        for y in data.iter() {
            let x = emb.unembed(y);
            assert!((x[0] * x[0] + x[1] * x[1] - 1.0).abs() < 1e-12);
            assert!(x[2].abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_and_swiss_roll_fit_in_a_unit_ball() {
        for kind in [GeneratorKind::Sphere, GeneratorKind::SwissRoll] {
            let spec = GeneratorSpec::new(kind, 4, 2);
            let data = sample(&spec, 2000).unwrap();
            for y in data.iter() {
                let r2: f64 = y.iter().map(|v| (v - 0.5) * (v - 0.5)).sum();
                assert!(r2 <= 0.25);
            }
        }
        let spec = GeneratorSpec::new(GeneratorKind::Sphere, 3, 1);
        let emb = embedding(&spec).unwrap().unwrap();
        for y in sample(&spec, 500).unwrap().iter() {
            let x = emb.unembed(y);
            let r: f64 = x.iter().map(|v| v * v).sum();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_is_orthogonal() {
        let d = 5;
        let r = random_rotation(d, 3);
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = (0..d).map(|k| r[i * d + k] * r[j * d + k]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn unsupported_combinations_are_rejected() {
        let bad = [
            GeneratorSpec::new(GeneratorKind::Circle, 1, 0),
            GeneratorSpec::new(GeneratorKind::Sphere, 2, 0),
            GeneratorSpec::new(GeneratorKind::SwissRoll, 2, 0),
            GeneratorSpec::new(GeneratorKind::DensityCube { p1: 0.0, p2: 1.0 }, 2, 0),
            GeneratorSpec::new(GeneratorKind::DensityCube { p1: 2.0, p2: 1.0 }, 2, 0),
            GeneratorSpec::new(GeneratorKind::UniformCube, 0, 0),
            GeneratorSpec {
                noise: 0.1,
                ..GeneratorSpec::new(GeneratorKind::UniformCube, 2, 0)
            },
        ];
        for spec in bad {
            assert!(matches!(
                sample(&spec, 10),
                Err(Error::UnsupportedGenerator(_))
            ));
        }
    }

    #[test]
    fn density_cube_favors_the_heavy_corner() {
        let spec = GeneratorSpec::new(GeneratorKind::DensityCube { p1: 1.0, p2: 4.0 }, 1, 8);
        let data = sample(&spec, 20_000).unwrap();
        let mean = data.as_flat().iter().sum::<f64>() / data.len() as f64;
        // Density (1 + 3x) / 2.5 has mean (1/2 + 1) / 2.5 = 0.6.
        assert!((mean - 0.6).abs() < 0.01);
    }

    #[test]
    fn spec_round_trips_through_toml_like_serde() {
        let spec = GeneratorSpec::new(GeneratorKind::DensityCube { p1: 0.5, p2: 2.0 }, 2, 3);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"density_cube\""));
        let back: GeneratorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
