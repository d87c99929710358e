use rand::seq::SliceRandom;
use rectree::data_gen::{sample, GeneratorKind, GeneratorSpec};
use rectree::reconstruction::distortion_with_stderr;
use rectree::{build_stats, fit, Dataset, RateSchedule};

#[test]
fn uniform_cell_masses_concentrate() {
    for dim in 1..=3 {
        let n = 20_000;
        let data = sample(&GeneratorSpec::new(GeneratorKind::UniformCube, dim, 11), n).unwrap();
        let depth_cap = 8 / dim as u32;
        let stats = build_stats(&data, depth_cap).unwrap();
        for depth in 1..=depth_cap {
            let p = 2f64.powi(-((depth as usize * dim) as i32));
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            let cells = stats.iter().filter(|(c, _)| c.depth == depth).count();
            assert_eq!(cells, 1 << (depth as usize * dim), "every cell populated");
            for (cell, s) in stats.iter().filter(|(c, _)| c.depth == depth) {
                let z = (s.count as f64 - n as f64 * p) / sd;
                assert!(z.abs() <= 4.0, "{cell}: z = {z}");
            }
        }
    }
}

fn distances(points: &[&[f64]]) -> Vec<f64> {
    let m = points.len();
    let mut d = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..i {
            let v = points[i]
                .iter()
                .zip(points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[i * m + j] = v;
            d[j * m + i] = v;
        }
    }
    d
}

/// Two-sample energy statistic for the split `labels` of a pooled sample.
fn energy(d: &[f64], m: usize, labels: &[bool]) -> f64 {
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    let (mut nxy, mut nxx, mut nyy) = (0.0, 0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            let v = d[i * m + j];
            match (labels[i], labels[j]) {
                (true, false) => {
                    xy += v;
                    nxy += 1.0;
                }
                (true, true) => {
                    xx += v;
                    nxx += 1.0;
                }
                (false, false) => {
                    yy += v;
                    nyy += 1.0;
                }
                _ => {}
            }
        }
    }
    2.0 * xy / nxy - xx / nxx - yy / nyy
}

fn permutation_p_value(a: &Dataset, b: &Dataset, permutations: usize, seed: u64) -> f64 {
    let points: Vec<&[f64]> = a.iter().chain(b.iter()).collect();
    let m = points.len();
    let d = distances(&points);
    let mut labels: Vec<bool> = (0..m).map(|i| i < a.len()).collect();
    let observed = energy(&d, m, &labels);
    let mut rng = seeded_rng(seed);
    let mut exceed = 0;
    for _ in 0..permutations {
        labels.shuffle(&mut rng);
        if energy(&d, m, &labels) >= observed {
            exceed += 1;
        }
    }
    (exceed + 1) as f64 / (permutations + 1) as f64
}

fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

#[test]
fn flat_density_matches_uniform() {
    let n = 500;
    let uniform = sample(&GeneratorSpec::new(GeneratorKind::UniformCube, 2, 1), n).unwrap();
    let flat = GeneratorSpec::new(GeneratorKind::DensityCube { p1: 2.0, p2: 2.0 }, 2, 2);
    let p = permutation_p_value(&uniform, &sample(&flat, n).unwrap(), 199, 3);
    assert!(p > 0.01, "p = {p}");

    // The same test does detect a strongly tilted density.
    let tilted = GeneratorSpec::new(GeneratorKind::DensityCube { p1: 0.1, p2: 4.0 }, 2, 2);
    let p = permutation_p_value(&uniform, &sample(&tilted, n).unwrap(), 199, 3);
    assert!(p <= 0.01, "p = {p}");
}

#[test]
fn independent_holdouts_agree() {
    for (kind, dim) in [
        (GeneratorKind::UniformCube, 2),
        (GeneratorKind::Circle, 3),
        (GeneratorKind::SwissRoll, 3),
    ] {
        let train = sample(&GeneratorSpec::new(kind, dim, 1), 5_000).unwrap();
        let q = fit(&train, 0.01, &RateSchedule::with_defaults(dim).unwrap()).unwrap();
        let h1 = sample(&GeneratorSpec::new(kind, dim, 2), 20_000).unwrap();
        let h2 = sample(&GeneratorSpec::new(kind, dim, 3), 20_000).unwrap();
        let (d1, s1) = distortion_with_stderr(&q, &h1).unwrap();
        let (d2, s2) = distortion_with_stderr(&q, &h2).unwrap();
        assert!(
            (d1 - d2).abs() <= 5.0 * (s1 * s1 + s2 * s2).sqrt(),
            "{kind:?}: {d1} vs {d2}"
        );
    }
}
