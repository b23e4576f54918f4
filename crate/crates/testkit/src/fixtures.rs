//! Synthetic corpora with known geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::Rows;

/// Points drawn around well-separated centroids.
#[derive(Debug, Clone)]
pub struct GaussianClusters {
    pub points: Rows,
    pub labels: Vec<usize>,
    pub centroids: Rows,
}

/// `k` isotropic Gaussian clouds in `dim` dimensions with standard
/// deviation `sigma`. Centroids sit on scaled coordinate axes so every
/// pair is exactly `separation * sigma` apart. Points are interleaved
/// (point `i` belongs to cluster `i % k`) unless `sizes` says otherwise.
pub fn gaussian_clusters(
    sizes: &[usize],
    dim: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> GaussianClusters {
    let k = sizes.len();
    assert!(k <= dim, "need one axis per centroid");
    let offset = separation * sigma / std::f64::consts::SQRT_2;
    let centroids: Rows = (0..k)
        .map(|c| {
            let mut v = vec![0.0; dim];
            v[c] = offset;
            v
        })
        .collect();

    let mut order: Vec<usize> = Vec::new();
    let mut remaining = sizes.to_vec();
    while remaining.iter().any(|&r| r > 0) {
        for (c, r) in remaining.iter_mut().enumerate() {
            if *r > 0 {
                order.push(c);
                *r -= 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let points = order
        .iter()
        .map(|&c| centroids[c].iter().map(|x| x + noise.sample(&mut rng)).collect())
        .collect();
    GaussianClusters {
        points,
        labels: order,
        centroids,
    }
}

/// Uniform random matrix in `[lo, hi)`.
pub fn random_matrix(rng: &mut impl Rng, n: usize, m: usize, lo: f64, hi: f64) -> Rows {
    (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

/// Random probability vector with every entry at least `floor / len`.
pub fn random_simplex(rng: &mut impl Rng, len: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| floor + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// Euclidean distance by explicit loop.
pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        let d = x[i] - y[i];
        acc += d * d;
    }
    acc.sqrt()
}
