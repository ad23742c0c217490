//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `n` points in `d` dimensions around four Gaussian centres.
pub fn clustered(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).expect("positive std");
    let centers: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            centers[i % 4]
                .iter()
                .map(|c| c + noise.sample(&mut rng))
                .collect()
        })
        .collect()
}

/// Squared distance of every point to the mean point.
pub fn spread_scores(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points.first().map_or(0, Vec::len);
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n)
        .collect();
    points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum())
        .collect()
}

/// Binary labels with roughly `ratio` ones, always containing both classes.
pub fn labels(n: usize, ratio: f64, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<u8> = (0..n)
        .map(|_| u8::from(rng.random::<f64>() < ratio))
        .collect();
    y[0] = 0;
    y[n - 1] = 1;
    y
}
