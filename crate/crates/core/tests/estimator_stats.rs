use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use soel_core::Strategy;
use soel_core::{estimate_alpha, select_queries, QueryPlan};

/// With uniformly drawn queries the importance weights are close to one and
/// the estimate tracks the pool's anomaly fraction on average.
#[test]
fn estimate_is_unbiased_for_iid_queries() {
    let (n, k, reps, alpha) = (1000, 40, 1000, 0.1);
    let mut errors = Vec::with_capacity(reps);
    for rep in 0..reps as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(rep);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let mu = if rng.random::<f64>() < alpha {
                    4.0
                } else {
                    0.0
                };
                Normal::new(mu, 1.0).unwrap().sample(&mut rng)
            })
            .collect();
        // a strictly monotone oracle: the top α fraction is anomalous
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let cut = sorted[n - (alpha * n as f64) as usize - 1];
        let labels: Vec<u8> = scores.iter().map(|&s| u8::from(s > cut)).collect();
        let truth = labels.iter().map(|&y| f64::from(y)).sum::<f64>() / n as f64;

        let emb: Vec<Vec<f64>> = scores.iter().map(|&s| vec![s]).collect();
        let q = select_queries(&QueryPlan::new(Strategy::Rand1, k, rep), &emb, &scores).unwrap();
        let qs: Vec<f64> = q.indices.iter().map(|&i| scores[i]).collect();
        let qy: Vec<u8> = q.indices.iter().map(|&i| labels[i]).collect();
        errors.push(estimate_alpha(&scores, &qs, &qy).unwrap().alpha_hat - truth);
    }
    let mean = errors.iter().sum::<f64>() / reps as f64;
    let sd = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    let se = sd / (reps as f64).sqrt();
    assert!(
        mean.abs() <= 2.0 * se,
        "mean error {mean} vs 2 SE {}",
        2.0 * se
    );
}
