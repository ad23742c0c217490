//! Contamination-ratio estimation from non-i.i.d. queries.
//!
//! Queried points are over-represented in the tails of the score
//! distribution, so the anomaly fraction among them is reweighted by the
//! density ratio `p_s(s)/q_s(s)` of pool scores to queried scores, each
//! fitted with a one-dimensional Gaussian KDE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Importance-weight denominators are floored here before division.
pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDensity {
    support: Vec<f64>,
    bandwidth: f64,
}

impl ScoreDensity {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn density(&self, s: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.support.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        norm * self
            .support
            .iter()
            .map(|&x| {
                let z = (s - x) / h;
                (-0.5 * z * z).exp()
            })
            .sum::<f64>()
    }
}

/// Gaussian KDE whose bandwidth is the average gap between consecutive
/// distinct scores.
pub fn kde_fit(scores: &[f64]) -> Result<ScoreDensity> {
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Validation(format!("non-finite score {bad}")));
    }
    let mut support = scores.to_vec();
    support.sort_by(f64::total_cmp);
    let mut unique = support.clone();
    unique.dedup();
    if unique.len() < 2 {
        return Err(Error::DegenerateDensity(format!(
            "need at least two distinct scores, got {}",
            unique.len()
        )));
    }
    let gaps: f64 = unique.windows(2).map(|w| w[1] - w[0]).sum();
    Ok(ScoreDensity {
        support,
        bandwidth: gaps / (unique.len() - 1) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    /// Estimate clamped to `[0, 0.5)`.
    pub alpha_hat: f64,
    /// `(1/|Q|) Σ w_i y_i` before clamping.
    pub raw_alpha: f64,
    pub weights: Vec<f64>,
    /// Queries whose `q_s` fell below [`DENSITY_FLOOR`].
    pub clipped_count: usize,
    pub bandwidth_p: f64,
    pub bandwidth_q: Option<f64>,
    /// Set when fewer than two queries made `q_s` unfittable and the plain
    /// label mean was used instead.
    #[serde(default)]
    pub fallback: bool,
}

fn clamp_alpha(raw: f64) -> f64 {
    raw.clamp(0.0, 0.5f64.next_down())
}

/// Importance-weighted anomaly fraction. `p_s` is fitted on all pool scores
/// (queried ones included), `q_s` on the queried scores.
pub fn estimate_alpha(
    train_scores: &[f64],
    query_scores: &[f64],
    query_labels: &[u8],
) -> Result<AlphaEstimate> {
    if query_scores.is_empty() {
        return Err(Error::Argument("no queried scores".into()));
    }
    if query_scores.len() != query_labels.len() {
        return Err(Error::Argument(format!(
            "{} query scores but {} labels",
            query_scores.len(),
            query_labels.len()
        )));
    }
    let p = kde_fit(train_scores)?;
    if query_scores.len() < 2 {
        let raw =
            query_labels.iter().map(|&y| f64::from(y)).sum::<f64>() / query_labels.len() as f64;
        log::warn!("fewer than two queries: contamination falls back to the label mean");
        return Ok(AlphaEstimate {
            alpha_hat: clamp_alpha(raw),
            raw_alpha: raw,
            weights: vec![1.0; query_scores.len()],
            clipped_count: 0,
            bandwidth_p: p.bandwidth,
            bandwidth_q: None,
            fallback: true,
        });
    }
    let q = kde_fit(query_scores)?;
    let mut clipped_count = 0;
    let weights: Vec<f64> = query_scores
        .iter()
        .map(|&s| {
            let qd = q.density(s);
            let qd = if qd < DENSITY_FLOOR {
                clipped_count += 1;
                DENSITY_FLOOR
            } else {
                qd
            };
            p.density(s) / qd
        })
        .collect();
    let raw = weights
        .iter()
        .zip(query_labels)
        .map(|(w, &y)| w * f64::from(y))
        .sum::<f64>()
        / query_scores.len() as f64;
    Ok(AlphaEstimate {
        alpha_hat: clamp_alpha(raw),
        raw_alpha: raw,
        weights,
        clipped_count,
        bandwidth_p: p.bandwidth,
        bandwidth_q: Some(q.bandwidth),
        fallback: false,
    })
}

/// Anomaly fraction left in the unqueried set:
/// `(α N − Σ_Q y) / |U|`, clamped to `[0, 0.5]`.
pub fn residual_alpha(
    alpha_hat: f64,
    n: usize,
    queried_labels: &[u8],
    unqueried_count: usize,
) -> f64 {
    if unqueried_count == 0 {
        return 0.0;
    }
    let found: f64 = queried_labels.iter().map(|&y| f64::from(y)).sum();
    ((alpha_hat * n as f64 - found) / unqueried_count as f64).clamp(0.0, 0.5)
}
