//! Budgeted query selection and the cover-radius diagnostic.
//!
//! `Diverse` is k-means++ style seeding with a temperature: the first query
//! is uniform, every further query is drawn from `softmax(h / τ)` over the
//! unqueried pool, where `h` is the Euclidean distance to the nearest
//! already-queried embedding. The remaining strategies are the baselines it
//! is compared against. Deterministic strategies break ties by lowest index.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Diverse,
    Rand1,
    Rand2,
    Mar,
    Hybr1,
    Pos1,
    Pos2,
    Hybr2,
    Hybr3,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::Diverse,
        Strategy::Rand1,
        Strategy::Rand2,
        Strategy::Mar,
        Strategy::Hybr1,
        Strategy::Pos1,
        Strategy::Pos2,
        Strategy::Hybr2,
        Strategy::Hybr3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Diverse => "Diverse",
            Strategy::Rand1 => "Rand1",
            Strategy::Rand2 => "Rand2",
            Strategy::Mar => "Mar",
            Strategy::Hybr1 => "Hybr1",
            Strategy::Pos1 => "Pos1",
            Strategy::Pos2 => "Pos2",
            Strategy::Hybr2 => "Hybr2",
            Strategy::Hybr3 => "Hybr3",
        }
    }

    /// Whether the strategy needs the assumed contamination ratio.
    pub fn needs_ratio(self) -> bool {
        matches!(self, Strategy::Mar | Strategy::Hybr1)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Lookup(format!("unknown query strategy '{s}'")))
    }
}

pub const DEFAULT_TAU: f64 = 1e-2;

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_beta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub strategy: Strategy,
    pub budget: usize,
    /// Softmax temperature of `Diverse`.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Weight of the diversity term in the hybrid strategies.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Neighbourhood size of `Hybr1`; `⌈N/K⌉` when unset.
    #[serde(default)]
    pub k_neighbors: Option<usize>,
    /// Contamination ratio assumed by `Mar` and `Hybr1`.
    #[serde(default)]
    pub assumed_ratio: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl QueryPlan {
    pub fn new(strategy: Strategy, budget: usize, seed: u64) -> Self {
        QueryPlan {
            strategy,
            budget,
            tau: DEFAULT_TAU,
            beta: 1.0,
            k_neighbors: None,
            assumed_ratio: None,
            seed,
        }
    }

    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Validation("query budget must be at least 1".into()));
        }
        if self.budget > pool_size {
            return Err(Error::Capacity(format!(
                "budget {} exceeds pool size {pool_size}",
                self.budget
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Validation(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !self.beta.is_finite() {
            return Err(Error::Validation("beta must be finite".into()));
        }
        if self.strategy.needs_ratio() {
            match self.assumed_ratio {
                Some(r) if r > 0.0 && r < 1.0 => {}
                other => {
                    return Err(Error::Validation(format!(
                        "{} needs assumed_ratio in (0, 1), got {other:?}",
                        self.strategy
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySet {
    pub indices: Vec<usize>,
    /// Probability with which each `Diverse` draw was made; empty otherwise.
    pub selection_probs: Vec<f64>,
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Selects `plan.budget` distinct pool indices.
pub fn select_queries(
    plan: &QueryPlan,
    embeddings: &[Vec<f64>],
    scores: &[f64],
) -> Result<QuerySet> {
    let n = embeddings.len();
    if scores.len() != n {
        return Err(Error::Argument(format!(
            "{n} embeddings but {} scores",
            scores.len()
        )));
    }
    plan.validate(n)?;
    let k = plan.budget;
    let indices = match plan.strategy {
        Strategy::Diverse => return Ok(diverse(embeddings, k, plan.tau, plan.seed)),
        Strategy::Rand1 => {
            let mut rng = seeded(plan.seed, Stream::Query);
            rand::seq::index::sample(&mut rng, n, k).into_vec()
        }
        Strategy::Rand2 => {
            let ranked = rank_descending(scores);
            let pool = n.div_ceil(2).max(k);
            let mut rng = seeded(plan.seed, Stream::Query);
            rand::seq::index::sample(&mut rng, pool, k)
                .into_iter()
                .map(|j| ranked[j])
                .collect()
        }
        Strategy::Mar => {
            let margin = quantile(scores, 1.0 - plan.assumed_ratio.unwrap_or_default());
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                let da = (scores[a] - margin).abs();
                let db = (scores[b] - margin).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            });
            order.truncate(k);
            order
        }
        Strategy::Hybr1 => hybr1(plan, embeddings, scores),
        Strategy::Pos1 | Strategy::Pos2 => {
            let mut ranked = rank_descending(scores);
            ranked.truncate(k);
            ranked
        }
        Strategy::Hybr2 | Strategy::Hybr3 => hybr2(embeddings, scores, k, plan.beta),
    };
    Ok(QuerySet {
        indices,
        selection_probs: Vec::new(),
    })
}

fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Linear-interpolation empirical quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn diverse(embeddings: &[Vec<f64>], k: usize, tau: f64, seed: u64) -> QuerySet {
    let n = embeddings.len();
    let mut rng = seeded(seed, Stream::Query);
    let first = rng.random_range(0..n);
    let mut indices = vec![first];
    let mut probs = vec![1.0 / n as f64];
    let mut queried = vec![false; n];
    queried[first] = true;
    let mut nearest: Vec<f64> = embeddings
        .iter()
        .map(|e| euclidean(e, &embeddings[first]))
        .collect();

    let mut weights = vec![0.0; n];
    while indices.len() < k {
        let max_logit = (0..n)
            .filter(|&i| !queried[i])
            .map(|i| nearest[i] / tau)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in 0..n {
            weights[i] = if queried[i] {
                0.0
            } else {
                (nearest[i] / tau - max_logit).exp()
            };
            total += weights[i];
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for i in (0..n).filter(|&i| !queried[i]) {
            acc += weights[i];
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("budget never exceeds pool size");
        probs.push(weights[pick] / total);
        queried[pick] = true;
        indices.push(pick);
        for (i, e) in embeddings.iter().enumerate() {
            let d = euclidean(e, &embeddings[pick]);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    QuerySet {
        indices,
        selection_probs: probs,
    }
}

/// `(v − min) / (max − min)`, or 0.5 when the range is zero.
fn min_max(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.5
    }
}

fn hybr1(plan: &QueryPlan, embeddings: &[Vec<f64>], scores: &[f64]) -> Vec<usize> {
    let n = embeddings.len();
    let k = plan.budget;
    let margin = quantile(scores, 1.0 - plan.assumed_ratio.unwrap_or_default());
    let gap: Vec<f64> = scores.iter().map(|s| (s - margin).abs()).collect();
    let (gmin, gmax) = gap
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &g| {
            (a.min(g), b.max(g))
        });
    let n_neighbors = plan
        .k_neighbors
        .unwrap_or(n.div_ceil(k))
        .clamp(1, n.saturating_sub(1).max(1));

    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclidean(&embeddings[i], &embeddings[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.truncate(n_neighbors);
            others.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let first = (0..n)
        .min_by(|&a, &b| gap[a].total_cmp(&gap[b]).then(a.cmp(&b)))
        .expect("non-empty pool");
    let mut queried = vec![false; n];
    queried[first] = true;
    let mut chosen = vec![first];
    while chosen.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for i in (0..n).filter(|&i| !queried[i]) {
            let covered = neighbors[i].iter().filter(|&&j| queried[j]).count();
            let crit = 0.5
                + covered as f64 / (2.0 * n_neighbors as f64)
                + plan.beta * min_max(gap[i], gmin, gmax);
            if best.is_none_or(|(b, _)| crit < b) {
                best = Some((crit, i));
            }
        }
        let (_, i) = best.expect("unqueried points remain");
        queried[i] = true;
        chosen.push(i);
    }
    chosen
}

fn hybr2(embeddings: &[Vec<f64>], scores: &[f64], k: usize, beta: f64) -> Vec<usize> {
    let n = embeddings.len();
    let (smin, smax) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| {
            (a.min(s), b.max(s))
        });
    let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for a in 0..n {
        for b in a + 1..n {
            let d = euclidean(&embeddings[a], &embeddings[b]);
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
    }
    let first = (0..n)
        .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
        .expect("non-empty pool");
    let mut queried = vec![false; n];
    queried[first] = true;
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = embeddings
        .iter()
        .map(|e| euclidean(e, &embeddings[first]))
        .collect();
    while chosen.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for i in (0..n).filter(|&i| !queried[i]) {
            let crit = min_max(scores[i], smin, smax) + beta * min_max(nearest[i], dmin, dmax);
            if best.is_none_or(|(b, _)| crit > b) {
                best = Some((crit, i));
            }
        }
        let (_, pick) = best.expect("unqueried points remain");
        queried[pick] = true;
        chosen.push(pick);
        for (i, e) in embeddings.iter().enumerate() {
            nearest[i] = nearest[i].min(euclidean(e, &embeddings[pick]));
        }
    }
    chosen
}

/// Largest distance from an unqueried point to the nearest queried point of
/// the same class.
pub fn cover_radius(embeddings: &[Vec<f64>], labels: &[u8], query: &[usize]) -> Result<f64> {
    if labels.len() != embeddings.len() {
        return Err(Error::Argument(
            "labels and embeddings differ in length".into(),
        ));
    }
    if let Some(&bad) = query.iter().find(|&&i| i >= embeddings.len()) {
        return Err(Error::Lookup(format!("query index {bad} out of range")));
    }
    let queried_of = |class: u8| -> Vec<usize> {
        query
            .iter()
            .copied()
            .filter(|&j| labels[j] == class)
            .collect()
    };
    let normals = queried_of(0);
    let anomalies = queried_of(1);
    if normals.is_empty() {
        return Err(Error::CoverageUndefined { missing: "normal" });
    }
    if anomalies.is_empty() {
        return Err(Error::CoverageUndefined {
            missing: "anomalous",
        });
    }
    let mut in_query = vec![false; embeddings.len()];
    for &j in query {
        in_query[j] = true;
    }
    let mut delta: f64 = 0.0;
    for i in (0..embeddings.len()).filter(|&i| !in_query[i]) {
        let same = if labels[i] == 0 { &normals } else { &anomalies };
        let nearest = same
            .iter()
            .map(|&j| euclidean(&embeddings[i], &embeddings[j]))
            .fold(f64::INFINITY, f64::min);
        delta = delta.max(nearest);
    }
    Ok(delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverStudyRow {
    pub strategy: Strategy,
    pub budget: usize,
    pub mean_delta: f64,
    pub std_delta: f64,
    pub n_valid: usize,
}

/// Monte-Carlo cover radius per (strategy, budget). Each plan is a template
/// whose budget and seed are replaced; repetition `r` uses `seed + r`.
/// Draws whose query set misses a class are skipped and not counted in
/// `n_valid`.
pub fn cover_radius_study(
    plans: &[QueryPlan],
    embeddings: &[Vec<f64>],
    labels: &[u8],
    scores: &[f64],
    budgets: &[usize],
    repetitions: usize,
    seed: u64,
) -> Result<Vec<CoverStudyRow>> {
    if let Some(&b) = budgets.iter().find(|&&b| b > embeddings.len()) {
        return Err(Error::Capacity(format!(
            "budget {b} exceeds pool size {}",
            embeddings.len()
        )));
    }
    let mut rows = Vec::new();
    for template in plans {
        for &budget in budgets {
            let deltas: Vec<Option<f64>> = (0..repetitions as u64)
                .into_par_iter()
                .map(|rep| -> Result<Option<f64>> {
                    let plan = QueryPlan {
                        budget,
                        seed: seed.wrapping_add(rep),
                        ..template.clone()
                    };
                    let q = select_queries(&plan, embeddings, scores)?;
                    match cover_radius(embeddings, labels, &q.indices) {
                        Ok(d) => Ok(Some(d)),
                        Err(Error::CoverageUndefined { .. }) => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<_>>()?;
            let valid: Vec<f64> = deltas.into_iter().flatten().collect();
            let (mean, std) = mean_std(&valid);
            rows.push(CoverStudyRow {
                strategy: template.strategy,
                budget,
                mean_delta: mean,
                std_delta: std,
                n_valid: valid.len(),
            });
        }
    }
    Ok(rows)
}

/// Mean and sample standard deviation (0 for fewer than two values, NaN mean
/// for none).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn write_cover_study_csv<W: Write>(rows: &[CoverStudyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
    w.write_record(["strategy", "budget", "mean_delta", "std_delta", "n_valid"])
        .map_err(to_err)?;
    for r in rows {
        w.write_record([
            r.strategy.name().to_string(),
            r.budget.to_string(),
            r.mean_delta.to_string(),
            r.std_delta.to_string(),
            r.n_valid.to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| Error::Validation(format!("csv write failed: {e}")))
}
