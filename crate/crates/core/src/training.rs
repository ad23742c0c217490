//! Post-query training: the semi-supervised outlier-exposure (SOEL) loss,
//! constrained pseudo-labelling of unqueried rows, baseline losses, and the
//! full warm-up → query → estimate → block-coordinate training loop.
//!
//! Training is split into two stages so a human can answer the queries in
//! between: [`prepare`] warms up the scorer and picks the queries,
//! [`QueryStage::finish`] takes the answers and trains. [`train`] runs both
//! stages against an [`OracleHandle`].

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contamination::{estimate_alpha, residual_alpha, AlphaEstimate};
use crate::data::SplitResult;
use crate::error::{Error, Result};
use crate::eval::OracleHandle;
use crate::querying::{euclidean, select_queries, QueryPlan, QuerySet};
use crate::rng::{seeded, Stream};
use crate::scorer::{init_scorer, Architecture, ScorerState};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainMethod {
    #[default]
    #[serde(rename = "SOEL")]
    Soel,
    /// Supervised term on Q plus one-class term on U.
    Rand1Loss,
    /// Supervised term on Q only.
    Pos1Loss,
    /// Distance-weighted one-class loss that drops labelled anomalies.
    Hybr3Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaSource {
    /// Importance-weighted estimate computed right after querying.
    Estimated,
    /// The true training contamination (benchmark use only).
    Oracle,
    Fixed(f64),
}

fn default_epochs() -> usize {
    30
}
fn default_batch_size() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-3
}
fn default_y_tilde() -> f64 {
    0.5
}
fn default_warmup() -> usize {
    1
}
fn default_hidden() -> Vec<usize> {
    vec![64, 32]
}
fn default_embed() -> usize {
    16
}
fn default_true() -> bool {
    true
}
fn default_alpha_source() -> AlphaSource {
    AlphaSource::Estimated
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub method: TrainMethod,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Value given to inferred anomalies among the unqueried rows.
    #[serde(default = "default_y_tilde")]
    pub y_tilde_value: f64,
    #[serde(default = "default_alpha_source")]
    pub alpha_source: AlphaSource,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    #[serde(default)]
    pub bias: bool,
    /// Stop once the epoch loss improves by less than 1e-6 (relative) for
    /// five epochs in a row.
    #[serde(default = "default_true")]
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::new(TrainMethod::Soel, 0)
    }
}

impl TrainConfig {
    pub fn new(method: TrainMethod, seed: u64) -> Self {
        TrainConfig {
            method,
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_lr(),
            y_tilde_value: default_y_tilde(),
            alpha_source: AlphaSource::Estimated,
            warmup_epochs: default_warmup(),
            seed,
            hidden_dims: default_hidden(),
            embed_dim: default_embed(),
            bias: false,
            early_stop: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        if !(self.y_tilde_value > 0.0 && self.y_tilde_value <= 1.0) {
            return Err(Error::Validation("y_tilde_value must lie in (0, 1]".into()));
        }
        if let AlphaSource::Fixed(a) = self.alpha_source {
            if !(0.0..0.5).contains(&a) {
                return Err(Error::Validation(format!(
                    "fixed alpha {a} outside [0, 0.5)"
                )));
            }
        }
        Ok(())
    }

    fn architecture(&self, input_dim: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            embed_dim: self.embed_dim,
            bias: self.bias,
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPartition {
    /// Queried rows with their oracle label.
    pub queried: Vec<(usize, u8)>,
    /// Unqueried rows with their current pseudo-label (0 or `y_tilde_value`).
    pub unqueried: Vec<(usize, f64)>,
    pub y_tilde_value: f64,
}

impl LabelPartition {
    pub fn new(n: usize, queried: Vec<(usize, u8)>, y_tilde_value: f64) -> Result<Self> {
        let mut seen = vec![false; n];
        for &(i, y) in &queried {
            if i >= n {
                return Err(Error::Lookup(format!("queried index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::Argument(format!("index {i} queried twice")));
            }
            if y > 1 {
                return Err(Error::Validation(format!("label {y} is not binary")));
            }
            seen[i] = true;
        }
        let unqueried = (0..n).filter(|&i| !seen[i]).map(|i| (i, 0.0)).collect();
        Ok(LabelPartition {
            queried,
            unqueried,
            y_tilde_value,
        })
    }

    fn check(&self, n_rows: usize) -> Result<()> {
        let total = self.queried.len() + self.unqueried.len();
        if total != n_rows {
            return Err(Error::Argument(format!(
                "partition covers {total} rows but features hold {n_rows}"
            )));
        }
        Ok(())
    }

    pub fn pseudo_anomaly_count(&self) -> usize {
        self.unqueried.iter().filter(|(_, y)| *y > 0.0).count()
    }
}

/// Number of pseudo-anomalies `⌈α̃·|U|⌉`, tolerant to float round-off.
pub fn pseudo_anomaly_target(alpha_tilde: f64, unqueried: usize) -> usize {
    let x = alpha_tilde * unqueried as f64;
    ((x - 1e-9).ceil().max(0.0) as usize).min(unqueried)
}

/// Marks the `⌈α̃·|U|⌉` rows with the largest `L0 − L1` as anomalous
/// (value `y_tilde_value`), ties going to the lowest index. This minimises
/// `Σ ỹ L1 + (1 − ỹ) L0` under the count constraint.
pub fn assign_pseudo_labels(loss_gaps: &[f64], alpha_tilde: f64, y_tilde_value: f64) -> Vec<f64> {
    let m = pseudo_anomaly_target(alpha_tilde, loss_gaps.len());
    let mut order: Vec<usize> = (0..loss_gaps.len()).collect();
    order.sort_by(|&a, &b| loss_gaps[b].total_cmp(&loss_gaps[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; loss_gaps.len()];
    for &i in &order[..m] {
        out[i] = y_tilde_value;
    }
    out
}

/// Rows, targets and weights of one evaluation of a weighted loss.
#[derive(Debug, Default)]
struct Terms {
    rows: Vec<usize>,
    labels: Vec<f64>,
    weights: Vec<f64>,
}

impl Terms {
    fn push(&mut self, row: usize, label: f64, weight: f64) {
        self.rows.push(row);
        self.labels.push(label);
        self.weights.push(weight);
    }

    fn evaluate(&self, state: &ScorerState, features: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        if self.rows.is_empty() {
            return Err(Error::Argument("loss has no terms".into()));
        }
        let batch: Vec<&[f64]> = self.rows.iter().map(|&i| features[i].as_slice()).collect();
        state.weighted_loss_grad(&batch, &self.labels, &self.weights)
    }
}

/// Per-row weights of the Hybr3 loss; treated as constants when
/// differentiating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hybr3Weights {
    pub queried: Vec<f64>,
    pub unqueried: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `w = 2σ(d)` for queried rows and `ŵ = 2 − 2σ(d)` for unqueried rows with
/// `d = 10·c_d·(‖φ(x) − c₀‖ − ‖φ(x) − c₁‖)`, where `c₀`/`c₁` are the mean
/// embeddings of queried normals/anomalies and `c_d` is one over the range
/// of the distance difference.
pub fn hybr3_weights(
    state: &ScorerState,
    partition: &LabelPartition,
    features: &[Vec<f64>],
) -> Result<Hybr3Weights> {
    partition.check(features.len())?;
    let e = state.embed_dim();
    let mut c0 = vec![0.0; e];
    let mut c1 = vec![0.0; e];
    let (mut n0, mut n1) = (0usize, 0usize);
    for &(i, y) in &partition.queried {
        let phi = state.embed(&features[i])?;
        let (c, n) = if y == 0 {
            (&mut c0, &mut n0)
        } else {
            (&mut c1, &mut n1)
        };
        for (a, b) in c.iter_mut().zip(&phi) {
            *a += b;
        }
        *n += 1;
    }
    if n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateCenters(format!(
            "Hybr3 needs queried normals and anomalies, got {n0} and {n1}"
        )));
    }
    c0.iter_mut().for_each(|v| *v /= n0 as f64);
    c1.iter_mut().for_each(|v| *v /= n1 as f64);

    let diff = |i: usize| -> Result<f64> {
        let phi = state.embed(&features[i])?;
        Ok(euclidean(&phi, &c0) - euclidean(&phi, &c1))
    };
    let rq: Vec<f64> = partition
        .queried
        .iter()
        .map(|&(i, _)| diff(i))
        .collect::<Result<_>>()?;
    let ru: Vec<f64> = partition
        .unqueried
        .iter()
        .map(|&(i, _)| diff(i))
        .collect::<Result<_>>()?;
    let (lo, hi) = rq
        .iter()
        .chain(&ru)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| {
            (a.min(r), b.max(r))
        });
    let scale = if hi > lo { 1.0 / (hi - lo) } else { 0.0 };
    Ok(Hybr3Weights {
        queried: rq.iter().map(|r| 2.0 * sigmoid(10.0 * scale * r)).collect(),
        unqueried: ru
            .iter()
            .map(|r| 2.0 - 2.0 * sigmoid(10.0 * scale * r))
            .collect(),
    })
}

/// Builds the loss terms of `method` on all queried rows and the unqueried
/// rows at positions `u_positions` (indices into `partition.unqueried`).
/// Weights always use the full group sizes `|Q|` and `|U|`.
fn method_terms(
    method: TrainMethod,
    partition: &LabelPartition,
    u_positions: &[usize],
    hybr3: Option<&Hybr3Weights>,
) -> Terms {
    let nq = partition.queried.len() as f64;
    let nu = partition.unqueried.len() as f64;
    let mut t = Terms::default();
    match method {
        TrainMethod::Soel | TrainMethod::Rand1Loss | TrainMethod::Pos1Loss => {
            for &(i, y) in &partition.queried {
                t.push(i, f64::from(y), 1.0 / nq);
            }
            if method != TrainMethod::Pos1Loss {
                for &p in u_positions {
                    let (i, yt) = partition.unqueried[p];
                    let label = if method == TrainMethod::Soel { yt } else { 0.0 };
                    t.push(i, label, 1.0 / nu);
                }
            }
        }
        TrainMethod::Hybr3Loss => {
            let w = hybr3.expect("Hybr3 weights computed by caller");
            let total = nq + nu;
            for (k, &(i, y)) in partition.queried.iter().enumerate() {
                if y == 0 {
                    t.push(i, 0.0, w.queried[k] / total);
                }
            }
            for &p in u_positions {
                t.push(partition.unqueried[p].0, 0.0, w.unqueried[p] / total);
            }
        }
    }
    t
}

fn all_positions(partition: &LabelPartition) -> Vec<usize> {
    (0..partition.unqueried.len()).collect()
}

/// `(1/|Q|) Σ_Q [y L1 + (1−y) L0] + (1/|U|) Σ_U [ỹ L1 + (1−ỹ) L0]` and its
/// gradient.
pub fn soel_loss_and_grad(
    state: &ScorerState,
    partition: &LabelPartition,
    features: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    partition.check(features.len())?;
    if partition.queried.is_empty() || partition.unqueried.is_empty() {
        return Err(Error::Argument(
            "SOEL loss needs both queried and unqueried rows".into(),
        ));
    }
    method_terms(
        TrainMethod::Soel,
        partition,
        &all_positions(partition),
        None,
    )
    .evaluate(state, features)
}

/// Hybr3 loss with precomputed weights.
pub fn hybr3_loss_and_grad(
    state: &ScorerState,
    partition: &LabelPartition,
    features: &[Vec<f64>],
    weights: &Hybr3Weights,
) -> Result<(f64, Vec<f64>)> {
    partition.check(features.len())?;
    method_terms(
        TrainMethod::Hybr3Loss,
        partition,
        &all_positions(partition),
        Some(weights),
    )
    .evaluate(state, features)
}

/// Loss and gradient of a baseline. Hybr3 weights are computed from the
/// current state and then held fixed.
pub fn baseline_loss_and_grad(
    method: TrainMethod,
    state: &ScorerState,
    partition: &LabelPartition,
    features: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    partition.check(features.len())?;
    match method {
        TrainMethod::Soel => soel_loss_and_grad(state, partition, features),
        TrainMethod::Hybr3Loss => {
            let w = hybr3_weights(state, partition, features)?;
            hybr3_loss_and_grad(state, partition, features, &w)
        }
        TrainMethod::Rand1Loss | TrainMethod::Pos1Loss => {
            method_terms(method, partition, &all_positions(partition), None)
                .evaluate(state, features)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: TrainMethod,
    pub warmup_losses: Vec<f64>,
    /// Mean mini-batch loss of each post-query epoch that ran.
    pub epoch_losses: Vec<f64>,
    pub epochs_run: usize,
    pub query_indices: Vec<usize>,
    pub alpha_hat: Option<f64>,
    pub alpha_estimate: Option<AlphaEstimate>,
    pub alpha_tilde: f64,
    /// Pseudo-labels that changed at each re-assignment.
    pub pseudo_label_flips: Vec<usize>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ScorerState,
    pub partition: LabelPartition,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub scorer: ScorerState,
    pub partition: LabelPartition,
    pub config_digest: String,
}

impl TrainOutcome {
    pub fn checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        Checkpoint {
            scorer: self.state.clone(),
            partition: self.partition.clone(),
            config_digest: config.digest(),
        }
    }
}

/// State after warm-up and query selection, waiting for labels.
#[derive(Debug, Clone)]
pub struct QueryStage {
    config: TrainConfig,
    state: ScorerState,
    queries: QuerySet,
    train_scores: Vec<f64>,
    warmup_losses: Vec<f64>,
    started: Instant,
}

impl QueryStage {
    pub fn query_indices(&self) -> &[usize] {
        &self.queries.indices
    }

    pub fn queries(&self) -> &QuerySet {
        &self.queries
    }

    /// Scorer after warm-up.
    pub fn state(&self) -> &ScorerState {
        &self.state
    }

    /// Estimates the contamination and trains with the given answers, one
    /// per query index. `true_ratio` is only consulted when the config asks
    /// for the oracle ratio.
    pub fn finish(
        self,
        split: &SplitResult,
        labels: &[u8],
        true_ratio: Option<f64>,
    ) -> Result<TrainOutcome> {
        let QueryStage {
            config,
            mut state,
            queries,
            train_scores,
            warmup_losses,
            started,
        } = self;
        let features = &split.train.features;
        let n = features.len();
        if labels.len() != queries.indices.len() {
            return Err(Error::Argument(format!(
                "{} labels for {} queries",
                labels.len(),
                queries.indices.len()
            )));
        }
        let mut partition = LabelPartition::new(
            n,
            queries
                .indices
                .iter()
                .copied()
                .zip(labels.iter().copied())
                .collect(),
            config.y_tilde_value,
        )?;
        let nq = partition.queried.len();
        let nu = partition.unqueried.len();
        match config.method {
            TrainMethod::Soel | TrainMethod::Pos1Loss if nq == 0 => {
                return Err(Error::Argument(format!(
                    "{:?} needs at least one queried row",
                    config.method
                )))
            }
            _ => {}
        }

        let mut alpha_estimate = None;
        let alpha_hat = if config.method == TrainMethod::Soel {
            let a = match config.alpha_source {
                AlphaSource::Estimated => {
                    let qs: Vec<f64> = queries.indices.iter().map(|&i| train_scores[i]).collect();
                    let est = estimate_alpha(&train_scores, &qs, labels)?;
                    let a = est.alpha_hat;
                    alpha_estimate = Some(est);
                    a
                }
                AlphaSource::Oracle => true_ratio.ok_or_else(|| {
                    Error::Argument("oracle contamination requested but not available".into())
                })?,
                AlphaSource::Fixed(a) => a,
            };
            Some(a)
        } else {
            None
        };
        let alpha_tilde = alpha_hat.map_or(0.0, |a| residual_alpha(a, n, labels, nu));

        let mut rng = seeded(config.seed, Stream::Train);
        let mut epoch_losses = Vec::with_capacity(config.epochs);
        let mut flips = Vec::new();
        let mut stalled = 0;
        let mut positions: Vec<usize> = (0..nu).collect();
        for epoch in 0..config.epochs {
            if config.method == TrainMethod::Soel && nu > 0 {
                let gaps: Vec<f64> = partition
                    .unqueried
                    .iter()
                    .map(|&(i, _)| state.loss_pair(&features[i]).map(|p| p.l0 - p.l1))
                    .collect::<Result<_>>()?;
                let fresh = assign_pseudo_labels(&gaps, alpha_tilde, config.y_tilde_value);
                let changed = partition
                    .unqueried
                    .iter()
                    .zip(&fresh)
                    .filter(|((_, old), new)| old != *new)
                    .count();
                flips.push(changed);
                for (slot, y) in partition.unqueried.iter_mut().zip(fresh) {
                    slot.1 = y;
                }
            }
            let hybr3 = match config.method {
                TrainMethod::Hybr3Loss => Some(hybr3_weights(&state, &partition, features)?),
                _ => None,
            };

            positions.shuffle(&mut rng);
            let batches: Vec<&[usize]> = if positions.is_empty() {
                vec![&[]]
            } else {
                positions.chunks(config.batch_size).collect()
            };
            let mut total = 0.0;
            for (b, chunk) in batches.iter().enumerate() {
                let terms = method_terms(config.method, &partition, chunk, hybr3.as_ref());
                if terms.rows.is_empty() {
                    continue;
                }
                let (loss, grad) = terms.evaluate(&state, features)?;
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite loss at epoch {epoch}, batch {b} (optimizer step {}); scorer snapshot: {}",
                        state.step_count,
                        state.to_json().unwrap_or_default()
                    )));
                }
                state.adam_step(&grad, config.learning_rate)?;
                total += loss;
            }
            let epoch_loss = total / batches.len() as f64;
            if config.early_stop {
                if let Some(&prev) = epoch_losses.last() {
                    let prev: f64 = prev;
                    if (prev - epoch_loss) / prev.abs().max(f64::MIN_POSITIVE) < 1e-6 {
                        stalled += 1;
                    } else {
                        stalled = 0;
                    }
                }
            }
            epoch_losses.push(epoch_loss);
            if stalled >= 5 {
                break;
            }
        }

        let epochs_run = epoch_losses.len();
        Ok(TrainOutcome {
            state,
            report: TrainReport {
                method: config.method,
                warmup_losses,
                epoch_losses,
                epochs_run,
                query_indices: queries.indices.clone(),
                alpha_hat,
                alpha_estimate,
                alpha_tilde,
                pseudo_label_flips: flips,
                wall_clock_secs: started.elapsed().as_secs_f64(),
            },
            partition,
        })
    }
}

/// Initialises the scorer, trains it for `warmup_epochs` treating every row
/// as normal, then selects the queries on the warmed-up embeddings. A plan
/// budget of 0 skips querying (unsupervised training).
pub fn prepare(config: &TrainConfig, split: &SplitResult, plan: &QueryPlan) -> Result<QueryStage> {
    config.validate()?;
    let started = Instant::now();
    let features = &split.train.features;
    let n = features.len();
    if plan.budget > n {
        return Err(Error::Capacity(format!(
            "budget {} exceeds training size {n}",
            plan.budget
        )));
    }
    let mut state = init_scorer(
        config.architecture(split.train.feature_dim()),
        config.seed,
        features,
    )?;

    let mut rng = seeded(config.seed, Stream::Warmup);
    let mut order: Vec<usize> = (0..n).collect();
    let mut warmup_losses = Vec::with_capacity(config.warmup_epochs);
    for epoch in 0..config.warmup_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let chunks: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        for chunk in &chunks {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| features[i].as_slice()).collect();
            let w = 1.0 / batch.len() as f64;
            let (loss, grad) =
                state.weighted_loss_grad(&batch, &vec![0.0; batch.len()], &vec![w; batch.len()])?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite warm-up loss at epoch {epoch}"
                )));
            }
            state.adam_step(&grad, config.learning_rate)?;
            total += loss;
        }
        warmup_losses.push(total / chunks.len() as f64);
    }

    let train_scores = state.score_all(features)?;
    let queries = if plan.budget == 0 {
        QuerySet {
            indices: Vec::new(),
            selection_probs: Vec::new(),
        }
    } else {
        let embeddings = state.embed_all(features)?;
        select_queries(plan, &embeddings, &train_scores)?
    };
    Ok(QueryStage {
        config: config.clone(),
        state,
        queries,
        train_scores,
        warmup_losses,
        started,
    })
}

/// Full pipeline with the oracle answering every query.
pub fn train(
    config: &TrainConfig,
    split: &SplitResult,
    plan: &QueryPlan,
    oracle: &mut OracleHandle,
) -> Result<TrainOutcome> {
    let stage = prepare(config, split, plan)?;
    let labels: Vec<u8> = stage
        .query_indices()
        .iter()
        .map(|&i| oracle.answer(i))
        .collect::<Result<_>>()?;
    let ratio = oracle.true_ratio();
    stage.finish(split, &labels, Some(ratio))
}
