//! Metrics, the ranking-generalization check, the simulated oracle and the
//! seeded multi-method experiment runner.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Instant, SystemTime};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    load_features, make_one_vs_rest_split, make_tabular_split, synth_toy, ContaminationSpec,
    Dataset, SplitResult, ToyGeometry,
};
use crate::error::{Error, Result};
use crate::querying::{cover_radius, euclidean, mean_std, QueryPlan, Strategy, DEFAULT_TAU};
use crate::rng::{seeded, Stream};
use crate::training::{train, TrainConfig, TrainMethod};

/// Area under the ROC curve with label 1 as the positive (anomalous) class
/// and ties counted as one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank of the tie block
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (n0, n1) = (n0 as f64, n1 as f64);
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n0 * n1))
}

/// F1 when the top `⌈ratio·n⌉` scores are predicted anomalous.
pub fn f1_at_ratio(scores: &[f64], labels: &[u8], ratio: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Argument("scores and labels differ in length".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Argument(format!("ratio {ratio} outside (0, 1)")));
    }
    let k = ((ratio * scores.len() as f64 - 1e-9).ceil().max(0.0) as usize).min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let tp = order[..k].iter().filter(|&&i| labels[i] == 1).count() as f64;
    let fp = k as f64 - tp;
    let positives = labels.iter().filter(|&&y| y == 1).count() as f64;
    let fn_ = positives - tp;
    if tp == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp / (2.0 * tp + fp + fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Margin premise holds and the ranking is correct.
    Holds,
    /// Margin premise holds but an unlabeled pair is misordered.
    Violated,
    /// Margin premise fails; no claim is made.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub delta: f64,
    pub lipschitz: f64,
    /// True when `lipschitz` was measured rather than supplied.
    pub lipschitz_estimated: bool,
    /// Smallest `S(a) − S(n)` over queried anomaly/normal pairs.
    pub min_labeled_gap: f64,
    pub margin_ok: bool,
    pub ranking_ok: bool,
    /// Unlabeled `(anomaly, normal)` pairs with `S(a) < S(n)`.
    pub counterexamples: Vec<(usize, usize)>,
    pub verdict: Verdict,
}

const LIPSCHITZ_PAIRS: usize = 10_000;

/// Largest `|S(x) − S(x′)| / ‖x − x′‖` over all pairs when there are at most
/// 10,000 of them, otherwise over 10,000 sampled pairs plus `extra_pairs`.
/// A lower bound on the true constant.
pub fn estimate_lipschitz(
    points: &[Vec<f64>],
    scores: &[f64],
    extra_pairs: &[(usize, usize)],
    seed: u64,
) -> f64 {
    let ratio = |i: usize, j: usize| {
        let d = euclidean(&points[i], &points[j]);
        if d > 0.0 {
            (scores[i] - scores[j]).abs() / d
        } else {
            0.0
        }
    };
    let n = points.len();
    let mut best: f64 = 0.0;
    if n * n.saturating_sub(1) / 2 <= LIPSCHITZ_PAIRS {
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(ratio(i, j));
            }
        }
    } else {
        let mut rng = seeded(seed, Stream::Lipschitz);
        for _ in 0..LIPSCHITZ_PAIRS {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            best = best.max(ratio(i, j));
        }
    }
    for &(i, j) in extra_pairs {
        best = best.max(ratio(i, j));
    }
    best
}

/// Checks the cover-radius ranking guarantee: if every queried anomaly
/// outscores every queried normal by at least `2δλ`, then every unlabeled
/// anomaly must outscore every unlabeled normal. `scores[i]` is the score
/// of `embeddings[i]`; when `lipschitz` is `None` it is estimated.
pub fn check_ranking_generalization(
    embeddings: &[Vec<f64>],
    labels: &[u8],
    query: &[usize],
    scores: &[f64],
    lipschitz: Option<f64>,
) -> Result<RankingReport> {
    if embeddings.len() != scores.len() || embeddings.len() != labels.len() {
        return Err(Error::Argument(
            "embeddings, labels and scores differ in length".into(),
        ));
    }
    let delta = cover_radius(embeddings, labels, query)?;
    let qa: Vec<usize> = query.iter().copied().filter(|&i| labels[i] == 1).collect();
    let qn: Vec<usize> = query.iter().copied().filter(|&i| labels[i] == 0).collect();
    let labeled_pairs: Vec<(usize, usize)> = qa
        .iter()
        .flat_map(|&a| qn.iter().map(move |&n| (a, n)))
        .collect();
    let (lambda, estimated) = match lipschitz {
        Some(l) => (l, false),
        None => (
            estimate_lipschitz(embeddings, scores, &labeled_pairs, 0),
            true,
        ),
    };
    let min_gap = labeled_pairs
        .iter()
        .map(|&(a, n)| scores[a] - scores[n])
        .fold(f64::INFINITY, f64::min);
    let margin_ok = min_gap >= 2.0 * delta * lambda;

    let queried: BTreeSet<usize> = query.iter().copied().collect();
    let unlabeled = |class: u8| -> Vec<usize> {
        (0..labels.len())
            .filter(|i| labels[*i] == class && !queried.contains(i))
            .collect()
    };
    let normals = unlabeled(0);
    let mut counterexamples = Vec::new();
    for a in unlabeled(1) {
        for &n in &normals {
            if scores[a] < scores[n] {
                counterexamples.push((a, n));
            }
        }
    }
    let ranking_ok = counterexamples.is_empty();
    let verdict = match (margin_ok, ranking_ok) {
        (false, _) => Verdict::NotApplicable,
        (true, true) => Verdict::Holds,
        (true, false) => Verdict::Violated,
    };
    Ok(RankingReport {
        delta,
        lipschitz: lambda,
        lipschitz_estimated: estimated,
        min_labeled_gap: min_gap,
        margin_ok,
        ranking_ok,
        counterexamples,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAccess {
    pub index: usize,
    pub label: u8,
    pub unix_millis: u128,
}

/// Simulated labelling authority backed by the hidden train labels.
#[derive(Debug, Clone)]
pub struct OracleHandle {
    labels: Vec<u8>,
    log: Vec<OracleAccess>,
    asked: BTreeSet<usize>,
}

impl OracleHandle {
    pub fn new(labels: Vec<u8>) -> Self {
        OracleHandle {
            labels,
            log: Vec::new(),
            asked: BTreeSet::new(),
        }
    }

    pub fn from_split(split: &SplitResult) -> Self {
        Self::new(split.hidden_train_labels.as_slice().to_vec())
    }

    pub fn answer(&mut self, index: usize) -> Result<u8> {
        let label = *self.labels.get(index).ok_or_else(|| {
            Error::Lookup(format!(
                "index {index} outside train split of {}",
                self.labels.len()
            ))
        })?;
        let unix_millis = SystemTime::now()
            .duration_since(SystemTime::UNIX_EPOCH)
            .map_or(0, |d| d.as_millis());
        self.log.push(OracleAccess {
            index,
            label,
            unix_millis,
        });
        self.asked.insert(index);
        Ok(label)
    }

    /// Distinct indices answered so far.
    pub fn budget_used(&self) -> usize {
        self.asked.len()
    }

    pub fn log(&self) -> &[OracleAccess] {
        &self.log
    }

    /// Anomaly fraction of the train split; for evaluation only.
    pub fn true_ratio(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().map(|&y| f64::from(y)).sum::<f64>() / self.labels.len() as f64
    }

    /// All hidden labels; for evaluation only.
    pub fn ground_truth(&self) -> &[u8] {
        &self.labels
    }
}

/// A query strategy paired with the loss it is evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SOEL")]
    Soel,
    Rand1,
    Rand2,
    Mar,
    Hybr1,
    Pos1,
    Pos2,
    Hybr2,
    Hybr3,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Soel,
        Method::Rand1,
        Method::Rand2,
        Method::Mar,
        Method::Hybr1,
        Method::Pos1,
        Method::Pos2,
        Method::Hybr2,
        Method::Hybr3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Soel => "SOEL",
            Method::Rand1 => "Rand1",
            Method::Rand2 => "Rand2",
            Method::Mar => "Mar",
            Method::Hybr1 => "Hybr1",
            Method::Pos1 => "Pos1",
            Method::Pos2 => "Pos2",
            Method::Hybr2 => "Hybr2",
            Method::Hybr3 => "Hybr3",
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            Method::Soel => Strategy::Diverse,
            Method::Rand1 => Strategy::Rand1,
            Method::Rand2 => Strategy::Rand2,
            Method::Mar => Strategy::Mar,
            Method::Hybr1 => Strategy::Hybr1,
            Method::Pos1 => Strategy::Pos1,
            Method::Pos2 => Strategy::Pos2,
            Method::Hybr2 => Strategy::Hybr2,
            Method::Hybr3 => Strategy::Hybr3,
        }
    }

    pub fn loss(self) -> TrainMethod {
        match self {
            Method::Soel => TrainMethod::Soel,
            Method::Rand1 | Method::Rand2 | Method::Mar | Method::Hybr1 | Method::Pos2 => {
                TrainMethod::Rand1Loss
            }
            Method::Pos1 | Method::Hybr2 => TrainMethod::Pos1Loss,
            Method::Hybr3 => TrainMethod::Hybr3Loss,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auc,
    F1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Tabular,
    OneVsRest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Synthetic 2-D data; train and test are drawn independently with the
    /// given counts, and the contamination ratio is ignored.
    Toy {
        n_normal: usize,
        n_anomaly: usize,
        geometry: ToyGeometry,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
        #[serde(default = "default_protocol")]
        protocol: Protocol,
    },
}

fn default_label_column() -> String {
    "label".into()
}
fn default_protocol() -> Protocol {
    Protocol::Tabular
}
fn default_seeds() -> usize {
    5
}
fn default_metric() -> Metric {
    Metric::Auc
}
fn default_tau() -> f64 {
    DEFAULT_TAU
}
fn default_beta() -> f64 {
    1.0
}

/// Offset between the seeds of the toy train and test draws.
const TOY_TEST_SEED_OFFSET: u64 = 0x5eed_7e57;

impl DatasetSource {
    /// Loads the data once; toy sources are generated per seed instead.
    pub fn load(&self) -> Result<Option<Dataset>> {
        match self {
            DatasetSource::Toy { .. } => Ok(None),
            DatasetSource::Csv {
                path, label_column, ..
            } => load_features(path, Some(label_column)).map(Some),
        }
    }

    pub fn split(
        &self,
        loaded: Option<&Dataset>,
        contamination: &ContaminationSpec,
    ) -> Result<SplitResult> {
        match self {
            DatasetSource::Toy {
                n_normal,
                n_anomaly,
                geometry,
            } => {
                let seed = contamination.seed;
                let train = synth_toy(*n_normal, *n_anomaly, *geometry, seed);
                let test = synth_toy(
                    *n_normal,
                    *n_anomaly,
                    *geometry,
                    seed.wrapping_add(TOY_TEST_SEED_OFFSET),
                );
                SplitResult::from_train_test(train, test)
            }
            DatasetSource::Csv { protocol, .. } => {
                let data =
                    loaded.ok_or_else(|| Error::Argument("CSV dataset not loaded".into()))?;
                match protocol {
                    Protocol::Tabular => make_tabular_split(data, contamination),
                    Protocol::OneVsRest => make_one_vs_rest_split(data, contamination),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub contamination_ratio: f64,
    #[serde(default)]
    pub normal_class: Option<i64>,
    pub methods: Vec<Method>,
    pub budgets: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    /// Run `r` uses seed `base_seed + r` for the split, the scorer and the
    /// queries.
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    /// Training settings; `method` and `seed` are overridden per run.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Ratio assumed by `Mar`/`Hybr1`; the true train ratio when unset.
    #[serde(default)]
    pub assumed_ratio: Option<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::Validation("n_seeds must be at least 1".into()));
        }
        if self.methods.is_empty() || self.budgets.is_empty() {
            return Err(Error::Validation(
                "methods and budgets must be non-empty".into(),
            ));
        }
        self.train.validate()
    }

    fn seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub budget: usize,
    pub seed: u64,
    pub metric: Metric,
    pub value: Option<f64>,
    pub alpha_hat: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub budget: usize,
    pub mean: f64,
    pub std: f64,
    /// One entry per seed; `None` where the run failed.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub cells: Vec<CellSummary>,
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl ExperimentResult {
    pub fn cell(&self, method: Method, budget: usize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.budget == budget)
    }

    /// `method,budget,seed,metric,value`; failed runs have an empty value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
        w.write_record(["method", "budget", "seed", "metric", "value"])
            .map_err(to_err)?;
        for r in &self.runs {
            let metric = match r.metric {
                Metric::Auc => "auc",
                Metric::F1 => "f1",
            };
            w.write_record([
                r.method.name().to_string(),
                r.budget.to_string(),
                r.seed.to_string(),
                metric.to_string(),
                r.value.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .map_err(to_err)?;
        }
        w.flush()
            .map_err(|e| Error::Validation(format!("csv flush failed: {e}")))
    }

    /// Aligned `method budget mean ± std` table.
    pub fn summary_table(&self) -> String {
        let mut s = format!(
            "{:<8} {:>6} {:>10} {:>10} {:>6}\n",
            "method", "budget", "mean", "std", "ok"
        );
        for c in &self.cells {
            let ok = c.values.iter().flatten().count();
            s.push_str(&format!(
                "{:<8} {:>6} {:>10.4} {:>10.4} {:>3}/{:<2}\n",
                c.method.name(),
                c.budget,
                c.mean,
                c.std,
                ok,
                c.values.len()
            ));
        }
        s
    }
}

/// Test-set metric of a trained scorer.
pub fn evaluate(metric: Metric, state: &crate::scorer::ScorerState, test: &Dataset) -> Result<f64> {
    let labels = test
        .labels
        .as_ref()
        .ok_or_else(|| Error::Argument("test set has no labels".into()))?;
    let scores = state.score_all(&test.features)?;
    match metric {
        Metric::Auc => auc(&scores, labels),
        Metric::F1 => {
            let ratio = labels.iter().map(|&y| f64::from(y)).sum::<f64>() / labels.len() as f64;
            f1_at_ratio(&scores, labels, ratio)
        }
    }
}

/// Runs one training run per (method, budget, seed) on `jobs` threads and
/// aggregates the test metric. Individual failures are recorded, not fatal.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult> {
    config.validate()?;
    let started = Instant::now();
    let loaded = config.dataset.load()?;
    let splits: Vec<Result<SplitResult>> = (0..config.n_seeds)
        .map(|r| {
            let spec = ContaminationSpec {
                contamination_ratio: config.contamination_ratio,
                seed: config.seed(r),
                normal_class: config.normal_class,
            };
            config.dataset.split(loaded.as_ref(), &spec)
        })
        .collect();

    let cells: Vec<(Method, usize, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| {
            config
                .budgets
                .iter()
                .flat_map(move |&b| (0..config.n_seeds).map(move |r| (m, b, r)))
        })
        .collect();

    let run_one = |&(method, budget, r): &(Method, usize, usize)| -> RunRecord {
        let seed = config.seed(r);
        let outcome = (|| -> Result<(f64, Option<f64>)> {
            let split = splits[r]
                .as_ref()
                .map_err(|e| Error::Argument(e.to_string()))?;
            let mut oracle = OracleHandle::from_split(split);
            let mut plan = QueryPlan::new(method.strategy(), budget, seed);
            plan.tau = config.tau;
            plan.beta = config.beta;
            if method.strategy().needs_ratio() {
                plan.assumed_ratio = Some(config.assumed_ratio.unwrap_or(oracle.true_ratio()));
            }
            let train_config = TrainConfig {
                method: method.loss(),
                seed,
                ..config.train.clone()
            };
            let out = train(&train_config, split, &plan, &mut oracle)?;
            Ok((
                evaluate(config.metric, &out.state, &split.test)?,
                out.report.alpha_hat,
            ))
        })();
        match outcome {
            Ok((value, alpha_hat)) => RunRecord {
                method,
                budget,
                seed,
                metric: config.metric,
                value: Some(value),
                alpha_hat,
                error: None,
            },
            Err(e) => {
                log::warn!("{method} K={budget} seed={seed} failed: {e}");
                RunRecord {
                    method,
                    budget,
                    seed,
                    metric: config.metric,
                    value: None,
                    alpha_hat: None,
                    error: Some(e.to_string()),
                }
            }
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<RunRecord> = pool.install(|| cells.par_iter().map(run_one).collect());

    let summaries = runs
        .chunks(config.n_seeds)
        .map(|chunk| {
            let values: Vec<Option<f64>> = chunk.iter().map(|r| r.value).collect();
            let ok: Vec<f64> = values.iter().flatten().copied().collect();
            let (mean, std) = mean_std(&ok);
            CellSummary {
                method: chunk[0].method,
                budget: chunk[0].budget,
                mean,
                std,
                values,
            }
        })
        .collect();
    Ok(ExperimentResult {
        config: config.clone(),
        runs,
        cells: summaries,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}
