use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use soel_core::data::write_features;
use soel_core::eval::{evaluate, Verdict};
use soel_core::querying::{cover_radius_study, write_cover_study_csv};
use soel_core::{
    check_ranking_generalization, estimate_alpha, residual_alpha, run_experiment, train as fit,
    AlphaSource, ContaminationSpec, DatasetSource, ExperimentConfig, Method, Metric, OracleHandle,
    Protocol, QueryPlan, SplitResult, Strategy, ToyGeometry, TrainConfig,
};
use soel_service::{AppState, SessionStore};

use crate::Common;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] soel_core::Error),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_user_error() => 1,
            CliError::Core(soel_core::Error::Io { .. }) => 1,
            CliError::Input(_) => 1,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes to `out`, or to stdout when unset.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Runtime(format!("stdout: {e}"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(soel_core::Error::from)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Where the data comes from and how the training split is contaminated.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV with a header row; the built-in 2-D toy data when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// `tabular` (label 1 = anomaly) or `one-vs-rest`.
    #[arg(long, default_value = "tabular")]
    pub protocol: String,
    /// Normal class for `one-vs-rest`.
    #[arg(long, allow_hyphen_values = true)]
    pub normal_class: Option<i64>,
    /// Training contamination ratio.
    #[arg(long, default_value_t = 0.1)]
    pub ratio: f64,
    /// Toy data: `blob-ring` or `two-blobs`.
    #[arg(long, default_value = "blob-ring")]
    pub geometry: String,
    #[arg(long, default_value_t = 90)]
    pub toy_normal: usize,
    #[arg(long, default_value_t = 10)]
    pub toy_anomaly: usize,
}

impl DataArgs {
    fn source(&self) -> Result<DatasetSource> {
        match &self.data {
            Some(path) => {
                let protocol = match self.protocol.as_str() {
                    "tabular" => Protocol::Tabular,
                    "one-vs-rest" | "one_vs_rest" => Protocol::OneVsRest,
                    other => return Err(CliError::Input(format!("unknown protocol '{other}'"))),
                };
                Ok(DatasetSource::Csv {
                    path: path.clone(),
                    label_column: self.label_column.clone(),
                    protocol,
                })
            }
            None => {
                let geometry = match self.geometry.as_str() {
                    "blob-ring" | "blob_ring" => ToyGeometry::BlobRing,
                    "two-blobs" | "two_blobs" => ToyGeometry::TwoBlobs,
                    other => return Err(CliError::Input(format!("unknown geometry '{other}'"))),
                };
                Ok(DatasetSource::Toy {
                    n_normal: self.toy_normal,
                    n_anomaly: self.toy_anomaly,
                    geometry,
                })
            }
        }
    }

    fn split(&self, seed: u64) -> Result<SplitResult> {
        if !(0.0..0.5).contains(&self.ratio) {
            return Err(CliError::Input(format!(
                "--ratio {} outside [0, 0.5)",
                self.ratio
            )));
        }
        let source = self.source()?;
        let loaded = source.load()?;
        let spec = ContaminationSpec {
            normal_class: self.normal_class,
            ..ContaminationSpec::new(self.ratio, seed)
        };
        Ok(source.split(loaded.as_ref(), &spec)?)
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
}

/// Writes `train.csv`, `train_labels.csv`, `test.csv` and `split.json`
/// into the `--out` directory.
pub fn split(args: SplitArgs) -> Result<()> {
    let dir = args
        .common
        .out
        .ok_or_else(|| CliError::Input("split needs --out DIR".into()))?;
    let seed = args.common.seed.unwrap_or(0);
    let split = args.data.split(seed)?;
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    write_features(&split.train, dir.join("train.csv"))?;
    write_features(&split.test, dir.join("test.csv"))?;
    let mut labels = String::from("label\n");
    for y in OracleHandle::from_split(&split).ground_truth() {
        labels.push_str(&format!("{y}\n"));
    }
    emit(Some(&dir.join("train_labels.csv")), labels.as_bytes())?;
    let summary = json!({
        "seed": seed,
        "train_rows": split.train.len(),
        "test_rows": split.test.len(),
        "realized_train_ratio": split.realized_train_ratio,
        "train_indices": split.train_indices,
        "test_indices": split.test_indices,
    });
    emit(Some(&dir.join("split.json")), &to_json(&summary)?)
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// SOEL, Rand1, Rand2, Mar, Hybr1, Pos1, Pos2, Hybr2 or Hybr3.
    #[arg(long, default_value = "SOEL")]
    pub method: Method,
    #[arg(long, default_value_t = 20)]
    pub budget: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// `estimated`, `oracle` or a fixed ratio.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Ratio assumed by Mar and Hybr1; the true train ratio when unset.
    #[arg(long)]
    pub assumed_ratio: Option<f64>,
    /// Also write the trained scorer and labels here.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

fn parse_alpha(s: &str) -> Result<AlphaSource> {
    match s {
        "estimated" => Ok(AlphaSource::Estimated),
        "oracle" => Ok(AlphaSource::Oracle),
        v => v.parse().map(AlphaSource::Fixed).map_err(|_| {
            CliError::Input(format!(
                "--alpha: expected estimated, oracle or a number, got '{v}'"
            ))
        }),
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut config: TrainConfig = match &args.common.config {
        Some(path) => read_json(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.common.seed {
        config.seed = seed;
    }
    config.method = args.method.loss();
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(a) = &args.alpha {
        config.alpha_source = parse_alpha(a)?;
    }
    config.validate()?;

    let split = args.data.split(config.seed)?;
    let mut oracle = OracleHandle::from_split(&split);
    let mut plan = QueryPlan::new(args.method.strategy(), args.budget, config.seed);
    if plan.strategy.needs_ratio() {
        plan.assumed_ratio = Some(args.assumed_ratio.unwrap_or(oracle.true_ratio()));
    }
    let outcome = fit(&config, &split, &plan, &mut oracle)?;
    let test_auc = evaluate(Metric::Auc, &outcome.state, &split.test)?;
    let test_f1 = evaluate(Metric::F1, &outcome.state, &split.test)?;
    if let Some(path) = &args.checkpoint {
        emit(Some(path), &to_json(&outcome.checkpoint(&config))?)?;
    }
    let body = json!({
        "method": args.method.name(),
        "plan": plan,
        "config": config,
        "report": outcome.report,
        "test_auc": test_auc,
        "test_f1": test_f1,
    });
    emit(args.common.out.as_deref(), &to_json(&body)?)
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

/// Runs an experiment config. `--out` ending in `.json` gets the full
/// result, anything else the per-run CSV.
pub fn sweep(args: SweepArgs) -> Result<()> {
    let path = args
        .common
        .config
        .ok_or_else(|| CliError::Input("sweep needs --config FILE".into()))?;
    let mut config: ExperimentConfig = read_json(&path)?;
    if let Some(seed) = args.common.seed {
        config.base_seed = seed;
    }
    let started = Instant::now();
    let result = run_experiment(&config, args.jobs.max(1))?;
    if let Some(out) = &args.common.out {
        let bytes = if out.extension().is_some_and(|e| e == "json") {
            to_json(&result)?
        } else {
            let mut buf = Vec::new();
            result.write_csv(&mut buf)?;
            buf
        };
        emit(Some(out), &bytes)?;
    }
    print!("{}", result.summary_table());
    eprintln!("runtime: {:.2}s", started.elapsed().as_secs_f64());
    let failed = result.runs.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", result.runs.len());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CoverArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "Diverse,Rand1,Pos1")]
    pub strategies: Vec<Strategy>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    pub budgets: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
}

/// Cover radius on the raw training features, scored by squared distance
/// to the feature mean.
pub fn cover_study(args: CoverArgs) -> Result<()> {
    let seed = args.common.seed.unwrap_or(0);
    let split = args.data.split(seed)?;
    let oracle = OracleHandle::from_split(&split);
    let points = &split.train.features;
    let d = split.train.feature_dim();
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let scores: Vec<f64> = points
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum())
        .collect();
    let plans: Vec<QueryPlan> = args
        .strategies
        .iter()
        .map(|&s| {
            let mut p = QueryPlan::new(s, 1, seed);
            if s.needs_ratio() {
                p.assumed_ratio = Some(oracle.true_ratio());
            }
            p
        })
        .collect();
    let rows = cover_radius_study(
        &plans,
        points,
        oracle.ground_truth(),
        &scores,
        &args.budgets,
        args.reps,
        seed,
    )?;
    let mut buf = Vec::new();
    write_cover_study_csv(&rows, &mut buf)?;
    emit(args.common.out.as_deref(), &buf)
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    /// CSV with columns `score`, `queried` (0/1) and `label` (blank when
    /// not queried).
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Deserialize)]
struct ScoredRow {
    score: f64,
    queried: u8,
    label: Option<u8>,
}

pub fn estimate(args: EstimateArgs) -> Result<()> {
    let mut reader = csv::Reader::from_path(&args.input)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.input.display())))?;
    let mut scores = Vec::new();
    let mut query_scores = Vec::new();
    let mut query_labels = Vec::new();
    for (i, row) in reader.deserialize::<ScoredRow>().enumerate() {
        let row = row.map_err(|e| CliError::Input(format!("{}: {e}", args.input.display())))?;
        scores.push(row.score);
        if row.queried == 1 {
            let y = row.label.filter(|&y| y <= 1).ok_or_else(|| {
                CliError::Input(format!("row {}: queried row needs a 0/1 label", i + 1))
            })?;
            query_scores.push(row.score);
            query_labels.push(y);
        }
    }
    let est = estimate_alpha(&scores, &query_scores, &query_labels)?;
    let residual = residual_alpha(
        est.alpha_hat,
        scores.len(),
        &query_labels,
        scores.len() - query_scores.len(),
    );
    let body = json!({
        "n": scores.len(),
        "queried": query_scores.len(),
        "estimate": est,
        "residual_alpha": residual,
    });
    emit(args.common.out.as_deref(), &to_json(&body)?)
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// CSV with feature columns plus `label`, `score` and `queried`; a
    /// built-in 1-D instance when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Lipschitz constant of the scores; estimated from the data when unset.
    #[arg(long)]
    pub lipschitz: Option<f64>,
}

struct Instance {
    points: Vec<Vec<f64>>,
    labels: Vec<u8>,
    scores: Vec<f64>,
    query: Vec<usize>,
}

/// Normals at {0, 0.1}, anomalies at {1, 1.1}, score = x, queries at 0.1
/// and 1.
fn builtin_instance() -> Instance {
    let xs = [0.0, 0.1, 1.0, 1.1];
    Instance {
        points: xs.iter().map(|&x| vec![x]).collect(),
        labels: vec![0, 0, 1, 1],
        scores: xs.to_vec(),
        query: vec![1, 2],
    }
}

fn read_instance(path: &Path) -> Result<Instance> {
    let bad = |m: String| CliError::Input(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column '{name}'")))
    };
    let (li, si, qi) = (col("label")?, col("score")?, col("queried")?);
    let mut inst = Instance {
        points: Vec::new(),
        labels: Vec::new(),
        scores: Vec::new(),
        query: Vec::new(),
    };
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: '{}' is not a number", row + 1, &rec[j])))
        };
        let mut features = Vec::new();
        for j in (0..rec.len()).filter(|&j| j != li && j != si && j != qi) {
            features.push(num(j)?);
        }
        let label = num(li)?;
        if label != 0.0 && label != 1.0 {
            return Err(bad(format!("row {}: label must be 0 or 1", row + 1)));
        }
        inst.points.push(features);
        inst.labels.push(label as u8);
        inst.scores.push(num(si)?);
        if num(qi)? != 0.0 {
            inst.query.push(row);
        }
    }
    Ok(inst)
}

pub fn check(args: CheckArgs) -> Result<()> {
    let inst = match &args.input {
        Some(path) => read_instance(path)?,
        None => builtin_instance(),
    };
    let lipschitz = match (&args.input, args.lipschitz) {
        (_, Some(l)) => Some(l),
        (None, None) => Some(1.0),
        (Some(_), None) => None,
    };
    let report = check_ranking_generalization(
        &inst.points,
        &inst.labels,
        &inst.query,
        &inst.scores,
        lipschitz,
    )?;
    let verdict = match report.verdict {
        Verdict::Holds => "holds",
        Verdict::Violated => "violated",
        Verdict::NotApplicable => "not_applicable",
    };
    println!(
        "margin_ok={} ranking_ok={} delta={} lipschitz={} min_labeled_gap={} verdict={verdict}",
        report.margin_ok, report.ranking_ok, report.delta, report.lipschitz, report.min_labeled_gap
    );
    if let Some(out) = &args.common.out {
        emit(Some(out), &to_json(&report)?)?;
    }
    if report.verdict == Verdict::Violated {
        return Err(CliError::Runtime(format!(
            "{} unlabeled pairs misordered despite the margin",
            report.counterexamples.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Directory for session files; sessions live in memory when unset.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct ServedDataset {
    source: DatasetSource,
    #[serde(default)]
    contamination_ratio: f64,
    #[serde(default)]
    normal_class: Option<i64>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
struct ServeConfig {
    datasets: HashMap<String, ServedDataset>,
}

/// Serves the datasets named in `--config` (`{"datasets": {name: {source,
/// contamination_ratio, normal_class, seed}}}`), or a single `toy` set.
pub fn serve(args: ServeArgs) -> Result<()> {
    let config = match &args.common.config {
        Some(path) => read_json(path)?,
        None => ServeConfig {
            datasets: HashMap::from([(
                "toy".to_string(),
                ServedDataset {
                    source: DatasetSource::Toy {
                        n_normal: 90,
                        n_anomaly: 10,
                        geometry: ToyGeometry::BlobRing,
                    },
                    contamination_ratio: 0.1,
                    normal_class: None,
                    seed: args.common.seed.unwrap_or(0),
                },
            )]),
        },
    };
    let mut datasets = HashMap::new();
    for (name, d) in config.datasets {
        let loaded = d.source.load()?;
        let spec = ContaminationSpec {
            normal_class: d.normal_class,
            ..ContaminationSpec::new(d.contamination_ratio, d.seed)
        };
        datasets.insert(name, d.source.split(loaded.as_ref(), &spec)?);
    }
    let store = match &args.store {
        Some(dir) => SessionStore::on_disk(dir)
            .map_err(|e| CliError::Input(format!("cannot open store {}: {e}", dir.display())))?,
        None => SessionStore::in_memory(),
    };
    let state = AppState::new(datasets, store)
        .map_err(|e| CliError::Runtime(format!("cannot load sessions: {e}")))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async move {
        state.resume();
        eprintln!("listening on {}", args.addr);
        soel_service::serve(args.addr, state)
            .await
            .map_err(|e| CliError::Runtime(format!("server: {e}")))
    })
}
