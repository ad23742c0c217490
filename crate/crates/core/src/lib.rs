//! Budgeted active anomaly detection.
//!
//! A one-class scorer is warmed up on contaminated data, a small diverse set
//! of points is sent to an oracle for labelling, the contamination ratio is
//! estimated from those non-i.i.d. labels by importance weighting, and the
//! scorer is fine-tuned with a semi-supervised outlier-exposure loss whose
//! unlabelled part uses inferred pseudo-labels.

pub mod contamination;
pub mod data;
pub mod error;
pub mod eval;
pub mod querying;
mod rng;
pub mod scorer;
pub mod training;

pub use contamination::{estimate_alpha, kde_fit, residual_alpha, AlphaEstimate, ScoreDensity};
pub use data::{
    load_features, make_one_vs_rest_split, make_tabular_split, synth_toy, ContaminationSpec,
    Dataset, SplitResult, ToyGeometry,
};
pub use error::{Error, Result};
pub use eval::{
    auc, check_ranking_generalization, f1_at_ratio, run_experiment, DatasetSource,
    ExperimentConfig, ExperimentResult, Method, Metric, OracleHandle, Protocol, RankingReport,
};
pub use querying::{cover_radius, select_queries, QueryPlan, QuerySet, Strategy};
pub use scorer::{init_scorer, Architecture, LossPair, ScorerState};
pub use training::{
    assign_pseudo_labels, prepare, train, AlphaSource, Checkpoint, LabelPartition, QueryStage,
    TrainConfig, TrainMethod, TrainOutcome, TrainReport,
};
