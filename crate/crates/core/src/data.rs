//! Dataset ingestion, contaminated train/test construction and toy data.
//!
//! Training labels produced by the split functions are moved into a
//! [`HiddenLabels`] value that can only be read back through the oracle
//! in [`crate::eval`], so experiment code cannot leak them by accident.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, Stream};

/// A feature matrix with optional binary anomaly labels.
///
/// `classes` carries raw integer class ids when the source had a label
/// column; `labels` is populated when those ids are binary (0 = normal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Option<Vec<u8>>,
    pub classes: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<Vec<f64>>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            features,
            classes: labels
                .as_ref()
                .map(|l| l.iter().map(|&v| i64::from(v)).collect()),
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset from multi-class ids; binary labels are derived when
    /// every id is 0 or 1.
    pub fn with_classes(
        name: impl Into<String>,
        features: Vec<Vec<f64>>,
        classes: Vec<i64>,
    ) -> Result<Self> {
        let labels = classes
            .iter()
            .all(|&c| c == 0 || c == 1)
            .then(|| classes.iter().map(|&c| c as u8).collect());
        let ds = Dataset {
            name: name.into(),
            features,
            labels,
            classes: Some(classes),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Validation(format!(
                "dataset '{}' has no rows",
                self.name
            )));
        }
        let d = self.feature_dim();
        if d == 0 {
            return Err(Error::Validation(format!(
                "dataset '{}' has no feature columns",
                self.name
            )));
        }
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Validation(format!(
                    "row {i} has {} features, expected {d}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "row {i} column {j} holds a non-finite value ({})",
                    row[j]
                )));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.len() {
                return Err(Error::Validation(
                    "label count differs from row count".into(),
                ));
            }
            if let Some(i) = labels.iter().position(|&y| y > 1) {
                return Err(Error::Validation(format!("label at row {i} is not 0 or 1")));
            }
        }
        if let Some(classes) = &self.classes {
            if classes.len() != self.len() {
                return Err(Error::Validation(
                    "class count differs from row count".into(),
                ));
            }
        }
        Ok(())
    }

    /// Rows at the given indices, in order, without labels.
    fn select(&self, name: String, idx: &[usize], labels: Option<Vec<u8>>) -> Dataset {
        Dataset {
            name,
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            classes: labels
                .as_ref()
                .map(|l| l.iter().map(|&v| i64::from(v)).collect()),
            labels,
        }
    }
}

/// Requested contamination of a training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub contamination_ratio: f64,
    pub seed: u64,
    #[serde(default)]
    pub normal_class: Option<i64>,
}

impl ContaminationSpec {
    pub fn new(contamination_ratio: f64, seed: u64) -> Self {
        ContaminationSpec {
            contamination_ratio,
            seed,
            normal_class: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.contamination_ratio) {
            return Err(Error::Validation(format!(
                "contamination ratio {} outside [0, 0.5)",
                self.contamination_ratio
            )));
        }
        Ok(())
    }
}

/// Ground-truth labels of a training split; readable only via the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLabels(Vec<u8>);

impl HiddenLabels {
    pub(crate) fn new(labels: Vec<u8>) -> Self {
        HiddenLabels(labels)
    }

    pub(crate) fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    /// Training rows; `labels` is always `None` here.
    pub train: Dataset,
    pub hidden_train_labels: HiddenLabels,
    pub test: Dataset,
    pub realized_train_ratio: f64,
    /// Source row of each train/test row, when the split came from one dataset.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl SplitResult {
    /// Wraps an independently generated labelled train set and test set.
    pub fn from_train_test(train: Dataset, test: Dataset) -> Result<Self> {
        let labels = train
            .labels
            .clone()
            .ok_or_else(|| Error::Argument("train set needs labels for the oracle".into()))?;
        if test.labels.is_none() {
            return Err(Error::Argument("test set needs labels".into()));
        }
        let realized = ratio_of(&labels);
        let n_train = train.len();
        let n_test = test.len();
        Ok(SplitResult {
            train: Dataset {
                labels: None,
                classes: None,
                ..train
            },
            hidden_train_labels: HiddenLabels::new(labels),
            test,
            realized_train_ratio: realized,
            train_indices: (0..n_train).collect(),
            test_indices: (0..n_test).collect(),
        })
    }
}

fn ratio_of(labels: &[u8]) -> f64 {
    if labels.is_empty() {
        0.0
    } else {
        labels.iter().map(|&y| f64::from(y)).sum::<f64>() / labels.len() as f64
    }
}

/// Number of anomalies `a` to add to `n_normal` normals so that
/// `a / (n_normal + a)` is closest to `ratio`.
pub fn anomaly_count(n_normal: usize, ratio: f64) -> usize {
    if ratio <= 0.0 {
        return 0;
    }
    let exact = ratio * n_normal as f64 / (1.0 - ratio);
    exact.round().max(0.0) as usize
}

/// Loads a CSV with a header row. Every column other than `label_column`
/// is a feature.
pub fn load_features(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let format_err = |line: u64, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| format_err(1, e.to_string()))?
        .clone();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| format_err(1, format!("no column named '{name}'")))?,
        ),
        None => None,
    };

    let mut features = Vec::new();
    let mut classes = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            format_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(headers.len());
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                classes.push(parse_class(cell).ok_or_else(|| {
                    format_err(line, format!("label '{cell}' is not an integer"))
                })?);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                format_err(line, format!("cell '{cell}' in column {j} is not a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "{}: row {} (line {line}) column '{}' is not finite",
                    path.display(),
                    features.len(),
                    &headers[j]
                )));
            }
            row.push(v);
        }
        features.push(row);
    }
    let name = path.file_stem().map_or_else(
        || "dataset".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    match label_idx {
        Some(_) => Dataset::with_classes(name, features, classes),
        None => Dataset::new(name, features, None),
    }
}

fn parse_class(cell: &str) -> Option<i64> {
    if let Ok(v) = cell.parse::<i64>() {
        return Some(v);
    }
    let v: f64 = cell.parse().ok()?;
    (v.fract() == 0.0 && v.is_finite()).then_some(v as i64)
}

/// Writes a dataset as CSV: `f0..f{D-1}` plus a `label` column holding the
/// class ids, or the binary labels when there are no class ids.
pub fn write_features(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let labels: Option<Vec<i64>> = data.classes.clone().or_else(|| {
        data.labels
            .as_ref()
            .map(|l| l.iter().map(|&y| i64::from(y)).collect())
    });
    let mut header: Vec<String> = (0..data.feature_dim()).map(|j| format!("f{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(io_err)?;
    for (i, row) in data.features.iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(c) = &labels {
            rec.push(c[i].to_string());
        }
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Tabular protocol: half of the normals (at random) go to train, anomalies
/// are sub-sampled into train until the requested ratio is reached and the
/// remaining rows form the test set.
pub fn make_tabular_split(data: &Dataset, spec: &ContaminationSpec) -> Result<SplitResult> {
    spec.validate()?;
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::Argument("tabular split needs binary labels".into()))?;
    let mut rng = seeded(spec.seed, Stream::Split);
    let mut normals: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == 0).collect();
    let mut anomalies: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == 1).collect();
    normals.shuffle(&mut rng);
    anomalies.shuffle(&mut rng);

    let n_train_normal = normals.len() / 2;
    let n_anom = anomaly_count(n_train_normal, spec.contamination_ratio);
    if n_anom > anomalies.len() {
        let max_ratio = anomalies.len() as f64 / (n_train_normal + anomalies.len()).max(1) as f64;
        return Err(Error::Capacity(format!(
            "need {n_anom} anomalies for ratio {} but only {} exist; max achievable ratio is {max_ratio:.4}",
            spec.contamination_ratio,
            anomalies.len()
        )));
    }
    let mut train_idx: Vec<usize> = normals[..n_train_normal]
        .iter()
        .chain(&anomalies[..n_anom])
        .copied()
        .collect();
    let mut test_idx: Vec<usize> = normals[n_train_normal..]
        .iter()
        .chain(&anomalies[n_anom..])
        .copied()
        .collect();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let train_labels: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<u8> = test_idx.iter().map(|&i| labels[i]).collect();
    Ok(SplitResult {
        train: data.select(format!("{}-train", data.name), &train_idx, None),
        realized_train_ratio: ratio_of(&train_labels),
        hidden_train_labels: HiddenLabels::new(train_labels),
        test: data.select(format!("{}-test", data.name), &test_idx, Some(test_labels)),
        train_indices: train_idx,
        test_indices: test_idx,
    })
}

/// One-vs-rest protocol: each class is halved at random into a train pool
/// and a test pool. Training data is the normal class's train pool plus
/// enough rows of other classes to reach the requested ratio; the test set
/// is the whole test pool with labels collapsed to normal/anomaly.
pub fn make_one_vs_rest_split(data: &Dataset, spec: &ContaminationSpec) -> Result<SplitResult> {
    spec.validate()?;
    let classes = data
        .classes
        .as_ref()
        .ok_or_else(|| Error::Argument("one-vs-rest split needs class labels".into()))?;
    let normal = spec
        .normal_class
        .ok_or_else(|| Error::Argument("one-vs-rest split needs normal_class".into()))?;
    let mut ids: Vec<i64> = classes.clone();
    ids.sort_unstable();
    ids.dedup();
    if !ids.contains(&normal) {
        return Err(Error::Lookup(format!(
            "class {normal} not present (classes: {ids:?})"
        )));
    }

    let mut rng = seeded(spec.seed, Stream::Split);
    let mut train_pool_normal = Vec::new();
    let mut train_pool_other = Vec::new();
    let mut test_idx = Vec::new();
    for &c in &ids {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| classes[i] == c).collect();
        members.shuffle(&mut rng);
        let half = members.len() / 2;
        let (tr, te) = members.split_at(half);
        if c == normal {
            train_pool_normal.extend_from_slice(tr);
        } else {
            train_pool_other.extend_from_slice(tr);
        }
        test_idx.extend_from_slice(te);
    }
    train_pool_other.sort_unstable();
    train_pool_other.shuffle(&mut rng);

    let n_anom = anomaly_count(train_pool_normal.len(), spec.contamination_ratio);
    if n_anom > train_pool_other.len() {
        let max_ratio = train_pool_other.len() as f64
            / (train_pool_normal.len() + train_pool_other.len()).max(1) as f64;
        return Err(Error::Capacity(format!(
            "need {n_anom} contaminating rows but the pool holds {}; max achievable ratio is {max_ratio:.4}",
            train_pool_other.len()
        )));
    }
    let mut train_idx: Vec<usize> = train_pool_normal
        .iter()
        .chain(&train_pool_other[..n_anom])
        .copied()
        .collect();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let binary = |i: &usize| u8::from(classes[*i] != normal);
    let train_labels: Vec<u8> = train_idx.iter().map(binary).collect();
    let test_labels: Vec<u8> = test_idx.iter().map(binary).collect();
    Ok(SplitResult {
        train: data.select(format!("{}-c{normal}-train", data.name), &train_idx, None),
        realized_train_ratio: ratio_of(&train_labels),
        hidden_train_labels: HiddenLabels::new(train_labels),
        test: data.select(
            format!("{}-c{normal}-test", data.name),
            &test_idx,
            Some(test_labels),
        ),
        train_indices: train_idx,
        test_indices: test_idx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyGeometry {
    /// Anomalies on a ring of radius 3 around the normal blob.
    BlobRing,
    /// Anomalies in a second blob centred at (3, 3).
    TwoBlobs,
}

const TOY_NORMAL_STD: f64 = 0.5;
const TOY_RING_RADIUS: f64 = 3.0;
const TOY_RING_NOISE: f64 = 0.2;

/// 2-D toy data: normals ~ N(0, 0.5²I) first, then anomalies.
pub fn synth_toy(n_normal: usize, n_anomaly: usize, geometry: ToyGeometry, seed: u64) -> Dataset {
    let mut rng = seeded(seed, Stream::Toy);
    let blob = Normal::new(0.0, TOY_NORMAL_STD).expect("valid std");
    let mut features = Vec::with_capacity(n_normal + n_anomaly);
    for _ in 0..n_normal {
        features.push(vec![blob.sample(&mut rng), blob.sample(&mut rng)]);
    }
    match geometry {
        ToyGeometry::BlobRing => {
            let radial = Normal::new(TOY_RING_RADIUS, TOY_RING_NOISE).expect("valid std");
            for _ in 0..n_anomaly {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let r = radial.sample(&mut rng);
                features.push(vec![r * angle.cos(), r * angle.sin()]);
            }
        }
        ToyGeometry::TwoBlobs => {
            for _ in 0..n_anomaly {
                features.push(vec![
                    3.0 + blob.sample(&mut rng),
                    3.0 + blob.sample(&mut rng),
                ]);
            }
        }
    }
    let mut labels = vec![0u8; n_normal];
    labels.resize(n_normal + n_anomaly, 1);
    Dataset {
        name: format!("toy-{geometry:?}").to_lowercase(),
        features,
        classes: Some(labels.iter().map(|&v| i64::from(v)).collect()),
        labels: Some(labels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn labelled(n0: usize, n1: usize) -> Dataset {
        let features = (0..n0 + n1).map(|i| vec![i as f64, -(i as f64)]).collect();
        let mut labels = vec![0u8; n0];
        labels.resize(n0 + n1, 1);
        Dataset::new("t", features, Some(labels)).unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_with_and_without_labels() {
        let f = write_tmp("f0,f1,label\n1,2,0\n3,4,1\n5,6,0\n7,8,0\n");
        let ds = load_features(f.path(), Some("label")).unwrap();
        assert_eq!((ds.len(), ds.feature_dim()), (4, 2));
        assert_eq!(ds.labels.as_deref(), Some(&[0u8, 1, 0, 0][..]));

        let f = write_tmp("f0,f1\n1,2\n3,4\n5,6\n7,8\n");
        let ds = load_features(f.path(), None).unwrap();
        assert!(ds.labels.is_none());
        assert_eq!(ds.feature_dim(), 2);
    }

    #[test]
    fn nan_cell_is_a_validation_error_naming_the_row() {
        let f = write_tmp("f0,f1\n1,2\n3,NaN\n");
        match load_features(f.path(), None) {
            Err(Error::Validation(msg)) => assert!(msg.contains("row 1"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unparsable_cell_reports_line() {
        let f = write_tmp("f0,f1\n1,2\n3,abc\n");
        match load_features(f.path(), None) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn multiclass_labels_keep_classes_only() {
        let f = write_tmp("a,y\n0.5,0\n1.5,2\n2.5,1\n");
        let ds = load_features(f.path(), Some("y")).unwrap();
        assert!(ds.labels.is_none());
        assert_eq!(ds.classes.as_deref(), Some(&[0i64, 2, 1][..]));
    }

    #[test]
    fn tabular_split_counts() {
        // 50 normals -> ratio 0.1 needs 50*0.1/0.9 = 5.56 anomalies, rounded to 6
        let data = labelled(100, 50);
        let split = make_tabular_split(&data, &ContaminationSpec::new(0.10, 7)).unwrap();
        let tr = split.hidden_train_labels.as_slice();
        assert_eq!(tr.iter().filter(|&&y| y == 0).count(), 50);
        assert_eq!(tr.iter().filter(|&&y| y == 1).count(), 6);
        let te = split.test.labels.as_ref().unwrap();
        assert_eq!(te.iter().filter(|&&y| y == 0).count(), 50);
        assert_eq!(te.iter().filter(|&&y| y == 1).count(), 44);
        assert!((split.realized_train_ratio - 0.1).abs() <= 1.0 / split.train.len() as f64);
        assert!(split.train.labels.is_none());
    }

    #[test]
    fn tabular_split_zero_ratio() {
        let split = make_tabular_split(&labelled(20, 5), &ContaminationSpec::new(0.0, 1)).unwrap();
        assert!(split.hidden_train_labels.as_slice().iter().all(|&y| y == 0));
        assert_eq!(split.realized_train_ratio, 0.0);
    }

    #[test]
    fn tabular_split_capacity_error() {
        let err =
            make_tabular_split(&labelled(10, 1), &ContaminationSpec::new(0.4, 1)).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)), "{err}");
        assert!(err.to_string().contains("max achievable ratio"));
    }

    #[test]
    fn invalid_ratio_rejected() {
        let err =
            make_tabular_split(&labelled(10, 5), &ContaminationSpec::new(0.5, 1)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    fn three_class(n_per: usize) -> Dataset {
        let features = (0..3 * n_per).map(|i| vec![i as f64]).collect();
        let classes = (0..3 * n_per).map(|i| (i / n_per) as i64).collect();
        Dataset::with_classes("three", features, classes).unwrap()
    }

    #[test]
    fn one_vs_rest_ratio_and_labels() {
        let data = three_class(100);
        let mut spec = ContaminationSpec::new(0.10, 3);
        spec.normal_class = Some(0);
        let split = make_one_vs_rest_split(&data, &spec).unwrap();
        let n = split.train.len() as f64;
        assert!((split.realized_train_ratio - 0.10).abs() <= 1.0 / n);
        let classes = data.classes.as_ref().unwrap();
        for (k, &i) in split.train_indices.iter().enumerate() {
            assert_eq!(
                split.hidden_train_labels.as_slice()[k],
                u8::from(classes[i] != 0)
            );
        }
        let test_labels = split.test.labels.as_ref().unwrap();
        for (k, &i) in split.test_indices.iter().enumerate() {
            assert_eq!(test_labels[k], u8::from(classes[i] != 0));
        }
    }

    #[test]
    fn one_vs_rest_zero_ratio_is_pure() {
        let data = three_class(20);
        let spec = ContaminationSpec {
            contamination_ratio: 0.0,
            seed: 1,
            normal_class: Some(0),
        };
        let split = make_one_vs_rest_split(&data, &spec).unwrap();
        assert!(split.hidden_train_labels.as_slice().iter().all(|&y| y == 0));
        assert_eq!(split.train.len(), 10);
    }

    #[test]
    fn one_vs_rest_unknown_class() {
        let spec = ContaminationSpec {
            contamination_ratio: 0.1,
            seed: 1,
            normal_class: Some(7),
        };
        let err = make_one_vs_rest_split(&three_class(10), &spec).unwrap_err();
        assert!(matches!(err, Error::Lookup(_)));
    }

    #[test]
    fn toy_counts_and_determinism() {
        let ds = synth_toy(90, 10, ToyGeometry::BlobRing, 5);
        assert_eq!((ds.len(), ds.feature_dim()), (100, 2));
        assert_eq!(
            ds.labels
                .as_ref()
                .unwrap()
                .iter()
                .filter(|&&y| y == 1)
                .count(),
            10
        );
        let again = synth_toy(90, 10, ToyGeometry::BlobRing, 5);
        let bits = |d: &Dataset| -> Vec<u64> {
            d.features.iter().flatten().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&ds), bits(&again));

        let blobs = synth_toy(0, 5, ToyGeometry::TwoBlobs, 1);
        assert!(blobs.labels.unwrap().iter().all(|&y| y == 1));
    }

    #[test]
    fn ring_anomalies_sit_near_radius_three() {
        let ds = synth_toy(0, 200, ToyGeometry::BlobRing, 9);
        for row in &ds.features {
            let r = row[0].hypot(row[1]);
            assert!((r - 3.0).abs() < 1.0, "radius {r}");
        }
    }
}
