//! Uniform interface to the classifier being explained: a built-in k-NN
//! surrogate plus a line-delimited JSON client for external model processes.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{scaled_distance, Dataset, Instance, Metric};

#[derive(Debug, Error)]
pub enum BlackBoxError {
    #[error("training data has no labels")]
    NoLabels,
    #[error("k={k} exceeds training set size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("failed to spawn model process: {0}")]
    ProcessSpawn(std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("model process timed out after {0:?}")]
    Timeout(Duration),
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// One model answer: argmax label (ties to the lowest class index), its
/// probability, and the full probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub label: usize,
    pub confidence: f64,
    pub proba: Vec<f64>,
}

impl PredictionRecord {
    pub fn from_proba(proba: Vec<f64>) -> Self {
        let mut label = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, &p) in proba.iter().enumerate() {
            if p > best {
                best = p;
                label = i;
            }
        }
        PredictionRecord { label, confidence: proba[label], proba }
    }
}

/// The classifier being explained, reachable only through batch probability
/// queries. Implementations must be deterministic.
pub trait BlackBoxModel: Send + Sync {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn predict_proba(&self, batch: &[Instance]) -> Result<Vec<Vec<f64>>, BlackBoxError>;
}

/// Batch-predict and wrap each probability vector in a [`PredictionRecord`].
pub fn predict_records(
    model: &dyn BlackBoxModel,
    batch: &[Instance],
) -> Result<Vec<PredictionRecord>, BlackBoxError> {
    Ok(model
        .predict_proba(batch)?
        .into_iter()
        .map(PredictionRecord::from_proba)
        .collect())
}

/// δ = E[P] − sqrt(E[P²] − E[P]²) over the batch's confidences, clamped to
/// [0, 1]. Population variance, not sample variance.
pub fn confidence_threshold(preds: &[PredictionRecord]) -> Result<f64, BlackBoxError> {
    if preds.is_empty() {
        return Err(BlackBoxError::EmptyInput);
    }
    let n = preds.len() as f64;
    let mean = preds.iter().map(|p| p.confidence).sum::<f64>() / n;
    let mean_sq = preds.iter().map(|p| p.confidence * p.confidence).sum::<f64>() / n;
    let var = (mean_sq - mean * mean).max(0.0);
    Ok((mean - var.sqrt()).clamp(0.0, 1.0))
}

/// k-NN over the scaled training set. Probabilities are class frequencies
/// among the k nearest rows; rows tied with the k-th distance are all
/// included, which keeps the answer independent of row order.
pub struct KnnModel {
    train: Dataset,
    scaled: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
    k: usize,
}

/// Build the k-NN surrogate used as the opaque model in desk-scale
/// experiments. Requires ground-truth labels on `train`.
pub fn knn_model(train: &Dataset, k: usize) -> Result<KnnModel, BlackBoxError> {
    let labels = train.y_true().ok_or(BlackBoxError::NoLabels)?.to_vec();
    if k == 0 || k > train.n_rows() {
        return Err(BlackBoxError::KTooLarge { k, n: train.n_rows() });
    }
    let n_classes = train
        .schema()
        .class_names
        .len()
        .max(labels.iter().copied().max().unwrap_or(0) + 1);
    let scaled = (0..train.n_rows()).map(|i| train.scale(train.row(i))).collect();
    Ok(KnnModel { train: train.clone(), scaled, labels, n_classes, k })
}

impl BlackBoxModel for KnnModel {
    fn n_features(&self) -> usize {
        self.train.n_features()
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, batch: &[Instance]) -> Result<Vec<Vec<f64>>, BlackBoxError> {
        let mut out = Vec::with_capacity(batch.len());
        for q in batch {
            if q.values.len() != self.train.n_features() {
                return Err(BlackBoxError::DimensionMismatch {
                    expected: self.train.n_features(),
                    got: q.values.len(),
                });
            }
            let sq = self.train.scale(&q.values);
            let mut dists: Vec<(f64, usize)> = self
                .scaled
                .iter()
                .enumerate()
                .map(|(i, row)| (scaled_distance(&sq, row, Metric::Euclidean), i))
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // expand over rows tied with the k-th distance; the tolerance
            // absorbs last-ulp noise from the scaling arithmetic
            let kth = dists[self.k - 1].0;
            let cut = kth * (1.0 + 1e-9) + 1e-12;
            let mut counts = vec![0usize; self.n_classes];
            let mut total = 0usize;
            for &(d, i) in &dists {
                if d <= cut {
                    counts[self.labels[i]] += 1;
                    total += 1;
                } else {
                    break;
                }
            }
            out.push(counts.iter().map(|&c| c as f64 / total as f64).collect());
        }
        Ok(out)
    }
}

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Request<'a> {
    Schema,
    PredictProba { instances: &'a [Vec<f64>] },
}

#[derive(Deserialize)]
struct SchemaResponse {
    n_features: usize,
    n_classes: usize,
}

#[derive(Deserialize)]
struct ProbaResponse {
    proba: Vec<Vec<f64>>,
}

struct ChildIo {
    child: Child,
    stdin: std::process::ChildStdin,
    lines: mpsc::Receiver<std::io::Result<String>>,
}

/// Client for an external model process speaking line-delimited JSON on
/// stdin/stdout. Access to the child is serialized; the handle itself can be
/// shared across threads.
pub struct SubprocessModel {
    io: Mutex<ChildIo>,
    n_features: usize,
    n_classes: usize,
    timeout: Duration,
}

/// Spawn `command` under `sh -c` and handshake with a `schema` request.
pub fn subprocess_model(command: &str) -> Result<SubprocessModel, BlackBoxError> {
    SubprocessModel::spawn(command, Duration::from_secs(30))
}

impl SubprocessModel {
    pub fn spawn(command: &str, timeout: Duration) -> Result<SubprocessModel, BlackBoxError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(BlackBoxError::ProcessSpawn)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut io = ChildIo { child, stdin, lines: rx };
        let resp: SchemaResponse = round_trip(&mut io, &Request::Schema, timeout)?;
        if resp.n_classes < 2 {
            return Err(BlackBoxError::Protocol(format!(
                "model reports {} classes; need at least 2",
                resp.n_classes
            )));
        }
        Ok(SubprocessModel {
            io: Mutex::new(io),
            n_features: resp.n_features,
            n_classes: resp.n_classes,
            timeout,
        })
    }
}

fn round_trip<T: for<'de> Deserialize<'de>>(
    io: &mut ChildIo,
    request: &Request<'_>,
    timeout: Duration,
) -> Result<T, BlackBoxError> {
    let line = serde_json::to_string(request).expect("request serializes");
    io.stdin
        .write_all(line.as_bytes())
        .and_then(|_| io.stdin.write_all(b"\n"))
        .and_then(|_| io.stdin.flush())
        .map_err(|e| BlackBoxError::Protocol(format!("failed to write request: {e}")))?;
    let line = match io.lines.recv_timeout(timeout) {
        Ok(Ok(line)) => line,
        Ok(Err(e)) => return Err(BlackBoxError::Protocol(format!("failed to read response: {e}"))),
        Err(mpsc::RecvTimeoutError::Timeout) => return Err(BlackBoxError::Timeout(timeout)),
        Err(mpsc::RecvTimeoutError::Disconnected) => {
            return Err(BlackBoxError::Protocol("model process closed its stdout".into()))
        }
    };
    serde_json::from_str(&line)
        .map_err(|e| BlackBoxError::Protocol(format!("malformed response line {line:?}: {e}")))
}

impl BlackBoxModel for SubprocessModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, batch: &[Instance]) -> Result<Vec<Vec<f64>>, BlackBoxError> {
        let instances: Vec<Vec<f64>> = batch.iter().map(|i| i.values.clone()).collect();
        let mut io = self.io.lock().expect("subprocess lock");
        let resp: ProbaResponse =
            round_trip(&mut io, &Request::PredictProba { instances: &instances }, self.timeout)?;
        if resp.proba.len() != batch.len() {
            return Err(BlackBoxError::Protocol(format!(
                "expected {} probability vectors, got {}",
                batch.len(),
                resp.proba.len()
            )));
        }
        for p in &resp.proba {
            if p.len() != self.n_classes {
                return Err(BlackBoxError::Protocol(format!(
                    "probability vector has {} entries, expected {}",
                    p.len(),
                    self.n_classes
                )));
            }
            if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(BlackBoxError::Protocol("negative or non-finite probability".into()));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(BlackBoxError::Protocol("probabilities must sum to 1".into()));
            }
        }
        Ok(resp.proba)
    }
}

impl Drop for SubprocessModel {
    fn drop(&mut self) {
        if let Ok(mut io) = self.io.lock() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::toy_blobs;

    #[test]
    fn prediction_record_argmax_ties_to_lowest() {
        let r = PredictionRecord::from_proba(vec![0.5, 0.5]);
        assert_eq!(r.label, 0);
        assert_eq!(r.confidence, 0.5);
        let r = PredictionRecord::from_proba(vec![0.2, 0.3, 0.5]);
        assert_eq!(r.label, 2);
    }

    #[test]
    fn knn_toy_blobs_center_query() {
        let data = toy_blobs();
        let m = knn_model(&data, 3).unwrap();
        let p = m.predict_proba(&[Instance::new(vec![0.5, 0.5])]).unwrap();
        assert_eq!(p[0], vec![1.0, 0.0]);
        assert_eq!(PredictionRecord::from_proba(p[0].clone()).label, 0);
    }

    #[test]
    fn knn_training_row_k1() {
        let data = toy_blobs();
        let m = knn_model(&data, 1).unwrap();
        let p = m.predict_proba(&[Instance::new(vec![5.0, 6.0])]).unwrap();
        assert_eq!(p[0], vec![0.0, 1.0]);
        assert_eq!(PredictionRecord::from_proba(p[0].clone()).confidence, 1.0);
    }

    #[test]
    fn knn_equidistant_midpoint() {
        // (3,3) sits between the blobs; the 4-NN boundary is a 4-way tie, so the
        // selected set expands to 3 rows of each class.
        let data = toy_blobs();
        let m = knn_model(&data, 4).unwrap();
        let p = m.predict_proba(&[Instance::new(vec![3.0, 3.0])]).unwrap();
        assert_eq!(p[0], vec![0.5, 0.5]);
        assert_eq!(PredictionRecord::from_proba(p[0].clone()).label, 0);
    }

    #[test]
    fn knn_k_equals_train_size_gives_prior() {
        let data = toy_blobs();
        let m = knn_model(&data, 8).unwrap();
        let p = m
            .predict_proba(&[Instance::new(vec![-3.0, 9.0]), Instance::new(vec![5.0, 5.0])])
            .unwrap();
        assert_eq!(p[0], vec![0.5, 0.5]);
        assert_eq!(p[1], vec![0.5, 0.5]);
    }

    #[test]
    fn knn_errors() {
        let data = toy_blobs();
        assert!(matches!(knn_model(&data, 9), Err(BlackBoxError::KTooLarge { .. })));
        let schema = crate::dataset::FeatureSchema::numeric(vec!["a".into()], vec![]).unwrap();
        let unlabeled = Dataset::new(schema, vec![vec![1.0]], None).unwrap();
        assert!(matches!(knn_model(&unlabeled, 1), Err(BlackBoxError::NoLabels)));
    }

    #[test]
    fn permuted_batch_permutes_output() {
        let data = toy_blobs();
        let m = knn_model(&data, 3).unwrap();
        let batch: Vec<Instance> =
            (0..8).map(|i| data.instance(i)).collect();
        let fwd = m.predict_proba(&batch).unwrap();
        let rev_batch: Vec<Instance> = batch.iter().rev().cloned().collect();
        let rev = m.predict_proba(&rev_batch).unwrap();
        for i in 0..8 {
            assert_eq!(fwd[i], rev[7 - i]);
        }
    }

    fn recs(confs: &[f64]) -> Vec<PredictionRecord> {
        confs
            .iter()
            .map(|&c| PredictionRecord::from_proba(vec![c, 1.0 - c]))
            .collect()
    }

    #[test]
    fn threshold_zero_variance() {
        let d = confidence_threshold(&recs(&[0.9, 0.9, 0.9])).unwrap();
        assert!((d - 0.9).abs() < 1e-12);
    }

    #[test]
    fn threshold_two_point() {
        let d = confidence_threshold(&recs(&[1.0, 0.5])).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn threshold_three_point() {
        let d = confidence_threshold(&recs(&[0.6, 0.8, 1.0])).unwrap();
        assert!((d - (0.8 - (0.02f64 + 2.0 / 300.0).sqrt())).abs() < 1e-9);
        assert!((d - 0.6367).abs() < 5e-4);
    }

    #[test]
    fn threshold_empty_is_error() {
        assert!(matches!(confidence_threshold(&[]), Err(BlackBoxError::EmptyInput)));
    }

    #[test]
    fn threshold_translation_consistency() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            // keep every confidence >= 0.5 so max(p, 1-p) is the value itself
            let base: Vec<f64> = (0..6).map(|_| rng.random_range(0.5..0.7)).collect();
            let c = rng.random_range(0.0..0.3);
            let shifted: Vec<f64> = base.iter().map(|v| v + c).collect();
            let d0 = confidence_threshold(&recs(&base)).unwrap();
            let d1 = confidence_threshold(&recs(&shifted)).unwrap();
            assert!((d1 - d0 - c).abs() < 1e-12, "delta must shift by exactly c");
        }
    }
}
