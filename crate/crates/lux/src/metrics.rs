//! Evaluation harness: fidelity, simplicity, consistency and stability
//! metrics, phantom-branch fractions, rank statistics, and the synthetic
//! dataset generator used by the dimensionality sweeps.

use std::io::Write;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use thiserror::Error;

use crate::blackbox::{predict_records, BlackBoxError, BlackBoxModel};
use crate::dataset::{Dataset, DatasetError, FeatureSchema, Instance, Metric};
use crate::exec;
use crate::explain::{ExplainParams, ExplanationBundle, Explainer, Rule};
use crate::importance::ImportanceVector;
use crate::tree::ExplanationTree;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("test split is empty")]
    EmptyTest,
    #[error("need at least two explanation runs")]
    TooFewRuns,
    #[error("no valid instance pairs (all at zero distance)")]
    NoValidPairs,
    #[error("degenerate score table: {0}")]
    DegenerateTable(String),
    #[error("Nemenyi critical values tabulated only for 2..=10 algorithms, got {0}")]
    UnsupportedAlgorithmCount(usize),
    #[error("model error: {0}")]
    Model(#[from] BlackBoxError),
    #[error("dataset error: {0}")]
    Dataset(#[from] DatasetError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad csv record: {0}")]
    BadRecord(String),
}

/// F1 between predictions and reference labels: the plain binary score with
/// class 1 as positive for two classes, macro-averaged one-vs-rest above
/// that. A class absent from both sides scores 1.0 (nothing to get wrong),
/// which keeps single-class coverage subsets meaningful.
pub fn f1_score(pred: &[usize], truth: &[usize], n_classes: usize) -> f64 {
    assert_eq!(pred.len(), truth.len());
    let one = |positive: usize| -> f64 {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fne = 0usize;
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == positive, t == positive) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fne += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fne;
        if denom == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    if n_classes == 2 {
        one(1)
    } else {
        (0..n_classes).map(one).sum::<f64>() / n_classes as f64
    }
}

/// Headline local fidelity: F1 between tree predictions and the black-box
/// labels over the bundle's real neighborhood rows.
pub fn local_fidelity(bundle: &ExplanationBundle, data: &Dataset) -> f64 {
    let truth: Vec<usize> = bundle.neighborhood.preds.iter().map(|p| p.label).collect();
    let pred: Vec<usize> = bundle
        .neighborhood
        .all_idx
        .iter()
        .map(|&i| bundle.tree.predict(&data.instance(i)).expect("schema-aligned").label)
        .collect();
    f1_score(&pred, &truth, bundle.tree.n_classes)
}

/// Secondary local fidelity: F1 restricted to the neighborhood rows covered
/// by the factual rule (where the tree predicts the rule's label).
pub fn local_fidelity_coverage(bundle: &ExplanationBundle, data: &Dataset) -> f64 {
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for (pos, &i) in bundle.neighborhood.all_idx.iter().enumerate() {
        if bundle.factual.satisfied_by(data.row(i)) {
            truth.push(bundle.neighborhood.preds[pos].label);
            pred.push(bundle.factual.label);
        }
    }
    if truth.is_empty() {
        return 0.0;
    }
    f1_score(&pred, &truth, bundle.tree.n_classes)
}

/// F1 of the tree against the black box on a held-out split.
pub fn global_fidelity(
    tree: &ExplanationTree,
    test: &Dataset,
    model: &dyn BlackBoxModel,
) -> Result<f64, MetricsError> {
    if test.n_rows() == 0 {
        return Err(MetricsError::EmptyTest);
    }
    let instances: Vec<Instance> = (0..test.n_rows()).map(|i| test.instance(i)).collect();
    let truth: Vec<usize> = predict_records(model, &instances)?.iter().map(|p| p.label).collect();
    Ok(global_fidelity_with_labels(tree, test, &truth))
}

/// Same, with the black-box labels already computed (the harness计 computes
/// them once per test split).
pub fn global_fidelity_with_labels(tree: &ExplanationTree, test: &Dataset, truth: &[usize]) -> f64 {
    let pred: Vec<usize> = (0..test.n_rows())
        .map(|i| tree.predict(&test.instance(i)).expect("schema-aligned").label)
        .collect();
    f1_score(&pred, truth, tree.n_classes)
}

/// Number of distinct attributes in the rule's conditions.
pub fn simplicity(rule: &Rule) -> usize {
    rule.feature_set().len()
}

/// Mean importance of the rule's distinct features; 0 for an empty rule.
pub fn shap_consistency(rule: &Rule, imp: &ImportanceVector) -> f64 {
    let features = rule.feature_set();
    if features.is_empty() {
        return 0.0;
    }
    features.iter().map(|&f| imp.get(f)).sum::<f64>() / features.len() as f64
}

/// Mean pairwise Jaccard of the factual feature sets across repeated runs;
/// two empty sets count as 1.
pub fn stability_jaccard(bundles: &[ExplanationBundle]) -> Result<f64, MetricsError> {
    if bundles.len() < 2 {
        return Err(MetricsError::TooFewRuns);
    }
    let sets: Vec<Vec<usize>> = bundles.iter().map(|b| b.factual.feature_set()).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            total += jaccard(&sets[i], &sets[j]);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.iter().filter(|x| b.contains(x)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Lipschitz-style stability: mean over pairs of the first bundle's factual
/// coverage fraction divided by the scaled distance between the paired
/// instances. Zero-distance pairs are excluded.
pub fn lipschitz_stability(
    pairs: &[(&ExplanationBundle, &ExplanationBundle)],
    data: &Dataset,
    metric: Metric,
) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    let mut used = 0usize;
    for (a, b) in pairs {
        let d = data.distance(&a.x, &b.x, metric)?;
        if d == 0.0 {
            continue;
        }
        total += a.factual.coverage_fraction(data) / d;
        used += 1;
    }
    if used == 0 {
        return Err(MetricsError::NoValidPairs);
    }
    Ok(total / used as f64)
}

/// Fraction of leaves whose root-to-leaf rule covers zero test rows.
pub fn phantom_fraction(tree: &ExplanationTree, test: &Dataset) -> Result<f64, MetricsError> {
    if test.n_rows() == 0 {
        return Err(MetricsError::EmptyTest);
    }
    let paths = tree.leaf_paths();
    let n_leaves = paths.len();
    let mut uncovered = 0usize;
    for (conditions, _) in paths {
        let covered = (0..test.n_rows()).any(|i| {
            conditions.iter().all(|(expr, left)| expr.goes_left(test.row(i)) == *left)
        });
        if !covered {
            uncovered += 1;
        }
    }
    Ok(uncovered as f64 / n_leaves as f64)
}

/// Average ranks per column with midrank ties. Rank 1 is best; `higher_is_better`
/// sets which direction is best.
pub fn average_ranks(row: &[f64], higher_is_better: bool) -> Vec<f64> {
    let k = row.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        if higher_is_better {
            row[b].partial_cmp(&row[a]).unwrap()
        } else {
            row[a].partial_cmp(&row[b]).unwrap()
        }
    });
    let mut ranks = vec![0.0; k];
    let mut i = 0;
    while i < k {
        let mut j = i;
        while j + 1 < k && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        // average of ranks i+1 ..= j+1
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &col in &order[i..=j] {
            ranks[col] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone)]
pub struct FriedmanResult {
    /// Iman-Davenport F statistic.
    pub f_statistic: f64,
    pub chi2: f64,
    pub p_value: f64,
    /// Degrees of freedom `(k-1, (k-1)(N-1))`.
    pub dof: (usize, usize),
    /// F critical value at alpha = 0.05.
    pub critical_value: f64,
    pub mean_ranks: Vec<f64>,
    /// Nemenyi critical distance at alpha = 0.05.
    pub critical_distance: f64,
}

/// Studentized range q_alpha / sqrt(2) at alpha = 0.05 for k = 2..=10.
const NEMENYI_Q05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];

/// Friedman test (Iman-Davenport form) with Nemenyi critical distance over a
/// datasets x algorithms score table.
pub fn friedman_nemenyi(
    table: &[Vec<f64>],
    higher_is_better: bool,
) -> Result<FriedmanResult, MetricsError> {
    let n = table.len();
    if n < 2 {
        return Err(MetricsError::DegenerateTable("need at least 2 datasets".into()));
    }
    let k = table[0].len();
    if k < 2 || table.iter().any(|r| r.len() != k) {
        return Err(MetricsError::DegenerateTable("need at least 2 algorithms per row".into()));
    }
    if table.iter().all(|r| r.iter().all(|v| *v == r[0])) {
        return Err(MetricsError::DegenerateTable("every row is all-equal".into()));
    }
    if k > NEMENYI_Q05.len() + 1 {
        return Err(MetricsError::UnsupportedAlgorithmCount(k));
    }

    let mut rank_sums = vec![0.0; k];
    for row in table {
        for (j, r) in average_ranks(row, higher_is_better).into_iter().enumerate() {
            rank_sums[j] += r;
        }
    }
    let mean_ranks: Vec<f64> = rank_sums.iter().map(|s| s / n as f64).collect();

    // chi2 = 12N/(k(k+1)) * [sum R_j^2 - k(k+1)^2/4] with R_j the mean ranks
    let nf = n as f64;
    let kf = k as f64;
    let sum_r2: f64 = mean_ranks.iter().map(|r| r * r).sum();
    let chi2 = 12.0 * nf / (kf * (kf + 1.0)) * (sum_r2 - kf * (kf + 1.0) * (kf + 1.0) / 4.0);

    let denom = nf * (kf - 1.0) - chi2;
    let f_statistic = if denom <= 1e-12 {
        f64::INFINITY
    } else {
        (nf - 1.0) * chi2 / denom
    };
    let dof = (k - 1, (k - 1) * (n - 1));
    let dist = FisherSnedecor::new(dof.0 as f64, dof.1 as f64)
        .map_err(|e| MetricsError::DegenerateTable(e.to_string()))?;
    let critical_value = dist.inverse_cdf(0.95);
    let p_value = if f_statistic.is_infinite() { 0.0 } else { 1.0 - dist.cdf(f_statistic) };
    let critical_distance =
        NEMENYI_Q05[k - 2] * (kf * (kf + 1.0) / (6.0 * nf)).sqrt();

    Ok(FriedmanResult {
        f_statistic,
        chi2,
        p_value,
        dof,
        critical_value,
        mean_ranks,
        critical_distance,
    })
}

/// Spearman rank correlation with midrank ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rx = rank_vector(x);
    let ry = rank_vector(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

fn rank_vector(v: &[f64]) -> Vec<f64> {
    // midrank ties, ascending
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Deterministic synthetic classification data: per-class Gaussian blobs on
/// the informative features (deviations truncated at one blob_std so the
/// inter-centroid margin is exact), plus standard-normal noise features.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_informative: usize,
    pub n_noise: usize,
    pub n_classes: usize,
    pub blob_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn dims(&self) -> usize {
        self.n_informative + self.n_noise
    }
}

pub fn make_synthetic(spec: &SyntheticSpec) -> Dataset {
    assert!(spec.n_samples > 0 && spec.n_informative > 0 && spec.n_classes >= 2);
    assert!(spec.blob_std > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dims();
    let names: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    let class_names: Vec<String> = (0..spec.n_classes).map(|c| c.to_string()).collect();
    let schema = FeatureSchema::numeric(names, class_names).expect("valid synthetic schema");

    // adjacent centroids sit 6 blob_std apart along every informative axis
    let spacing = 6.0 * spec.blob_std;
    let mut rows = Vec::with_capacity(spec.n_samples);
    let mut y = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let class = i % spec.n_classes;
        let mut row = Vec::with_capacity(d);
        for _ in 0..spec.n_informative {
            let dev = truncated_normal(&mut rng, spec.blob_std);
            row.push(class as f64 * spacing + dev);
        }
        for _ in 0..spec.n_noise {
            row.push(standard_normal(&mut rng));
        }
        rows.push(row);
        y.push(class);
    }
    Dataset::new(schema, rows, Some(y)).expect("synthetic data is valid")
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// N(0, std) truncated to [-std, std] by rejection.
fn truncated_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let z = standard_normal(rng);
        if z.abs() <= 1.0 {
            return z * std;
        }
    }
}

/// Deterministic sample of `count` distinct row indices.
pub fn sample_instances(n_rows: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n_rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(count.min(n_rows));
    idx.sort_unstable();
    idx
}

/// One explained instance's scores.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub dataset: String,
    pub instance: usize,
    pub metrics: Vec<(String, f64)>,
    pub rule: String,
    pub runtime_ms: f64,
}

/// All records for one dataset; aggregates are always recomputable from the
/// per-instance records.
#[derive(Debug, Clone, Default)]
pub struct EvalRun {
    pub dataset: String,
    pub records: Vec<InstanceRecord>,
}

impl EvalRun {
    /// Mean and population standard deviation per metric.
    pub fn aggregate(&self) -> Vec<(String, f64, f64)> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.records {
            for (m, _) in &r.metrics {
                if !names.contains(m) {
                    names.push(m.clone());
                }
            }
        }
        names
            .iter()
            .map(|name| {
                let values: Vec<f64> = self
                    .records
                    .iter()
                    .flat_map(|r| r.metrics.iter().filter(|(m, _)| m == name).map(|(_, v)| *v))
                    .collect();
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                (name.clone(), mean, var.sqrt())
            })
            .collect()
    }

    pub fn metric_values(&self, name: &str) -> Vec<f64> {
        self.records
            .iter()
            .flat_map(|r| r.metrics.iter().filter(|(m, _)| m == name).map(|(_, v)| *v))
            .collect()
    }

    /// One row per instance per metric: `dataset,instance,metric,value`.
    pub fn write_csv(&self, mut w: impl Write, provenance: &[String]) -> std::io::Result<()> {
        for line in provenance {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "dataset,instance,metric,value")?;
        for r in &self.records {
            for (m, v) in &r.metrics {
                writeln!(w, "{},{},{},{}", self.dataset, r.instance, m, v)?;
            }
        }
        Ok(())
    }

    /// Read records back from the per-instance CSV schema. Used both for
    /// replay and for importing external per-instance score files.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<EvalRun>, MetricsError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(|e| MetricsError::BadRecord(e.to_string()))?;
        let mut runs: Vec<EvalRun> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| MetricsError::BadRecord(e.to_string()))?;
            if record.len() != 4 {
                return Err(MetricsError::BadRecord(format!(
                    "expected 4 columns, got {}",
                    record.len()
                )));
            }
            let dataset = record[0].to_string();
            let instance: usize = record[1]
                .parse()
                .map_err(|_| MetricsError::BadRecord(format!("bad instance '{}'", &record[1])))?;
            let metric = record[2].to_string();
            let value: f64 = record[3]
                .parse()
                .map_err(|_| MetricsError::BadRecord(format!("bad value '{}'", &record[3])))?;
            let run = match runs.iter_mut().find(|r| r.dataset == dataset) {
                Some(r) => r,
                None => {
                    runs.push(EvalRun { dataset: dataset.clone(), records: Vec::new() });
                    runs.last_mut().unwrap()
                }
            };
            match run.records.iter_mut().find(|r| r.instance == instance) {
                Some(r) => r.metrics.push((metric, value)),
                None => run.records.push(InstanceRecord {
                    dataset,
                    instance,
                    metrics: vec![(metric, value)],
                    rule: String::new(),
                    runtime_ms: 0.0,
                }),
            }
        }
        Ok(runs)
    }
}

/// Options for one benchmark pass over a dataset.
pub struct BenchmarkConfig<'a> {
    pub dataset_name: String,
    pub params: ExplainParams,
    pub instances: Vec<usize>,
    pub seed: u64,
    /// Held-out split for global fidelity and phantom fraction.
    pub test: Option<&'a Dataset>,
    /// Run the per-instance loop sequentially even when the parallel
    /// feature is on.
    pub sequential: bool,
}

/// Explain every requested instance and score it. Failed explanations
/// record fidelity 0, matching the benchmark convention for abstentions.
/// When at least two instances succeed, each one also gets a Lipschitz-style
/// stability score against its nearest sampled companion.
pub fn run_benchmark(
    explainer: &Explainer,
    config: &BenchmarkConfig<'_>,
) -> Result<EvalRun, MetricsError> {
    let test_labels: Option<Vec<usize>> = match config.test {
        Some(test) => {
            let instances: Vec<Instance> = (0..test.n_rows()).map(|i| test.instance(i)).collect();
            Some(
                predict_records(explainer.model(), &instances)?
                    .iter()
                    .map(|p| p.label)
                    .collect(),
            )
        }
        None => None,
    };

    let work = |row: usize| -> (usize, f64, Option<ExplanationBundle>) {
        let start = std::time::Instant::now();
        let x = explainer.data().instance(row);
        let bundle = explainer.explain(&x, &config.params, config.seed).ok();
        (row, start.elapsed().as_secs_f64() * 1e3, bundle)
    };
    let outcomes = if config.sequential {
        exec::map_seq(config.instances.clone(), work)
    } else {
        exec::map(config.instances.clone(), work)
    };

    let metric = config.params.neighborhood.metric;
    let data = explainer.data();
    let mut records = Vec::with_capacity(outcomes.len());
    for (row, runtime_ms, bundle) in &outcomes {
        let record = match bundle {
            Some(bundle) => {
                let mut metrics = vec![
                    ("local_fidelity".to_string(), local_fidelity(bundle, data)),
                    ("coverage_fidelity".to_string(), local_fidelity_coverage(bundle, data)),
                    ("simplicity".to_string(), simplicity(&bundle.factual) as f64),
                    (
                        "shap_consistency".to_string(),
                        shap_consistency(&bundle.factual, &bundle.importances),
                    ),
                ];
                if let (Some(test), Some(labels)) = (config.test, &test_labels) {
                    metrics.push((
                        "global_fidelity".to_string(),
                        global_fidelity_with_labels(&bundle.tree, test, labels),
                    ));
                    metrics.push((
                        "phantom_fraction".to_string(),
                        phantom_fraction(&bundle.tree, test).expect("non-empty test"),
                    ));
                }
                // nearest other sampled instance at nonzero distance
                let mut nearest: Option<(f64, &ExplanationBundle)> = None;
                for (other_row, _, other) in &outcomes {
                    if other_row == row {
                        continue;
                    }
                    if let Some(other) = other {
                        let d = data.distance(&bundle.x, &other.x, metric)?;
                        if d > 0.0 && nearest.map_or(true, |(nd, _)| d < nd) {
                            nearest = Some((d, other));
                        }
                    }
                }
                if let Some((_, other)) = nearest {
                    let v = lipschitz_stability(&[(bundle, other)], data, metric)?;
                    metrics.push(("lipschitz_stability".to_string(), v));
                }
                InstanceRecord {
                    dataset: config.dataset_name.clone(),
                    instance: *row,
                    metrics,
                    rule: crate::explain::render_rule(&bundle.factual, data.schema()),
                    runtime_ms: *runtime_ms,
                }
            }
            None => InstanceRecord {
                dataset: config.dataset_name.clone(),
                instance: *row,
                metrics: vec![
                    ("local_fidelity".to_string(), 0.0),
                    ("coverage_fidelity".to_string(), 0.0),
                ],
                rule: String::new(),
                runtime_ms: *runtime_ms,
            },
        };
        records.push(record);
    }
    Ok(EvalRun { dataset: config.dataset_name.clone(), records })
}

/// Repeated explanations per instance: the per-instance Jaccard stability of
/// the factual feature sets across `runs` calls. With `vary_seed` each run
/// uses `seed + run`, otherwise the calls are exact repeats.
pub fn stability_benchmark(
    explainer: &Explainer,
    config: &BenchmarkConfig<'_>,
    runs: usize,
    vary_seed: bool,
) -> Result<EvalRun, MetricsError> {
    if runs < 2 {
        return Err(MetricsError::TooFewRuns);
    }
    let work = |row: usize| -> InstanceRecord {
        let start = std::time::Instant::now();
        let x = explainer.data().instance(row);
        let bundles: Vec<ExplanationBundle> = (0..runs)
            .filter_map(|r| {
                let seed = if vary_seed { config.seed + r as u64 } else { config.seed };
                explainer.explain(&x, &config.params, seed).ok()
            })
            .collect();
        let mut metrics = Vec::new();
        if bundles.len() >= 2 {
            metrics.push((
                "stability_jaccard".to_string(),
                stability_jaccard(&bundles).expect("two or more bundles"),
            ));
        }
        InstanceRecord {
            dataset: config.dataset_name.clone(),
            instance: row,
            metrics,
            rule: String::new(),
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    };
    let records = if config.sequential {
        exec::map_seq(config.instances.clone(), work)
    } else {
        exec::map(config.instances.clone(), work)
    };
    Ok(EvalRun { dataset: config.dataset_name.clone(), records })
}

/// Split rows deterministically into train/test index sets.
pub fn train_test_split(n_rows: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n_rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_test = ((n_rows as f64) * test_fraction).round() as usize;
    let (test, train) = idx.split_at(n_test.min(n_rows));
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Materialize a subset of rows as a new dataset (class names preserved).
pub fn subset(data: &Dataset, rows: &[usize]) -> Dataset {
    let values: Vec<Vec<f64>> = rows.iter().map(|&i| data.row(i).to_vec()).collect();
    let y = data.y_true().map(|y| rows.iter().map(|&i| y[i]).collect());
    Dataset::new(data.schema().clone(), values, y).expect("subset of a valid dataset")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_hand_confusion() {
        // TP=2 FP=1 FN=1 TN=4 -> 2*2/(2*2+1+1) = 0.6667
        let truth = vec![1, 1, 1, 0, 0, 0, 0, 0];
        let pred = vec![1, 1, 0, 1, 0, 0, 0, 0];
        let f1 = f1_score(&pred, &truth, 2);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_perfect_and_zero() {
        assert_eq!(f1_score(&[1, 0, 1], &[1, 0, 1], 2), 1.0);
        assert_eq!(f1_score(&[0, 0, 0], &[1, 1, 1], 2), 0.0);
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard(&[], &[]), 1.0);
        assert!((jaccard(&[0, 1], &[1, 2]) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard(&[0, 1], &[0, 1]), 1.0);
    }

    #[test]
    fn rank_identity_sum() {
        // sum of mean ranks over algorithms = k(k+1)/2
        let table = vec![
            vec![0.9, 0.8, 0.7, 0.6],
            vec![0.5, 0.9, 0.6, 0.7],
            vec![0.4, 0.4, 0.9, 0.2],
        ];
        let r = friedman_nemenyi(&table, true).unwrap();
        let sum: f64 = r.mean_ranks.iter().sum();
        assert!((sum - 10.0).abs() < 1e-12);
    }

    #[test]
    fn friedman_13x4_dof_and_critical() {
        // 13 datasets x 4 algorithms: dof (3, 36), critical 2.87
        let mut table = Vec::new();
        for i in 0..13 {
            let base = (i as f64 * 0.37).fract();
            table.push(vec![
                (base + 0.31).fract(),
                (base + 0.63).fract(),
                (base + 0.17).fract(),
                (base + 0.89).fract(),
            ]);
        }
        let r = friedman_nemenyi(&table, true).unwrap();
        assert_eq!(r.dof, (3, 36));
        assert!((r.critical_value - 2.87).abs() < 0.01, "critical {}", r.critical_value);
    }

    #[test]
    fn dominant_algorithm_mean_rank_one() {
        let table = vec![
            vec![0.99, 0.5, 0.4],
            vec![0.98, 0.6, 0.3],
            vec![0.97, 0.1, 0.2],
            vec![0.96, 0.4, 0.5],
        ];
        let r = friedman_nemenyi(&table, true).unwrap();
        assert_eq!(r.mean_ranks[0], 1.0);
        // lower-is-better flips it to rank k
        let r = friedman_nemenyi(&table, false).unwrap();
        assert_eq!(r.mean_ranks[0], 3.0);
    }

    #[test]
    fn degenerate_table_rejected() {
        let table = vec![vec![0.5, 0.5, 0.5], vec![0.2, 0.2, 0.2]];
        assert!(matches!(
            friedman_nemenyi(&table, true),
            Err(MetricsError::DegenerateTable(_))
        ));
    }

    #[test]
    fn ties_get_average_ranks() {
        let ranks = average_ranks(&[0.9, 0.9, 0.1], true);
        assert_eq!(ranks, vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn spearman_monotone_and_ties() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y = vec![10.0, 20.0, 30.0, 40.0];
        assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
        let y_rev: Vec<f64> = y.iter().rev().copied().collect();
        assert!((spearman(&x, &y_rev) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn synthetic_margin_is_exact() {
        let spec = SyntheticSpec {
            n_samples: 200,
            n_informative: 2,
            n_noise: 0,
            n_classes: 2,
            blob_std: 1.0,
            seed: 7,
        };
        let data = make_synthetic(&spec);
        assert_eq!(data.n_rows(), 200);
        assert_eq!(data.n_features(), 2);
        // classes separate along the first informative axis with margin >= 4 std
        let y = data.y_true().unwrap();
        let max0 = (0..200).filter(|&i| y[i] == 0).map(|i| data.row(i)[0]).fold(f64::MIN, f64::max);
        let min1 = (0..200).filter(|&i| y[i] == 1).map(|i| data.row(i)[0]).fold(f64::MAX, f64::min);
        assert!(min1 - max0 >= 4.0 * spec.blob_std, "margin {}", min1 - max0);
    }

    #[test]
    fn synthetic_noise_uncorrelated() {
        let spec = SyntheticSpec {
            n_samples: 500,
            n_informative: 2,
            n_noise: 2,
            n_classes: 2,
            blob_std: 1.0,
            seed: 11,
        };
        let data = make_synthetic(&spec);
        let y = data.y_true().unwrap();
        for j in 2..4 {
            let xs: Vec<f64> = (0..500).map(|i| data.row(i)[j]).collect();
            let ys: Vec<f64> = y.iter().map(|&c| c as f64).collect();
            let mx = xs.iter().sum::<f64>() / 500.0;
            let my = ys.iter().sum::<f64>() / 500.0;
            let cov: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>();
            let vx: f64 = xs.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>();
            let vy: f64 = ys.iter().map(|b| (b - my) * (b - my)).sum::<f64>();
            let corr = cov / (vx * vy).sqrt();
            assert!(corr.abs() < 0.15, "noise column {j} correlates {corr}");
        }
    }

    #[test]
    fn synthetic_deterministic() {
        let spec = SyntheticSpec {
            n_samples: 50,
            n_informative: 3,
            n_noise: 1,
            n_classes: 3,
            blob_std: 0.5,
            seed: 99,
        };
        let a = make_synthetic(&spec);
        let b = make_synthetic(&spec);
        for i in 0..50 {
            assert_eq!(a.row(i), b.row(i));
        }
        let c = make_synthetic(&SyntheticSpec { seed: 100, ..spec });
        assert!((0..50).any(|i| a.row(i) != c.row(i)));
    }

    #[test]
    fn eval_run_round_trip() {
        let run = EvalRun {
            dataset: "toy".into(),
            records: vec![
                InstanceRecord {
                    dataset: "toy".into(),
                    instance: 3,
                    metrics: vec![("local_fidelity".into(), 0.9), ("simplicity".into(), 2.0)],
                    rule: "IF TRUE THEN class = 0 # 1.0".into(),
                    runtime_ms: 1.0,
                },
                InstanceRecord {
                    dataset: "toy".into(),
                    instance: 5,
                    metrics: vec![("local_fidelity".into(), 1.0), ("simplicity".into(), 1.0)],
                    rule: String::new(),
                    runtime_ms: 2.0,
                },
            ],
        };
        let mut buf = Vec::new();
        run.write_csv(&mut buf, &["seed=1".into()]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), &buf).unwrap();
        let runs = EvalRun::read_csv(f.path()).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].records.len(), 2);
        let agg = runs[0].aggregate();
        let fid = agg.iter().find(|(m, _, _)| m == "local_fidelity").unwrap();
        assert!((fid.1 - 0.95).abs() < 1e-12);
        // aggregates recomputable from records: mean of {0.9, 1.0}
    }

    fn four_leaf_tree() -> ExplanationTree {
        // one class per quadrant: a split on x1 then on x2 in both branches
        use crate::blackbox::PredictionRecord;
        use crate::importance::ImportanceVector;
        use crate::tree::{build_tree, RowSource, SampleRow, TrainingSample, TreeParams};
        let mut rows = Vec::new();
        for (label, (a, b)) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
            .iter()
            .enumerate()
        {
            for d in [0.0, 0.1] {
                let mut proba = vec![0.0; 4];
                proba[label] = 1.0;
                rows.push(SampleRow {
                    values: vec![a + d, b + d],
                    pred: PredictionRecord { label, confidence: 1.0, proba },
                    source: RowSource::Real(rows.len()),
                });
            }
        }
        let sample = TrainingSample { rows, n_classes: 4 };
        let imp = ImportanceVector::new(vec![1.0, 1.0], "t").unwrap();
        let params = TreeParams { min_samples_split: 2, oblique_enabled: false, ..TreeParams::default() };
        let tree = build_tree(&sample, &imp, &params).unwrap();
        assert_eq!(tree.leaves().len(), 4, "fixture tree must have 4 leaves");
        tree
    }

    #[test]
    fn phantom_fraction_counts_uncovered_leaves() {
        let tree = four_leaf_tree();
        let schema = FeatureSchema::numeric(vec!["x1".into(), "x2".into()], vec![]).unwrap();
        // covers all four quadrants
        let full = Dataset::new(
            schema.clone(),
            vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]],
            None,
        )
        .unwrap();
        assert_eq!(phantom_fraction(&tree, &full).unwrap(), 0.0);
        // misses exactly one quadrant -> 1 of 4 leaves uncovered
        let three = Dataset::new(
            schema,
            vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0]],
            None,
        )
        .unwrap();
        assert_eq!(phantom_fraction(&tree, &three).unwrap(), 0.25);
    }

    #[test]
    fn simplicity_counts_distinct_features() {
        use crate::explain::Rule;
        use crate::tree::SplitExpr;
        let empty = Rule { conditions: vec![], label: 0, confidence: 1.0, coverage_idx: vec![] };
        assert_eq!(simplicity(&empty), 0);
        // the printed example pair: an oblique over {x2, x1} plus an axis on x2
        let rule = Rule {
            conditions: vec![
                (SplitExpr::Oblique { feature: 1, partner: 0, alpha: 1.0, beta: 12.36 }, true),
                (SplitExpr::Axis { feature: 1, threshold: 7.92 }, false),
            ],
            label: 1,
            confidence: 1.0,
            coverage_idx: vec![],
        };
        assert_eq!(simplicity(&rule), 2);
    }

    #[test]
    fn shap_consistency_means_over_rule_features() {
        use crate::explain::Rule;
        use crate::tree::SplitExpr;
        let imp = ImportanceVector::new(vec![0.2, 0.4, 0.9], "t").unwrap();
        let top_only = Rule {
            conditions: vec![(SplitExpr::Axis { feature: 2, threshold: 0.0 }, true)],
            label: 0,
            confidence: 1.0,
            coverage_idx: vec![],
        };
        assert!((shap_consistency(&top_only, &imp) - 0.9).abs() < 1e-12);
        let two = Rule {
            conditions: vec![
                (SplitExpr::Axis { feature: 0, threshold: 0.0 }, true),
                (SplitExpr::Axis { feature: 1, threshold: 1.0 }, false),
            ],
            label: 0,
            confidence: 1.0,
            coverage_idx: vec![],
        };
        assert!((shap_consistency(&two, &imp) - 0.3).abs() < 1e-12);
        let empty = Rule { conditions: vec![], label: 0, confidence: 1.0, coverage_idx: vec![] };
        assert_eq!(shap_consistency(&empty, &imp), 0.0);
    }

    #[test]
    fn global_fidelity_cases() {
        use crate::blackbox::knn_model;
        use crate::dataset::toy_blobs;
        use crate::explain::{ExplainParams, Explainer};
        use crate::neighborhood::{NeighborhoodParams, Stratification};
        use std::sync::Arc;
        let data = toy_blobs();
        let model = Arc::new(knn_model(&data, 3).unwrap());
        let ex = Explainer::new(data.clone(), model).unwrap();
        let params = ExplainParams {
            neighborhood: NeighborhoodParams {
                k: 8,
                sigma: 3,
                stratification: Stratification::Global,
                metric: crate::dataset::Metric::Euclidean,
            },
            ..ExplainParams::default()
        };
        // a tree that reproduces the black box exactly
        let bundle = ex.explain(&Instance::new(vec![0.5, 0.5]), &params, 1).unwrap();
        assert_eq!(global_fidelity(&bundle.tree, &data, ex.model()).unwrap(), 1.0);
        // a constant-leaf tree on a balanced 2-class split: binary F1 of the
        // constant prediction; predicting the positive class gives 0.667
        let mut depth0 = params.clone();
        depth0.tree.max_depth = 0;
        let constant = ex.explain(&Instance::new(vec![5.5, 5.5]), &depth0, 1).unwrap();
        assert!(constant.tree.root.is_leaf());
        let gf = global_fidelity(&constant.tree, &data, ex.model()).unwrap();
        let expected = if constant.tree.root.majority == 1 { 2.0 / 3.0 } else { 0.0 };
        assert!((gf - expected).abs() < 1e-12);
    }

    #[test]
    fn local_fidelity_pure_tree_is_one() {
        use crate::blackbox::knn_model;
        use crate::dataset::toy_blobs;
        use crate::explain::{ExplainParams, Explainer};
        use crate::neighborhood::{NeighborhoodParams, Stratification};
        use std::sync::Arc;
        let data = toy_blobs();
        let model = Arc::new(knn_model(&data, 3).unwrap());
        let ex = Explainer::new(data, model).unwrap();
        let params = ExplainParams {
            neighborhood: NeighborhoodParams {
                k: 8,
                sigma: 3,
                stratification: Stratification::Global,
                metric: crate::dataset::Metric::Euclidean,
            },
            ..ExplainParams::default()
        };
        let bundle = ex.explain(&Instance::new(vec![0.5, 0.5]), &params, 1).unwrap();
        assert_eq!(local_fidelity(&bundle, ex.data()), 1.0);
        assert_eq!(local_fidelity_coverage(&bundle, ex.data()), 1.0);
    }

    #[test]
    fn lipschitz_ratio_arithmetic() {
        use crate::blackbox::knn_model;
        use crate::dataset::toy_blobs;
        use crate::explain::{ExplainParams, Explainer};
        use crate::neighborhood::{NeighborhoodParams, Stratification};
        use std::sync::Arc;
        let data = toy_blobs();
        let model = Arc::new(knn_model(&data, 3).unwrap());
        let ex = Explainer::new(data, model).unwrap();
        let params = ExplainParams {
            neighborhood: NeighborhoodParams {
                k: 8,
                sigma: 3,
                stratification: Stratification::Global,
                metric: crate::dataset::Metric::Euclidean,
            },
            ..ExplainParams::default()
        };
        let a = ex.explain(&Instance::new(vec![0.5, 0.5]), &params, 1).unwrap();
        let b = ex.explain(&Instance::new(vec![0.4, 0.6]), &params, 1).unwrap();
        let d = ex
            .data()
            .distance(&a.x, &b.x, crate::dataset::Metric::Euclidean)
            .unwrap();
        let expected = a.factual.coverage_fraction(ex.data()) / d;
        let got = lipschitz_stability(&[(&a, &b)], ex.data(), crate::dataset::Metric::Euclidean)
            .unwrap();
        assert!((got - expected).abs() < 1e-12);
        // a zero-distance pair alone is an error
        assert!(matches!(
            lipschitz_stability(&[(&a, &a)], ex.data(), crate::dataset::Metric::Euclidean),
            Err(MetricsError::NoValidPairs)
        ));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (train, test) = train_test_split(100, 0.3, 5);
        assert_eq!(test.len(), 30);
        assert_eq!(train.len(), 70);
        for t in &test {
            assert!(!train.contains(t));
        }
        let (train2, test2) = train_test_split(100, 0.3, 5);
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }
}
