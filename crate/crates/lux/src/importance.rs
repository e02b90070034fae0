//! Local feature importance: a kernel-style Shapley estimator over the
//! black box, plus file injection for attributions computed elsewhere.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::blackbox::{BlackBoxError, BlackBoxModel, PredictionRecord};
use crate::dataset::{FeatureSchema, Instance};

#[derive(Debug, Error)]
pub enum ImportanceError {
    #[error("background rows are all identical")]
    DegenerateBackground,
    #[error("empty background")]
    EmptyBackground,
    #[error("coalition regression is singular even after regularization")]
    SingularSystem,
    #[error("all importances are zero")]
    AllZero,
    #[error("n_coalitions={got} is below the minimum {min} (2 per feature)")]
    TooFewCoalitions { got: usize, min: usize },
    #[error("importance file is missing feature '{0}'")]
    MissingFeature(String),
    #[error("importance for feature '{0}' is negative")]
    NegativeImportance(String),
    #[error("bad line {line} in importance file: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("model error: {0}")]
    Model(#[from] BlackBoxError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Mean absolute attribution per feature, all entries nonnegative and not
/// all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector {
    values: Vec<f64>,
    pub scope: String,
}

impl ImportanceVector {
    pub fn new(values: Vec<f64>, scope: impl Into<String>) -> Result<Self, ImportanceError> {
        if values.iter().all(|&v| v == 0.0) {
            return Err(ImportanceError::AllZero);
        }
        debug_assert!(values.iter().all(|&v| v >= 0.0));
        Ok(ImportanceVector { values, scope: scope.into() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, feature: usize) -> f64 {
        self.values[feature]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Highest-importance feature, ties to the lowest index.
    pub fn argmax_feature(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// The two distinct features maximizing summed importance; `.0` carries
    /// the larger importance. Ties resolve to lower indices. `None` when the
    /// schema has fewer than two features.
    pub fn top_pair(&self) -> Option<(usize, usize)> {
        if self.values.len() < 2 {
            return None;
        }
        let first = self.argmax_feature();
        let mut second = usize::MAX;
        for (i, &v) in self.values.iter().enumerate() {
            if i == first {
                continue;
            }
            if second == usize::MAX || v > self.values[second] {
                second = i;
            }
        }
        Some((first, second))
    }
}

/// Shapley-value estimate for one target: signed attribution per feature for
/// the target's predicted class.
///
/// Coalitions are enumerated exhaustively when feasible, otherwise sampled
/// from the Shapley kernel distribution; masked features are replaced by
/// background values and the attribution comes from a constrained weighted
/// least squares fit, ridge-regularized with 1e-6.
pub fn shap_values(
    model: &dyn BlackBoxModel,
    background: &[Vec<f64>],
    target: &Instance,
    n_coalitions: usize,
    seed: u64,
) -> Result<Vec<f64>, ImportanceError> {
    let n = target.values.len();
    if background.is_empty() {
        return Err(ImportanceError::EmptyBackground);
    }
    if background.iter().all(|r| r == &background[0]) && background[0] == target.values {
        // zero-information setup: every masked evaluation equals f(x)
        return Err(ImportanceError::DegenerateBackground);
    }
    if background.len() > 1 && background.iter().all(|r| r == &background[0]) {
        return Err(ImportanceError::DegenerateBackground);
    }
    if n_coalitions < 2 * n {
        return Err(ImportanceError::TooFewCoalitions { got: n_coalitions, min: 2 * n });
    }

    let target_pred =
        PredictionRecord::from_proba(model.predict_proba(std::slice::from_ref(target))?.remove(0));
    let class = target_pred.label;
    let f_x = target_pred.confidence;

    let bg_instances: Vec<Instance> = background.iter().map(|r| Instance::new(r.clone())).collect();
    let bg_proba = model.predict_proba(&bg_instances)?;
    let phi0 = bg_proba.iter().map(|p| p[class]).sum::<f64>() / background.len() as f64;

    if n == 1 {
        return Ok(vec![f_x - phi0]);
    }

    let (coalitions, weights) = draw_coalitions(n, n_coalitions, seed);

    // one batched model call for every (coalition, background row) pair
    let mut masked = Vec::with_capacity(coalitions.len() * background.len());
    for coalition in &coalitions {
        for bg in background {
            let mixed: Vec<f64> = (0..n)
                .map(|j| if coalition[j] { target.values[j] } else { bg[j] })
                .collect();
            masked.push(Instance::new(mixed));
        }
    }
    let masked_proba = model.predict_proba(&masked)?;
    let v: Vec<f64> = coalitions
        .iter()
        .enumerate()
        .map(|(ci, _)| {
            let chunk = &masked_proba[ci * background.len()..(ci + 1) * background.len()];
            chunk.iter().map(|p| p[class]).sum::<f64>() / background.len() as f64
        })
        .collect();

    solve_constrained_wls(&coalitions, &weights, &v, phi0, f_x - phi0)
}

/// Mean absolute Shapley attribution per feature, averaged over `targets`.
pub fn kernel_shap(
    model: &dyn BlackBoxModel,
    background: &[Vec<f64>],
    targets: &[Instance],
    n_coalitions: usize,
    seed: u64,
) -> Result<ImportanceVector, ImportanceError> {
    if targets.is_empty() {
        return Err(ImportanceError::EmptyBackground);
    }
    let n = targets[0].values.len();
    let mut acc = vec![0.0; n];
    for target in targets {
        let phi = shap_values(model, background, target, n_coalitions, seed)?;
        for (a, p) in acc.iter_mut().zip(&phi) {
            *a += p.abs();
        }
    }
    for a in acc.iter_mut() {
        *a /= targets.len() as f64;
    }
    let scope = format!("shap(background={}, targets={})", background.len(), targets.len());
    ImportanceVector::new(acc, scope)
}

/// Shapley kernel weight for a coalition of size `s` out of `n` features,
/// without the binomial factor (which is handled by enumeration/sampling).
fn kernel_weight(n: usize, s: usize) -> f64 {
    (n as f64 - 1.0) / (s as f64 * (n - s) as f64)
}

fn draw_coalitions(n: usize, n_coalitions: usize, seed: u64) -> (Vec<Vec<bool>>, Vec<f64>) {
    let exhaustive = n < 26 && (1usize << n) - 2 <= n_coalitions;
    if exhaustive {
        let full = (1usize << n) - 1;
        let mut coalitions = Vec::with_capacity(full - 1);
        let mut weights = Vec::with_capacity(full - 1);
        for mask in 1..full {
            let coalition: Vec<bool> = (0..n).map(|j| mask >> j & 1 == 1).collect();
            let s = coalition.iter().filter(|&&b| b).count();
            coalitions.push(coalition);
            weights.push(kernel_weight(n, s));
        }
        return (coalitions, weights);
    }

    // sample sizes from the kernel distribution aggregated per size, then a
    // uniform subset of that size; each draw then enters the fit with unit
    // weight
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();
    let size_weight: Vec<f64> = (1..n)
        .map(|s| {
            let ln_binom = ln_fact[n] - ln_fact[s] - ln_fact[n - s];
            (ln_binom + kernel_weight(n, s).ln()).exp()
        })
        .collect();
    let total: f64 = size_weight.iter().sum();

    let mut coalitions = Vec::with_capacity(n_coalitions);
    let mut indices: Vec<usize> = (0..n).collect();
    for _ in 0..n_coalitions {
        let mut u = rng.random_range(0.0..total);
        let mut size = 1;
        for (i, w) in size_weight.iter().enumerate() {
            if u < *w {
                size = i + 1;
                break;
            }
            u -= w;
            size = i + 1;
        }
        // partial Fisher-Yates: first `size` entries become the coalition
        for i in 0..size {
            let j = rng.random_range(i..n);
            indices.swap(i, j);
        }
        let mut coalition = vec![false; n];
        for &f in &indices[..size] {
            coalition[f] = true;
        }
        coalitions.push(coalition);
    }
    let weights = vec![1.0; coalitions.len()];
    (coalitions, weights)
}

/// Ridge-regularized weighted least squares with the efficiency constraint
/// `sum(phi) = delta` as a Lagrange multiplier, so every feature is treated
/// symmetrically.
fn solve_constrained_wls(
    coalitions: &[Vec<bool>],
    weights: &[f64],
    v: &[f64],
    phi0: f64,
    delta: f64,
) -> Result<Vec<f64>, ImportanceError> {
    let n = coalitions[0].len();
    let m = n + 1; // unknowns plus the multiplier
    let mut mat = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for ((coalition, &w), &vs) in coalitions.iter().zip(weights).zip(v) {
        let y = vs - phi0;
        for i in 0..n {
            if !coalition[i] {
                continue;
            }
            for j in 0..n {
                if coalition[j] {
                    mat[i * m + j] += w;
                }
            }
            rhs[i] += w * y;
        }
    }
    for i in 0..n {
        mat[i * m + i] += 1e-6;
        mat[i * m + n] = 1.0;
        mat[n * m + i] = 1.0;
    }
    rhs[n] = delta;
    let mut solution = solve_dense(&mut mat, &mut rhs, m).ok_or(ImportanceError::SingularSystem)?;
    solution.truncate(n);
    Ok(solution)
}

/// In-place Gaussian elimination with partial pivoting.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-12 || !a[pivot * n + col].is_finite() {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut sum = b[col];
        for j in col + 1..n {
            sum -= a[col * n + j] * x[j];
        }
        x[col] = sum / a[col * n + col];
    }
    Some(x)
}

/// Read a flat `feature=value` file into schema order.
pub fn importance_from_file(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
) -> Result<ImportanceVector, ImportanceError> {
    let content = std::fs::read_to_string(path.as_ref())?;
    let mut named: Vec<(String, f64)> = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, value) = line.split_once('=').ok_or_else(|| ImportanceError::BadLine {
            line: i + 1,
            reason: "expected feature=value".into(),
        })?;
        let value: f64 = value.trim().parse().map_err(|_| ImportanceError::BadLine {
            line: i + 1,
            reason: format!("'{}' is not a number", value.trim()),
        })?;
        named.push((name.trim().to_string(), value));
    }
    let mut values = Vec::with_capacity(schema.n_features());
    for feature in &schema.names {
        let v = named
            .iter()
            .find(|(n, _)| n == feature)
            .map(|(_, v)| *v)
            .ok_or_else(|| ImportanceError::MissingFeature(feature.clone()))?;
        if v < 0.0 {
            return Err(ImportanceError::NegativeImportance(feature.clone()));
        }
        values.push(v);
    }
    ImportanceVector::new(values, format!("file:{}", path.as_ref().display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Deterministic 2-class model whose class-1 probability is an affine
    /// clamp of a linear score; handy for exact Shapley checks.
    struct LinearProbModel {
        coef: Vec<f64>,
        bias: f64,
    }

    impl BlackBoxModel for LinearProbModel {
        fn n_features(&self) -> usize {
            self.coef.len()
        }
        fn n_classes(&self) -> usize {
            2
        }
        fn predict_proba(&self, batch: &[Instance]) -> Result<Vec<Vec<f64>>, BlackBoxError> {
            Ok(batch
                .iter()
                .map(|x| {
                    let score: f64 =
                        x.values.iter().zip(&self.coef).map(|(v, c)| v * c).sum::<f64>() + self.bias;
                    let p1 = score.clamp(0.0, 1.0);
                    vec![1.0 - p1, p1]
                })
                .collect())
        }
    }

    fn grid_background() -> Vec<Vec<f64>> {
        let mut bg = Vec::new();
        for a in [0.1, 0.3, 0.5] {
            for b in [0.2, 0.4, 0.6] {
                bg.push(vec![a, b]);
            }
        }
        bg
    }

    /// Brute-force Shapley values by full enumeration of coalitions.
    fn exact_shapley(model: &dyn BlackBoxModel, background: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let class = {
            let p = model.predict_proba(&[Instance::new(x.to_vec())]).unwrap().remove(0);
            PredictionRecord::from_proba(p).label
        };
        let value = |mask: usize| -> f64 {
            let mixed: Vec<Instance> = background
                .iter()
                .map(|bg| {
                    Instance::new(
                        (0..n).map(|j| if mask >> j & 1 == 1 { x[j] } else { bg[j] }).collect(),
                    )
                })
                .collect();
            let p = model.predict_proba(&mixed).unwrap();
            p.iter().map(|v| v[class]).sum::<f64>() / background.len() as f64
        };
        let fact = |k: usize| -> f64 { (1..=k).map(|v| v as f64).product::<f64>().max(1.0) };
        let mut phi = vec![0.0; n];
        for (i, p) in phi.iter_mut().enumerate() {
            for mask in 0..(1usize << n) {
                if mask >> i & 1 == 1 {
                    continue;
                }
                let s = (mask as u64).count_ones() as usize;
                let w = fact(s) * fact(n - s - 1) / fact(n);
                *p += w * (value(mask | 1 << i) - value(mask));
            }
        }
        phi
    }

    #[test]
    fn ignored_feature_gets_zero_importance() {
        let model = LinearProbModel { coef: vec![1.0, 0.0], bias: 0.0 };
        let bg = grid_background();
        let imp = kernel_shap(&model, &bg, &[Instance::new(vec![0.9, 0.9])], 8, 3).unwrap();
        assert!(imp.get(1).abs() <= 0.02, "ignored feature importance {}", imp.get(1));
        assert!(imp.get(0) > 0.0);
    }

    #[test]
    fn symmetric_model_splits_importance() {
        let model = LinearProbModel { coef: vec![0.5, 0.5], bias: 0.0 };
        // i.i.d. background over both features
        let mut bg = Vec::new();
        for a in [0.1, 0.4, 0.7] {
            for b in [0.1, 0.4, 0.7] {
                bg.push(vec![a, b]);
            }
        }
        let imp = kernel_shap(&model, &bg, &[Instance::new(vec![0.8, 0.8])], 8, 3).unwrap();
        let (a, b) = (imp.get(0), imp.get(1));
        assert!((a - b).abs() / a.max(b) < 0.05, "asymmetric: {a} vs {b}");
    }

    #[test]
    fn two_feature_estimate_matches_enumeration() {
        let model = LinearProbModel { coef: vec![0.6, 0.3], bias: 0.05 };
        let bg = grid_background();
        let x = vec![0.7, 0.9];
        let exact = exact_shapley(&model, &bg, &x);
        let est = shap_values(&model, &bg, &Instance::new(x), 8, 17).unwrap();
        for (e, s) in exact.iter().zip(&est) {
            assert!((e - s).abs() < 1e-6, "exact {e} vs estimated {s}");
        }
    }

    #[test]
    fn additivity_holds_on_linear_model() {
        let model = LinearProbModel { coef: vec![0.3, 0.2, 0.25], bias: 0.1 };
        let bg: Vec<Vec<f64>> = vec![
            vec![0.1, 0.5, 0.3],
            vec![0.4, 0.2, 0.6],
            vec![0.7, 0.8, 0.1],
            vec![0.2, 0.3, 0.9],
        ];
        let x = vec![0.9, 0.7, 0.5];
        let phi = shap_values(&model, &bg, &Instance::new(x.clone()), 64, 5).unwrap();
        let f_x = model.predict_proba(&[Instance::new(x)]).unwrap()[0][1];
        let baseline: f64 = bg
            .iter()
            .map(|b| model.predict_proba(&[Instance::new(b.clone())]).unwrap()[0][1])
            .sum::<f64>()
            / bg.len() as f64;
        let total: f64 = phi.iter().sum();
        assert!((total - (f_x - baseline)).abs() < 1e-3);
    }

    #[test]
    fn sampled_path_ranks_dominant_feature() {
        // 8 features force the sampling branch at this budget (2^8-2 > 64)
        let mut coef = vec![0.02; 8];
        coef[2] = 0.6;
        let model = LinearProbModel { coef, bias: 0.05 };
        let bg: Vec<Vec<f64>> = (0..10)
            .map(|i| (0..8).map(|j| ((i * 8 + j) as f64 * 0.193).fract() * 0.5).collect())
            .collect();
        let x = Instance::new(vec![0.9; 8]);
        let imp = kernel_shap(&model, &bg, std::slice::from_ref(&x), 64, 21).unwrap();
        assert_eq!(imp.argmax_feature(), 2);
        // efficiency constraint holds exactly even under sampling
        let phi = shap_values(&model, &bg, &x, 64, 21).unwrap();
        let f_x = model.predict_proba(std::slice::from_ref(&x)).unwrap()[0][1];
        let baseline: f64 = bg
            .iter()
            .map(|b| model.predict_proba(&[Instance::new(b.clone())]).unwrap()[0][1])
            .sum::<f64>()
            / bg.len() as f64;
        assert!((phi.iter().sum::<f64>() - (f_x - baseline)).abs() < 1e-9);
    }

    #[test]
    fn determinism_bit_identical() {
        let model = LinearProbModel { coef: vec![0.4, 0.3, 0.2, 0.1], bias: 0.0 };
        let bg: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..4).map(|j| ((i * 4 + j) as f64 * 0.37).fract()).collect())
            .collect();
        let x = Instance::new(vec![0.9, 0.8, 0.7, 0.6]);
        let a = kernel_shap(&model, &bg, std::slice::from_ref(&x), 40, 99).unwrap();
        let b = kernel_shap(&model, &bg, std::slice::from_ref(&x), 40, 99).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn ranking_invariant_under_scaling() {
        let v = ImportanceVector::new(vec![0.2, 0.7, 0.5], "test").unwrap();
        let scaled = ImportanceVector::new(vec![0.2 * 3.5, 0.7 * 3.5, 0.5 * 3.5], "test").unwrap();
        assert_eq!(v.argmax_feature(), scaled.argmax_feature());
        assert_eq!(v.top_pair(), scaled.top_pair());
        assert_eq!(v.top_pair(), Some((1, 2)));
    }

    #[test]
    fn degenerate_background_rejected() {
        let model = LinearProbModel { coef: vec![1.0, 0.0], bias: 0.0 };
        let bg = vec![vec![0.5, 0.5]; 4];
        let err = shap_values(&model, &bg, &Instance::new(vec![0.9, 0.9]), 8, 0);
        assert!(matches!(err, Err(ImportanceError::DegenerateBackground)));
    }

    #[test]
    fn from_file_happy_path_and_errors() {
        let schema =
            FeatureSchema::numeric(vec!["a".into(), "b".into()], vec![]).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a=0.3\nb=0.7").unwrap();
        let v = importance_from_file(f.path(), &schema).unwrap();
        assert_eq!(v.values(), &[0.3, 0.7]);

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a=0.3").unwrap();
        assert!(matches!(
            importance_from_file(f.path(), &schema),
            Err(ImportanceError::MissingFeature(n)) if n == "b"
        ));

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a=0\nb=0").unwrap();
        assert!(matches!(importance_from_file(f.path(), &schema), Err(ImportanceError::AllZero)));

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a=-0.1\nb=0.5").unwrap();
        assert!(matches!(
            importance_from_file(f.path(), &schema),
            Err(ImportanceError::NegativeImportance(n)) if n == "a"
        ));
    }
}
