//! The explainable model: a decision tree with importance-weighted gain,
//! confidence-weighted class masses and two-feature oblique splits.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::blackbox::PredictionRecord;
use crate::dataset::{Dataset, FeatureSchema, Instance};
use crate::importance::ImportanceVector;
use crate::neighborhood::Neighborhood;
use crate::oversampling::AugmentedSample;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("class mass vector sums to zero")]
    ZeroMass,
    #[error("training sample is empty")]
    EmptySample,
    #[error("both classes required to fit a linear boundary")]
    SingleClass,
    #[error("linear boundary is parallel to the split feature axis")]
    DegenerateBoundary,
    #[error("instance has {got} features, tree expects {expected}")]
    SchemaMismatch { expected: usize, got: usize },
}

/// Subgradient solver settings for the oblique boundary.
const SVM_LAMBDA: f64 = 1e-2;
const SVM_EPOCHS: usize = 2000;
const SVM_SEED: u64 = 0x0b11_9e5;

/// A node test: either an axis threshold or a two-feature linear inequality
/// `value(feature) < alpha * value(partner) + beta`.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitExpr {
    Axis { feature: usize, threshold: f64 },
    Oblique { feature: usize, partner: usize, alpha: f64, beta: f64 },
}

impl SplitExpr {
    /// True when the row satisfies the condition (takes the left branch).
    /// Rows exactly on the boundary go right.
    pub fn goes_left(&self, row: &[f64]) -> bool {
        match *self {
            SplitExpr::Axis { feature, threshold } => row[feature] < threshold,
            SplitExpr::Oblique { feature, partner, alpha, beta } => {
                row[feature] < alpha * row[partner] + beta
            }
        }
    }

    /// The feature the split is "about": the axis feature or the oblique
    /// left-hand side.
    pub fn split_feature(&self) -> usize {
        match *self {
            SplitExpr::Axis { feature, .. } => feature,
            SplitExpr::Oblique { feature, .. } => feature,
        }
    }

    /// All features the condition reads.
    pub fn features(&self) -> Vec<usize> {
        match *self {
            SplitExpr::Axis { feature, .. } => vec![feature],
            SplitExpr::Oblique { feature, partner, .. } => vec![feature, partner],
        }
    }

    /// Condition text for one branch, e.g. `x2 < 7.92` or
    /// `x2 < 1.00 * x1+12.36`; the right branch prints `>=`.
    pub fn render_condition(&self, schema: &FeatureSchema, left: bool) -> String {
        let op = if left { "<" } else { ">=" };
        match *self {
            SplitExpr::Axis { feature, threshold } => {
                format!("{} {} {:.2}", schema.names[feature], op, threshold)
            }
            SplitExpr::Oblique { feature, partner, alpha, beta } => {
                format!(
                    "{} {} {:.2} * {}{:+.2}",
                    schema.names[feature], op, alpha, schema.names[partner], beta
                )
            }
        }
    }
}

/// Where a training row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSource {
    /// Index into the original dataset.
    Real(usize),
    /// Index into the synthetic block of the augmented sample.
    Synthetic(usize),
}

/// One row of the tree's training sample with its black-box prediction.
#[derive(Debug, Clone)]
pub struct SampleRow {
    pub values: Vec<f64>,
    pub pred: PredictionRecord,
    pub source: RowSource,
}

/// The rows a tree is trained on: real neighborhood members plus synthetic
/// upsamples, in a fixed order (real first).
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub rows: Vec<SampleRow>,
    pub n_classes: usize,
}

impl TrainingSample {
    pub fn from_parts(data: &Dataset, nbhd: &Neighborhood, aug: &AugmentedSample, n_classes: usize) -> Self {
        let mut rows = Vec::with_capacity(nbhd.all_idx.len() + aug.synth_x.len());
        for (pos, &i) in nbhd.all_idx.iter().enumerate() {
            rows.push(SampleRow {
                values: data.row(i).to_vec(),
                pred: nbhd.preds[pos].clone(),
                source: RowSource::Real(i),
            });
        }
        for (s, (values, pred)) in aug.synth_x.iter().zip(&aug.synth_preds).enumerate() {
            rows.push(SampleRow {
                values: values.clone(),
                pred: pred.clone(),
                source: RowSource::Synthetic(s),
            });
        }
        TrainingSample { rows, n_classes }
    }

    pub fn from_neighborhood(data: &Dataset, nbhd: &Neighborhood, n_classes: usize) -> Self {
        let rows = nbhd
            .all_idx
            .iter()
            .zip(&nbhd.preds)
            .map(|(&i, pred)| SampleRow {
                values: data.row(i).to_vec(),
                pred: pred.clone(),
                source: RowSource::Real(i),
            })
            .collect();
        TrainingSample { rows, n_classes }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Class mass of one row: the model's confidence on its predicted class,
    /// the remainder spread over the other classes; or a hard unit mass when
    /// confidence weighting is off.
    pub fn masses(&self, row: usize, weighting: bool) -> Vec<f64> {
        let pred = &self.rows[row].pred;
        let mut m = vec![0.0; self.n_classes];
        if weighting {
            let rest = if self.n_classes > 1 {
                (1.0 - pred.confidence) / (self.n_classes - 1) as f64
            } else {
                0.0
            };
            for (c, slot) in m.iter_mut().enumerate() {
                *slot = if c == pred.label { pred.confidence } else { rest };
            }
        } else {
            m[pred.label] = 1.0;
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_gain: f64,
    pub oblique_enabled: bool,
    pub confidence_weighting: bool,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 5,
            min_samples_split: 5,
            min_gain: 1e-4,
            oblique_enabled: true,
            confidence_weighting: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub split: Option<SplitExpr>,
    /// `(left, right)`: left holds rows satisfying the condition.
    pub children: Option<Box<(TreeNode, TreeNode)>>,
    /// Confidence-weighted class mass; for internal nodes this is exactly
    /// the sum of the children's histograms.
    pub class_hist: Vec<f64>,
    pub n_rows: usize,
    /// Indices into the training sample of the rows reaching this node.
    pub data_snapshot: Vec<usize>,
    pub majority: usize,
    pub leaf_confidence: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// A built tree plus the sample metadata needed to route instances.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationTree {
    pub root: TreeNode,
    pub n_features: usize,
    pub n_classes: usize,
}

/// H(X) = -sum p(l) log2 p(l) over mass fractions, with 0 log 0 = 0.
pub fn entropy(hist: &[f64]) -> Result<f64, TreeError> {
    let total: f64 = hist.iter().sum();
    if total <= 0.0 {
        return Err(TreeError::ZeroMass);
    }
    let mut h = 0.0;
    for &m in hist {
        if m > 0.0 {
            let p = m / total;
            h -= p * p.log2();
        }
    }
    Ok(h)
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Information gain of a candidate split over the given rows. An empty
/// branch yields gain 0.
pub fn info_gain(
    sample: &TrainingSample,
    rows: &[usize],
    expr: &SplitExpr,
    weighting: bool,
) -> f64 {
    let n_classes = sample.n_classes;
    let mut left = vec![0.0; n_classes];
    let mut right = vec![0.0; n_classes];
    for &r in rows {
        let m = sample.masses(r, weighting);
        if expr.goes_left(&sample.rows[r].values) {
            add_into(&mut left, &m);
        } else {
            add_into(&mut right, &m);
        }
    }
    let lmass: f64 = left.iter().sum();
    let rmass: f64 = right.iter().sum();
    if lmass == 0.0 || rmass == 0.0 {
        return 0.0;
    }
    let total = lmass + rmass;
    let mut parent = vec![0.0; n_classes];
    add_into(&mut parent, &left);
    add_into(&mut parent, &right);
    let h = entropy(&parent).expect("non-empty parent");
    h - (lmass / total) * entropy(&left).unwrap() - (rmass / total) * entropy(&right).unwrap()
}

/// Importance-weighted gain: information gain times Imp of the split
/// feature (the oblique left-hand side for oblique candidates).
pub fn lux_gain(
    sample: &TrainingSample,
    rows: &[usize],
    expr: &SplitExpr,
    imp: &ImportanceVector,
    weighting: bool,
) -> f64 {
    info_gain(sample, rows, expr, weighting) * imp.get(expr.split_feature())
}

/// Max-margin linear boundary on two features by seeded hinge-loss
/// subgradient descent; returns `(alpha, beta)` of `f1 = alpha * f2 + beta`
/// in original units, where `f1` is the first coordinate of `points`.
pub fn fit_linear_boundary(points: &[(f64, f64)], labels: &[bool]) -> Result<(f64, f64), TreeError> {
    if !labels.contains(&true) || !labels.contains(&false) {
        return Err(TreeError::SingleClass);
    }
    let n = points.len() as f64;
    let (mut mu1, mut mu2) = (0.0, 0.0);
    for &(a, b) in points {
        mu1 += a;
        mu2 += b;
    }
    mu1 /= n;
    mu2 /= n;
    let (mut var1, mut var2) = (0.0, 0.0);
    for &(a, b) in points {
        var1 += (a - mu1) * (a - mu1);
        var2 += (b - mu2) * (b - mu2);
    }
    let sd1 = (var1 / n).sqrt().max(1e-12);
    let sd2 = (var2 / n).sqrt().max(1e-12);

    let z: Vec<(f64, f64)> =
        points.iter().map(|&(a, b)| ((a - mu1) / sd1, (b - mu2) / sd2)).collect();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(SVM_SEED);
    let mut order: Vec<usize> = (0..points.len()).collect();
    let (mut w1, mut w2, mut b) = (0.0f64, 0.0f64, 0.0f64);
    let mut t = 0usize;
    for _ in 0..SVM_EPOCHS {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (SVM_LAMBDA * t as f64);
            let margin = y[i] * (w1 * z[i].0 + w2 * z[i].1 + b);
            let shrink = 1.0 - eta * SVM_LAMBDA;
            w1 *= shrink;
            w2 *= shrink;
            if margin < 1.0 {
                w1 += eta * y[i] * z[i].0;
                w2 += eta * y[i] * z[i].1;
                b += eta * y[i];
            }
        }
    }

    if w1.abs() < 1e-8 {
        return Err(TreeError::DegenerateBoundary);
    }
    // w1*(f1-mu1)/sd1 + w2*(f2-mu2)/sd2 + b = 0, re-expressed as f1 = alpha*f2 + beta
    let a1 = w1 / sd1;
    let a2 = w2 / sd2;
    let c = b - w1 * mu1 / sd1 - w2 * mu2 / sd2;
    let alpha = -a2 / a1;
    let beta = -c / a1;
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(TreeError::DegenerateBoundary);
    }
    Ok((alpha, beta))
}

fn node_hist(sample: &TrainingSample, rows: &[usize], weighting: bool) -> Vec<f64> {
    let mut hist = vec![0.0; sample.n_classes];
    for &r in rows {
        add_into(&mut hist, &sample.masses(r, weighting));
    }
    hist
}

fn majority_of(hist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &m) in hist.iter().enumerate() {
        if m > hist[best] {
            best = i;
        }
    }
    best
}

fn homogeneous(sample: &TrainingSample, rows: &[usize]) -> bool {
    let first = sample.rows[rows[0]].pred.label;
    rows.iter().all(|&r| sample.rows[r].pred.label == first)
}

/// Best axis split by a sorted sweep per feature. Features with zero
/// importance never produce a candidate.
fn best_axis_split(
    sample: &TrainingSample,
    rows: &[usize],
    imp: &ImportanceVector,
    weighting: bool,
) -> Option<(SplitExpr, f64)> {
    let n_classes = sample.n_classes;
    let parent = node_hist(sample, rows, weighting);
    let total: f64 = parent.iter().sum();
    let h_parent = entropy(&parent).ok()?;

    let mut best: Option<(SplitExpr, f64)> = None;
    for feature in 0..imp.len() {
        let weight = imp.get(feature);
        if weight <= 0.0 {
            continue;
        }
        let mut vals: Vec<(f64, usize)> =
            rows.iter().map(|&r| (sample.rows[r].values[feature], r)).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let mut left = vec![0.0; n_classes];
        for i in 0..vals.len() - 1 {
            add_into(&mut left, &sample.masses(vals[i].1, weighting));
            if vals[i].0 == vals[i + 1].0 {
                continue;
            }
            let lmass: f64 = left.iter().sum();
            let rmass = total - lmass;
            if lmass == 0.0 || rmass == 0.0 {
                continue;
            }
            let right: Vec<f64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
            let gain = h_parent
                - (lmass / total) * entropy(&left).unwrap()
                - (rmass / total) * entropy(&right).unwrap();
            let gain_lux = gain * weight;
            let threshold = 0.5 * (vals[i].0 + vals[i + 1].0);
            if best.as_ref().map_or(true, |(_, g)| gain_lux > *g) {
                best = Some((SplitExpr::Axis { feature, threshold }, gain_lux));
            }
        }
    }
    best
}

/// Full split selection: best axis candidate versus the oblique candidate
/// on the top-importance feature pair; the oblique split wins only by a
/// strictly larger importance-weighted gain.
pub fn select_split(
    sample: &TrainingSample,
    rows: &[usize],
    imp: &ImportanceVector,
    params: &TreeParams,
) -> Option<SplitExpr> {
    if rows.is_empty() || homogeneous(sample, rows) {
        return None;
    }
    let weighting = params.confidence_weighting;
    let axis = best_axis_split(sample, rows, imp, weighting);
    let axis_gain = axis.as_ref().map_or(0.0, |(_, g)| *g);

    let mut chosen = axis;
    if params.oblique_enabled {
        if let Some((f1, f2)) = imp.top_pair() {
            if let Some(oblique) = fit_oblique_candidate(sample, rows, f1, f2, weighting) {
                let gain = lux_gain(sample, rows, &oblique, imp, weighting);
                if gain > axis_gain {
                    chosen = Some((oblique, gain));
                }
            }
        }
    }
    match chosen {
        Some((expr, gain)) if gain >= params.min_gain => Some(expr),
        _ => None,
    }
}

fn fit_oblique_candidate(
    sample: &TrainingSample,
    rows: &[usize],
    f1: usize,
    f2: usize,
    weighting: bool,
) -> Option<SplitExpr> {
    let hist = node_hist(sample, rows, weighting);
    let majority = majority_of(&hist);
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|&r| (sample.rows[r].values[f1], sample.rows[r].values[f2]))
        .collect();
    let labels: Vec<bool> = rows.iter().map(|&r| sample.rows[r].pred.label == majority).collect();
    match fit_linear_boundary(&points, &labels) {
        Ok((alpha, beta)) => Some(SplitExpr::Oblique { feature: f1, partner: f2, alpha, beta }),
        Err(_) => None, // degenerate fit falls back to the axis split
    }
}

/// Recursively grow the tree over the full training sample.
pub fn build_tree(
    sample: &TrainingSample,
    imp: &ImportanceVector,
    params: &TreeParams,
) -> Result<ExplanationTree, TreeError> {
    if sample.is_empty() {
        return Err(TreeError::EmptySample);
    }
    let rows: Vec<usize> = (0..sample.len()).collect();
    let n_features = sample.rows[0].values.len();
    let root = grow(sample, rows, imp, params, 0);
    Ok(ExplanationTree { root, n_features, n_classes: sample.n_classes })
}

fn grow(
    sample: &TrainingSample,
    rows: Vec<usize>,
    imp: &ImportanceVector,
    params: &TreeParams,
    depth: usize,
) -> TreeNode {
    let weighting = params.confidence_weighting;
    let stop = depth >= params.max_depth || rows.len() < params.min_samples_split;
    let split = if stop { None } else { select_split(sample, &rows, imp, params) };

    match split {
        None => {
            let hist = node_hist(sample, &rows, weighting);
            leaf_from(hist, rows)
        }
        Some(expr) => {
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| expr.goes_left(&sample.rows[r].values));
            if left_rows.is_empty() || right_rows.is_empty() {
                let hist = node_hist(sample, &rows, weighting);
                return leaf_from(hist, rows);
            }
            let left = grow(sample, left_rows, imp, params, depth + 1);
            let right = grow(sample, right_rows, imp, params, depth + 1);
            // parent histogram as the exact sum of the children's
            let mut hist = left.class_hist.clone();
            add_into(&mut hist, &right.class_hist);
            let majority = majority_of(&hist);
            let total: f64 = hist.iter().sum();
            TreeNode {
                split: Some(expr),
                leaf_confidence: hist[majority] / total,
                majority,
                n_rows: rows.len(),
                data_snapshot: rows,
                class_hist: hist,
                children: Some(Box::new((left, right))),
            }
        }
    }
}

fn leaf_from(hist: Vec<f64>, rows: Vec<usize>) -> TreeNode {
    let majority = majority_of(&hist);
    let total: f64 = hist.iter().sum();
    TreeNode {
        split: None,
        children: None,
        leaf_confidence: if total > 0.0 { hist[majority] / total } else { 0.0 },
        majority,
        n_rows: rows.len(),
        data_snapshot: rows,
        class_hist: hist,
    }
}

impl ExplanationTree {
    /// Route an instance to its leaf.
    pub fn predict(&self, x: &Instance) -> Result<PredictionRecord, TreeError> {
        if x.values.len() != self.n_features {
            return Err(TreeError::SchemaMismatch { expected: self.n_features, got: x.values.len() });
        }
        let leaf = self.leaf_for(x)?;
        let total: f64 = leaf.class_hist.iter().sum();
        let proba: Vec<f64> = leaf.class_hist.iter().map(|m| m / total).collect();
        Ok(PredictionRecord {
            label: leaf.majority,
            confidence: leaf.leaf_confidence,
            proba,
        })
    }

    pub fn leaf_for(&self, x: &Instance) -> Result<&TreeNode, TreeError> {
        if x.values.len() != self.n_features {
            return Err(TreeError::SchemaMismatch { expected: self.n_features, got: x.values.len() });
        }
        let mut node = &self.root;
        while let (Some(split), Some(children)) = (&node.split, &node.children) {
            node = if split.goes_left(&x.values) { &children.0 } else { &children.1 };
        }
        Ok(node)
    }

    pub fn depth(&self) -> usize {
        fn d(n: &TreeNode) -> usize {
            match &n.children {
                None => 0,
                Some(c) => 1 + d(&c.0).max(d(&c.1)),
            }
        }
        d(&self.root)
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        fn walk<'a>(n: &'a TreeNode, out: &mut Vec<&'a TreeNode>) {
            match &n.children {
                None => out.push(n),
                Some(c) => {
                    walk(&c.0, out);
                    walk(&c.1, out);
                }
            }
        }
        walk(&self.root, &mut out);
        out
    }

    /// Every node paired with the root-to-node path of `(split, went_left)`
    /// conditions, leaves only.
    pub fn leaf_paths(&self) -> Vec<(Vec<(SplitExpr, bool)>, &TreeNode)> {
        let mut out = Vec::new();
        fn walk<'a>(
            n: &'a TreeNode,
            path: &mut Vec<(SplitExpr, bool)>,
            out: &mut Vec<(Vec<(SplitExpr, bool)>, &'a TreeNode)>,
        ) {
            match (&n.split, &n.children) {
                (Some(split), Some(children)) => {
                    path.push((split.clone(), true));
                    walk(&children.0, path, out);
                    path.pop();
                    path.push((split.clone(), false));
                    walk(&children.1, path, out);
                    path.pop();
                }
                _ => out.push((path.clone(), n)),
            }
        }
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// Stable one-node-per-line text form, depth-indented.
    pub fn serialize(&self, schema: &FeatureSchema) -> String {
        let mut out = String::new();
        fn walk(n: &TreeNode, schema: &FeatureSchema, depth: usize, out: &mut String) {
            let indent = "  ".repeat(depth);
            let hist = n
                .class_hist
                .iter()
                .map(|m| format!("{m:.4}"))
                .collect::<Vec<_>>()
                .join(",");
            match (&n.split, &n.children) {
                (Some(split), Some(children)) => {
                    out.push_str(&format!(
                        "{indent}node rows={} hist=[{hist}] split=\"{}\"\n",
                        n.n_rows,
                        split.render_condition(schema, true)
                    ));
                    walk(&children.0, schema, depth + 1, out);
                    walk(&children.1, schema, depth + 1, out);
                }
                _ => {
                    out.push_str(&format!(
                        "{indent}node rows={} hist=[{hist}] leaf class={} conf={:.4}\n",
                        n.n_rows,
                        schema.class_name(n.majority),
                        n.leaf_confidence
                    ));
                }
            }
        }
        walk(&self.root, schema, 0, &mut out);
        out
    }
}
