//! End-to-end pipeline: neighborhood selection, upsampling, importance
//! estimation, tree induction, and factual/counterfactual rule extraction.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::blackbox::{predict_records, BlackBoxError, BlackBoxModel, PredictionRecord};
use crate::dataset::{Dataset, DatasetError, FeatureSchema, Instance, Metric};
use crate::importance::{kernel_shap, ImportanceError, ImportanceVector};
use crate::neighborhood::{
    assemble_with_context, density_clusters, Neighborhood, NeighborhoodError, NeighborhoodParams,
    Stratification,
};
use crate::optics::DensityClustering;
use crate::oversampling::{mark_in_danger, upsample, OversampleError};
use crate::tree::{build_tree, ExplanationTree, SplitExpr, TrainingSample, TreeError, TreeParams};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] BlackBoxError),
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
    #[error(transparent)]
    Oversample(#[from] OversampleError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("no leaf is labeled differently from the explained instance")]
    NoCounterfactualLeaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfKind {
    NearestNeighbor,
    Medoid,
}

impl std::str::FromStr for CfKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest" | "nearest_neighbor" => Ok(CfKind::NearestNeighbor),
            "medoid" => Ok(CfKind::Medoid),
            other => Err(format!("unknown counterfactual kind '{other}' (expected nearest or medoid)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExplainParams {
    pub neighborhood: NeighborhoodParams,
    pub tree: TreeParams,
    /// Neighbor count for both the isolation vote and SMOTE interpolation.
    pub smote_k: usize,
    /// Equalize class counts inside the neighborhood when upsampling.
    pub smote_balance: bool,
    pub counterfactual: CfKind,
    /// Shapley coalition budget; `None` picks an exhaustive-or-sampled
    /// default from the feature count.
    pub n_coalitions: Option<usize>,
    /// Cap on the number of neighborhood rows used as the SHAP background.
    pub background_cap: usize,
}

impl Default for ExplainParams {
    fn default() -> Self {
        ExplainParams {
            neighborhood: NeighborhoodParams {
                k: 20,
                sigma: 5,
                stratification: Stratification::Global,
                metric: Metric::Euclidean,
            },
            tree: TreeParams::default(),
            smote_k: 5,
            smote_balance: true,
            counterfactual: CfKind::NearestNeighbor,
            n_coalitions: None,
            background_cap: 100,
        }
    }
}

fn auto_coalitions(n_features: usize) -> usize {
    let budget = 2 * n_features + 64;
    let exhaustive = if n_features < 26 { (1usize << n_features) - 2 } else { usize::MAX };
    budget.min(exhaustive).max(2 * n_features)
}

/// One root-to-leaf conjunction. The `bool` is the branch direction: `true`
/// renders the condition with `<`, `false` with `>=`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub conditions: Vec<(SplitExpr, bool)>,
    pub label: usize,
    pub confidence: f64,
    /// Training-sample rows satisfying every condition.
    pub coverage_idx: Vec<usize>,
}

impl Rule {
    pub fn satisfied_by(&self, values: &[f64]) -> bool {
        self.conditions.iter().all(|(expr, left)| expr.goes_left(values) == *left)
    }

    /// Distinct features across all conditions; oblique conditions
    /// contribute both of theirs.
    pub fn feature_set(&self) -> Vec<usize> {
        let mut fs: Vec<usize> = self
            .conditions
            .iter()
            .flat_map(|(expr, _)| expr.features())
            .collect();
        fs.sort_unstable();
        fs.dedup();
        fs
    }

    /// Rows of `data` satisfying the rule.
    pub fn coverage_on(&self, data: &Dataset) -> Vec<usize> {
        (0..data.n_rows()).filter(|&i| self.satisfied_by(data.row(i))).collect()
    }

    pub fn coverage_fraction(&self, data: &Dataset) -> f64 {
        self.coverage_on(data).len() as f64 / data.n_rows() as f64
    }
}

#[derive(Debug, Clone)]
pub struct Counterfactual {
    pub rule: Rule,
    pub example: Instance,
    /// Dataset row the example came from; counterfactuals are always real rows.
    pub example_row: usize,
    pub kind: CfKind,
    pub distance: f64,
}

/// Everything produced for one explained instance, with full provenance.
#[derive(Debug, Clone)]
pub struct ExplanationBundle {
    pub factual: Rule,
    pub counterfactuals: Vec<Counterfactual>,
    pub tree: ExplanationTree,
    pub neighborhood: Neighborhood,
    pub sample: TrainingSample,
    pub importances: ImportanceVector,
    pub x: Instance,
    pub x_pred: PredictionRecord,
    pub seed: u64,
    pub low_fidelity: bool,
    pub warnings: Vec<String>,
}

impl ExplanationBundle {
    /// Real dataset rows of the neighborhood (the fidelity evaluation set).
    pub fn neighborhood_rows(&self) -> &[usize] {
        &self.neighborhood.all_idx
    }
}

/// Reusable pipeline context: caches whole-dataset predictions and the
/// density clustering so repeated `explain` calls stay cheap and
/// thread-safe.
pub struct Explainer {
    data: Dataset,
    model: Arc<dyn BlackBoxModel>,
    preds: Vec<PredictionRecord>,
    cluster_cache: Mutex<HashMap<(usize, Metric), Arc<DensityClustering>>>,
}

impl Explainer {
    pub fn new(data: Dataset, model: Arc<dyn BlackBoxModel>) -> Result<Self, ExplainError> {
        let instances: Vec<Instance> = (0..data.n_rows()).map(|i| data.instance(i)).collect();
        let preds = predict_records(model.as_ref(), &instances)?;
        Ok(Explainer { data, model, preds, cluster_cache: Mutex::new(HashMap::new()) })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn model(&self) -> &dyn BlackBoxModel {
        self.model.as_ref()
    }

    /// Cached black-box predictions for every dataset row.
    pub fn row_predictions(&self) -> &[PredictionRecord] {
        &self.preds
    }

    fn clustering(&self, sigma: usize, metric: Metric) -> Result<Arc<DensityClustering>, ExplainError> {
        let mut cache = self.cluster_cache.lock().expect("cluster cache lock");
        if let Some(c) = cache.get(&(sigma, metric)) {
            return Ok(Arc::clone(c));
        }
        let c = Arc::new(density_clusters(&self.data, sigma, metric)?);
        cache.insert((sigma, metric), Arc::clone(&c));
        Ok(c)
    }

    pub fn explain(
        &self,
        x: &Instance,
        params: &ExplainParams,
        seed: u64,
    ) -> Result<ExplanationBundle, ExplainError> {
        if x.values.iter().any(|v| !v.is_finite()) {
            return Err(ExplainError::Dataset(DatasetError::Schema(
                "instance contains a non-finite value".into(),
            )));
        }
        let model = self.model.as_ref();
        let n_classes = model.n_classes();
        let x_pred = predict_records(model, std::slice::from_ref(x))?.remove(0);

        let clustering = self.clustering(params.neighborhood.sigma, params.neighborhood.metric)?;
        let nbhd = assemble_with_context(
            &self.data,
            &self.preds,
            &clustering,
            x,
            x_pred.label,
            n_classes,
            &params.neighborhood,
        )?;
        let mut warnings = nbhd.warnings.clone();

        let danger = mark_in_danger(&nbhd, &self.data, params.smote_k, params.neighborhood.metric);
        let aug = upsample(
            &nbhd,
            &self.data,
            &danger,
            model,
            params.smote_balance,
            params.smote_k,
            params.neighborhood.metric,
            seed.wrapping_add(1),
        )?;

        let importances = self.neighborhood_importance(x, &nbhd, params, seed, &mut warnings)?;

        let sample = TrainingSample::from_parts(&self.data, &nbhd, &aug, n_classes);
        let tree = build_tree(&sample, &importances, &params.tree)?;

        let factual = extract_factual(&tree, x, &sample);
        let low_fidelity = factual.label != x_pred.label;
        if low_fidelity {
            warnings.push(format!(
                "low fidelity: factual rule predicts class {} but the model predicts {}",
                factual.label, x_pred.label
            ));
        }

        let counterfactuals = self.counterfactuals_for(&tree, x, &x_pred, &sample, params, &mut warnings);

        Ok(ExplanationBundle {
            factual,
            counterfactuals,
            tree,
            neighborhood: nbhd,
            sample,
            importances,
            x: x.clone(),
            x_pred,
            seed,
            low_fidelity,
            warnings,
        })
    }

    /// SHAP over the neighborhood: target is the explained instance, the
    /// background a capped sample of the neighborhood's real rows. A
    /// label-homogeneous neighborhood carries no signal for coalition
    /// regression, so importances degrade to uniform with a warning.
    fn neighborhood_importance(
        &self,
        x: &Instance,
        nbhd: &Neighborhood,
        params: &ExplainParams,
        seed: u64,
        warnings: &mut Vec<String>,
    ) -> Result<ImportanceVector, ExplainError> {
        let n_features = self.data.n_features();
        let uniform = |why: &str, warnings: &mut Vec<String>| {
            warnings.push(format!("importance fell back to uniform: {why}"));
            ImportanceVector::new(vec![1.0; n_features], "uniform").expect("uniform is nonzero")
        };

        let homogeneous = nbhd.preds.iter().all(|p| p.label == nbhd.preds[0].label);
        if homogeneous {
            return Ok(uniform("neighborhood is label-homogeneous", warnings));
        }

        let mut rows: Vec<usize> = nbhd.all_idx.clone();
        if rows.len() > params.background_cap {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
            rows.shuffle(&mut rng);
            rows.truncate(params.background_cap);
            rows.sort_unstable();
        }
        let background: Vec<Vec<f64>> = rows.iter().map(|&i| self.data.row(i).to_vec()).collect();
        let n_coalitions = params.n_coalitions.unwrap_or_else(|| auto_coalitions(n_features));
        match kernel_shap(self.model.as_ref(), &background, std::slice::from_ref(x), n_coalitions, seed)
        {
            Ok(imp) => Ok(imp),
            Err(ImportanceError::AllZero) => Ok(uniform("all attributions were zero", warnings)),
            Err(ImportanceError::DegenerateBackground) => {
                Ok(uniform("background rows are identical", warnings))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Global stratification emits one counterfactual per opposite class
    /// present in the tree; local emits the single nearest one.
    fn counterfactuals_for(
        &self,
        tree: &ExplanationTree,
        x: &Instance,
        x_pred: &PredictionRecord,
        sample: &TrainingSample,
        params: &ExplainParams,
        warnings: &mut Vec<String>,
    ) -> Vec<Counterfactual> {
        let metric = params.neighborhood.metric;
        let mut out = Vec::new();
        match params.neighborhood.stratification {
            Stratification::Local => {
                match extract_counterfactual(
                    tree,
                    x,
                    x_pred.label,
                    sample,
                    &self.data,
                    metric,
                    params.counterfactual,
                    None,
                ) {
                    Ok(cf) => out.push(cf),
                    Err(ExplainError::NoCounterfactualLeaf) => {
                        warnings.push("no counterfactual leaf in the tree".into())
                    }
                    Err(_) => unreachable!("counterfactual extraction only fails on missing leaves"),
                }
            }
            Stratification::Global => {
                for class in 0..tree.n_classes {
                    if class == x_pred.label {
                        continue;
                    }
                    match extract_counterfactual(
                        tree,
                        x,
                        x_pred.label,
                        sample,
                        &self.data,
                        metric,
                        params.counterfactual,
                        Some(class),
                    ) {
                        Ok(cf) => out.push(cf),
                        Err(ExplainError::NoCounterfactualLeaf) => {}
                        Err(_) => unreachable!(),
                    }
                }
                if out.is_empty() {
                    warnings.push("no counterfactual leaf in the tree".into());
                }
            }
        }
        out
    }
}

/// Convenience one-shot pipeline over fresh data and model handles.
pub fn explain(
    data: &Dataset,
    model: Arc<dyn BlackBoxModel>,
    x: &Instance,
    params: &ExplainParams,
    seed: u64,
) -> Result<ExplanationBundle, ExplainError> {
    Explainer::new(data.clone(), model)?.explain(x, params, seed)
}

/// The root-to-leaf path of the explained instance, with coverage over the
/// training sample.
pub fn extract_factual(tree: &ExplanationTree, x: &Instance, sample: &TrainingSample) -> Rule {
    let mut conditions = Vec::new();
    let mut node = &tree.root;
    while let (Some(split), Some(children)) = (&node.split, &node.children) {
        let left = split.goes_left(&x.values);
        conditions.push((split.clone(), left));
        node = if left { &children.0 } else { &children.1 };
    }
    let rule = Rule {
        conditions,
        label: node.majority,
        confidence: node.leaf_confidence,
        coverage_idx: Vec::new(),
    };
    let coverage_idx = (0..sample.len())
        .filter(|&r| rule.satisfied_by(&sample.rows[r].values))
        .collect();
    Rule { coverage_idx, ..rule }
}

/// Counterfactual extraction over the differently-labeled leaves.
///
/// `nearest_neighbor`: nearest real row across those leaves becomes the
/// example and its leaf path the rule. `medoid`: each leaf's real-row
/// medoid competes and the winning leaf's path is returned. All ties break
/// by dataset row index. With `class_filter`, only leaves of that class are
/// considered.
#[allow(clippy::too_many_arguments)]
pub fn extract_counterfactual(
    tree: &ExplanationTree,
    x: &Instance,
    x_label: usize,
    sample: &TrainingSample,
    data: &Dataset,
    metric: Metric,
    kind: CfKind,
    class_filter: Option<usize>,
) -> Result<Counterfactual, ExplainError> {
    let candidate_leaves: Vec<(Vec<(SplitExpr, bool)>, &crate::tree::TreeNode)> = tree
        .leaf_paths()
        .into_iter()
        .filter(|(_, leaf)| leaf.majority != x_label)
        .filter(|(_, leaf)| class_filter.map_or(true, |c| leaf.majority == c))
        .collect();
    if candidate_leaves.is_empty() {
        return Err(ExplainError::NoCounterfactualLeaf);
    }

    let real_rows_of = |leaf: &crate::tree::TreeNode| -> Vec<usize> {
        leaf.data_snapshot
            .iter()
            .filter_map(|&r| match sample.rows[r].source {
                crate::tree::RowSource::Real(i) => Some(i),
                crate::tree::RowSource::Synthetic(_) => None,
            })
            .collect()
    };
    let dist_to_x = |row: usize| {
        data.distance(x, &data.instance(row), metric).expect("schema-aligned rows")
    };

    let mut best: Option<(f64, usize, usize)> = None; // (distance, dataset row, leaf position)
    for (pos, (_, leaf)) in candidate_leaves.iter().enumerate() {
        let mut rows = real_rows_of(leaf);
        rows.sort_unstable();
        match kind {
            CfKind::NearestNeighbor => {
                for row in rows {
                    let d = dist_to_x(row);
                    if best.map_or(true, |(bd, br, _)| d < bd || (d == bd && row < br)) {
                        best = Some((d, row, pos));
                    }
                }
            }
            CfKind::Medoid => {
                if let Some(medoid) = leaf_medoid(&rows, data, metric) {
                    let d = dist_to_x(medoid);
                    if best.map_or(true, |(bd, br, _)| d < bd || (d == bd && medoid < br)) {
                        best = Some((d, medoid, pos));
                    }
                }
            }
        }
    }
    let (distance, example_row, pos) =
        best.ok_or(ExplainError::NoCounterfactualLeaf)?; // leaves held only synthetic rows
    let (path, leaf) = &candidate_leaves[pos];
    let rule = Rule {
        conditions: path.clone(),
        label: leaf.majority,
        confidence: leaf.leaf_confidence,
        coverage_idx: (0..sample.len())
            .filter(|&r| {
                path.iter().all(|(expr, left)| expr.goes_left(&sample.rows[r].values) == *left)
            })
            .collect(),
    };
    Ok(Counterfactual {
        rule,
        example: data.instance(example_row),
        example_row,
        kind,
        distance,
    })
}

/// Row minimizing the summed in-leaf distance; ties by row index.
fn leaf_medoid(rows: &[usize], data: &Dataset, metric: Metric) -> Option<usize> {
    if rows.is_empty() {
        return None;
    }
    let mut best: Option<(f64, usize)> = None;
    for &candidate in rows {
        let total: f64 = rows
            .iter()
            .map(|&other| {
                data.distance(&data.instance(candidate), &data.instance(other), metric)
                    .expect("schema-aligned rows")
            })
            .sum();
        if best.map_or(true, |(bt, br)| total < bt || (total == bt && candidate < br)) {
            best = Some((total, candidate));
        }
    }
    best.map(|(_, r)| r)
}

/// Trim a 2-decimal confidence like the printed rule format: `1.00` -> `1.0`,
/// `0.88` stays.
fn format_confidence(c: f64) -> String {
    let s = format!("{c:.2}");
    if let Some(stripped) = s.strip_suffix('0') {
        if !stripped.ends_with('.') {
            return stripped.to_string();
        }
    }
    s
}

/// `IF <cond> AND <cond> THEN class = <label> # <confidence>`.
pub fn render_rule(rule: &Rule, schema: &FeatureSchema) -> String {
    let body = if rule.conditions.is_empty() {
        "TRUE".to_string()
    } else {
        rule.conditions
            .iter()
            .map(|(expr, left)| expr.render_condition(schema, *left))
            .collect::<Vec<_>>()
            .join(" AND ")
    };
    format!(
        "IF {body} THEN class = {} # {}",
        schema.class_name(rule.label),
        format_confidence(rule.confidence)
    )
}
