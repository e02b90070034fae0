//! Representative-data selection: stratified base neighborhood, inverse
//! sampling around opposite-class anchors, and absorption of intersecting
//! density clusters.

use thiserror::Error;

use crate::blackbox::{predict_records, BlackBoxError, BlackBoxModel, PredictionRecord};
use crate::dataset::{Dataset, Instance, Metric};
use crate::optics::{optics_xi, DensityClustering};

/// Steepness parameter for xi-extraction of OPTICS clusters.
pub const OPTICS_XI: f64 = 0.05;

#[derive(Debug, Error)]
pub enum NeighborhoodError {
    #[error("neighborhood is empty")]
    EmptyNeighborhood,
    #[error("dataset has {n} rows but clustering needs at least sigma={sigma}")]
    TooFewRows { n: usize, sigma: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("model error: {0}")]
    Model(#[from] BlackBoxError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratification {
    /// Cap the base neighborhood at the distance to the nearest row whose
    /// model label differs from the explained instance's.
    Local,
    /// No cap; all classes sampled across the whole dataset.
    Global,
}

impl std::str::FromStr for Stratification {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(Stratification::Local),
            "global" => Ok(Stratification::Global),
            other => Err(format!("unknown stratification '{other}' (expected local or global)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NeighborhoodParams {
    /// Base neighborhood size; split evenly across classes.
    pub k: usize,
    /// Minimum cluster size for the density clustering.
    pub sigma: usize,
    pub stratification: Stratification,
    pub metric: Metric,
}

impl NeighborhoodParams {
    pub fn validate(&self, n_classes: usize) -> Result<(), NeighborhoodError> {
        if self.k < n_classes {
            return Err(NeighborhoodError::InvalidParams(format!(
                "k={} must be at least the class count {n_classes}",
                self.k
            )));
        }
        if self.sigma < 2 {
            return Err(NeighborhoodError::InvalidParams("sigma must be at least 2".into()));
        }
        Ok(())
    }

    fn quota(&self, n_classes: usize) -> usize {
        self.k.div_ceil(n_classes)
    }
}

/// Stratified nearest rows per class, with the stratification cap applied.
#[derive(Debug, Clone)]
pub struct BaseNeighborhood {
    pub idx: Vec<usize>,
    pub epsilon: f64,
    /// Classes whose quota could not be filled (no representatives, or all
    /// of them beyond the cap). Reported, never padded.
    pub unfilled_classes: Vec<usize>,
}

/// The assembled neighborhood: real row indices only, with the black-box
/// prediction attached per member.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub base_idx: Vec<usize>,
    pub inverse_idx: Vec<usize>,
    pub cluster_idx: Vec<usize>,
    /// Sorted union of the three parts.
    pub all_idx: Vec<usize>,
    pub epsilon: f64,
    /// Predictions aligned with `all_idx`.
    pub preds: Vec<PredictionRecord>,
    pub warnings: Vec<String>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.all_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all_idx.is_empty()
    }
}

fn scaled_rows(data: &Dataset) -> Vec<Vec<f64>> {
    (0..data.n_rows()).map(|i| data.scale(data.row(i))).collect()
}

fn base_with_preds(
    data: &Dataset,
    preds: &[PredictionRecord],
    x: &Instance,
    x_label: usize,
    n_classes: usize,
    params: &NeighborhoodParams,
) -> BaseNeighborhood {
    let sx = data.scale(&x.values);
    let dist_to_x: Vec<f64> = (0..data.n_rows())
        .map(|i| crate::dataset::scaled_distance(&sx, &data.scale(data.row(i)), params.metric))
        .collect();

    let epsilon = match params.stratification {
        Stratification::Global => f64::INFINITY,
        Stratification::Local => preds
            .iter()
            .enumerate()
            .filter(|(_, p)| p.label != x_label)
            .map(|(i, _)| dist_to_x[i])
            .fold(f64::INFINITY, f64::min),
    };

    let quota = params.quota(n_classes);
    let mut idx = Vec::new();
    let mut unfilled = Vec::new();
    for class in 0..n_classes {
        let mut members: Vec<(f64, usize)> = preds
            .iter()
            .enumerate()
            .filter(|(_, p)| p.label == class)
            .map(|(i, _)| (dist_to_x[i], i))
            .collect();
        members.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut taken = 0;
        for (d, i) in members {
            if taken == quota {
                break;
            }
            // strict cap: the nearest opposite-class row itself stays outside
            if epsilon.is_finite() && d >= epsilon {
                break;
            }
            idx.push(i);
            taken += 1;
        }
        if taken < quota {
            unfilled.push(class);
        }
    }
    idx.sort_unstable();
    BaseNeighborhood { idx, epsilon, unfilled_classes: unfilled }
}

fn inverse_with_preds(
    data: &Dataset,
    preds: &[PredictionRecord],
    x_label: usize,
    base: &[usize],
    n_classes: usize,
    params: &NeighborhoodParams,
) -> Vec<usize> {
    let quota = params.quota(n_classes);
    let scaled = scaled_rows(data);
    let mut out: Vec<usize> = Vec::new();
    for &anchor in base {
        if preds[anchor].label == x_label {
            continue;
        }
        let mut candidates: Vec<(f64, usize)> = (0..data.n_rows())
            .filter(|&i| preds[i].label == x_label)
            .map(|i| {
                (crate::dataset::scaled_distance(&scaled[anchor], &scaled[i], params.metric), i)
            })
            .collect();
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.extend(candidates.iter().take(quota).map(|&(_, i)| i));
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Stratified base neighborhood of the explained instance.
pub fn base_neighborhood(
    data: &Dataset,
    model: &dyn BlackBoxModel,
    x: &Instance,
    params: &NeighborhoodParams,
) -> Result<BaseNeighborhood, NeighborhoodError> {
    params.validate(model.n_classes())?;
    let preds = predict_records(model, &all_instances(data))?;
    let x_label = predict_records(model, std::slice::from_ref(x))?[0].label;
    Ok(base_with_preds(data, &preds, x, x_label, model.n_classes(), params))
}

/// Rows of the explained instance's class that surround the opposite-class
/// anchors found in the base neighborhood.
pub fn inverse_neighborhood(
    data: &Dataset,
    model: &dyn BlackBoxModel,
    x: &Instance,
    base: &[usize],
    params: &NeighborhoodParams,
) -> Result<Vec<usize>, NeighborhoodError> {
    let preds = predict_records(model, &all_instances(data))?;
    let x_label = predict_records(model, std::slice::from_ref(x))?[0].label;
    Ok(inverse_with_preds(data, &preds, x_label, base, model.n_classes(), params))
}

/// OPTICS over the whole dataset with `min_samples = sigma` and xi
/// extraction.
pub fn density_clusters(
    data: &Dataset,
    sigma: usize,
    metric: Metric,
) -> Result<DensityClustering, NeighborhoodError> {
    if data.n_rows() < sigma {
        return Err(NeighborhoodError::TooFewRows { n: data.n_rows(), sigma });
    }
    let scaled = scaled_rows(data);
    Ok(optics_xi(data.n_rows(), sigma, OPTICS_XI, |i, j| {
        crate::dataset::scaled_distance(&scaled[i], &scaled[j], metric)
    }))
}

fn all_instances(data: &Dataset) -> Vec<Instance> {
    (0..data.n_rows()).map(|i| data.instance(i)).collect()
}

/// Assemble the full neighborhood from precomputed predictions and a
/// precomputed clustering (the cacheable path used by the pipeline).
pub fn assemble_with_context(
    data: &Dataset,
    preds: &[PredictionRecord],
    clustering: &DensityClustering,
    x: &Instance,
    x_label: usize,
    n_classes: usize,
    params: &NeighborhoodParams,
) -> Result<Neighborhood, NeighborhoodError> {
    params.validate(n_classes)?;
    let base = base_with_preds(data, preds, x, x_label, n_classes, params);
    let inverse = inverse_with_preds(data, preds, x_label, &base.idx, n_classes, params);

    let mut seed_set: Vec<usize> = base.idx.iter().chain(&inverse).copied().collect();
    seed_set.sort_unstable();
    seed_set.dedup();

    let mut absorbed: Vec<usize> = Vec::new();
    for cluster in 0..clustering.n_clusters() {
        let members = clustering.cluster_members(cluster);
        if members.iter().any(|m| seed_set.binary_search(m).is_ok()) {
            absorbed.extend(members);
        }
    }
    absorbed.sort_unstable();
    absorbed.dedup();

    let mut all: Vec<usize> = seed_set.iter().chain(&absorbed).copied().collect();
    all.sort_unstable();
    all.dedup();
    if all.is_empty() {
        return Err(NeighborhoodError::EmptyNeighborhood);
    }

    let mut warnings = Vec::new();
    for class in &base.unfilled_classes {
        warnings.push(format!("class {class} quota unfilled in base neighborhood"));
    }

    let member_preds = all.iter().map(|&i| preds[i].clone()).collect();
    Ok(Neighborhood {
        base_idx: base.idx,
        inverse_idx: inverse,
        cluster_idx: absorbed,
        all_idx: all,
        epsilon: base.epsilon,
        preds: member_preds,
        warnings,
    })
}

/// Full neighborhood: base, inverse sampling, and every density cluster that
/// intersects them.
pub fn assemble(
    data: &Dataset,
    model: &dyn BlackBoxModel,
    x: &Instance,
    params: &NeighborhoodParams,
) -> Result<Neighborhood, NeighborhoodError> {
    let preds = predict_records(model, &all_instances(data))?;
    let x_label = predict_records(model, std::slice::from_ref(x))?[0].label;
    let clustering = density_clusters(data, params.sigma, params.metric)?;
    assemble_with_context(data, &preds, &clustering, x, x_label, model.n_classes(), params)
}
