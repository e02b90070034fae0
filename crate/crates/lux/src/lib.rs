//! Local rule-based explanations for black-box classifiers.
//!
//! Given a single instance and a model exposing class probabilities, the
//! pipeline selects a representative neighborhood of real data, minimally
//! upsamples its uncertain regions, fits an importance-weighted oblique
//! decision tree, and extracts factual rules, counterfactual rules and
//! examples, and tree visualizations. A benchmark harness measures
//! fidelity, simplicity, consistency, stability and phantom-branch
//! fractions over real and synthetic datasets.

pub mod blackbox;
pub mod dataset;
pub mod exec;
pub mod explain;
pub mod importance;
pub mod metrics;
pub mod neighborhood;
pub mod optics;
pub mod oversampling;
pub mod tree;
pub mod viz;

pub use blackbox::{knn_model, subprocess_model, BlackBoxModel, PredictionRecord};
pub use dataset::{load_csv, toy_blobs, write_csv, Dataset, FeatureSchema, Instance, Metric};
pub use explain::{explain, Explainer, ExplainParams, ExplanationBundle};
pub use importance::{importance_from_file, kernel_shap, ImportanceVector};
pub use neighborhood::{Neighborhood, NeighborhoodParams, Stratification};
pub use tree::{ExplanationTree, TreeParams};
