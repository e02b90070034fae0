//! Shared plumbing: model specs, tuning flags, parameter resolution, and
//! provenance headers.

use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;

use lux::blackbox::{knn_model, subprocess_model, BlackBoxModel};
use lux::dataset::{Dataset, Metric};
use lux::explain::{CfKind, ExplainParams};
use lux::neighborhood::{NeighborhoodParams, Stratification};
use lux::tree::TreeParams;

use crate::config::{resolve_seed, ConfigFile};
use crate::CliError;

/// Tuning flags shared by `explain` and `benchmark`. Every flag can also be
/// given in the config file under the same name; flags win.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Flat key=value config file (flags override its entries)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pipeline seed (default: LUX_SEED env var, else 42)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Base neighborhood size K
    #[arg(long)]
    pub k: Option<usize>,
    /// Minimum density-cluster size sigma
    #[arg(long)]
    pub sigma: Option<usize>,
    /// Neighborhood stratification: local or global
    #[arg(long)]
    pub stratification: Option<String>,
    /// Distance metric: euclidean or manhattan
    #[arg(long)]
    pub metric: Option<String>,
    /// Maximum tree depth
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Minimum rows to split a node
    #[arg(long)]
    pub min_samples_split: Option<usize>,
    /// Minimum importance-weighted gain to split
    #[arg(long)]
    pub min_gain: Option<f64>,
    /// Disable oblique (two-feature linear) splits
    #[arg(long)]
    pub no_oblique: bool,
    /// Disable confidence weighting of class masses
    #[arg(long)]
    pub no_confidence_weighting: bool,
    /// Counterfactual kind: nearest or medoid
    #[arg(long)]
    pub counterfactual: Option<String>,
    /// Neighbor count for the isolation vote and SMOTE interpolation
    #[arg(long)]
    pub smote_k: Option<usize>,
    /// Do not balance class counts when upsampling
    #[arg(long)]
    pub no_smote_balance: bool,
    /// Shapley coalition budget (default: exhaustive or 2*features+64)
    #[arg(long)]
    pub coalitions: Option<usize>,
    /// Cap on SHAP background rows drawn from the neighborhood
    #[arg(long)]
    pub background_cap: Option<usize>,
}

pub struct Resolved {
    pub params: ExplainParams,
    pub seed: u64,
    pub provenance: Vec<String>,
}

pub fn resolve_params(common: &CommonArgs, extra: &[(String, String)]) -> Result<Resolved, CliError> {
    let config = match &common.config {
        Some(path) => ConfigFile::load(path).map_err(CliError::Config)?,
        None => ConfigFile::default(),
    };
    let seed = resolve_seed(common.seed, &config).map_err(CliError::Config)?;

    let cfg = |e: String| CliError::Config(e);
    let k = config.resolve(common.k, "k", 20).map_err(cfg)?;
    let sigma = config.resolve(common.sigma, "sigma", 5).map_err(cfg)?;
    let strat: String = config
        .resolve(common.stratification.clone(), "stratification", "global".to_string())
        .map_err(cfg)?;
    let stratification: Stratification = strat.parse().map_err(CliError::Config)?;
    let metric_name: String =
        config.resolve(common.metric.clone(), "metric", "euclidean".to_string()).map_err(cfg)?;
    let metric: Metric = metric_name.parse().map_err(CliError::Config)?;
    let max_depth = config.resolve(common.max_depth, "max_depth", 5).map_err(cfg)?;
    let min_samples_split =
        config.resolve(common.min_samples_split, "min_samples_split", 5).map_err(cfg)?;
    let min_gain = config.resolve(common.min_gain, "min_gain", 1e-4).map_err(cfg)?;
    let oblique_enabled = if common.no_oblique {
        false
    } else {
        config.resolve(None, "oblique", true).map_err(cfg)?
    };
    let confidence_weighting = if common.no_confidence_weighting {
        false
    } else {
        config.resolve(None, "confidence_weighting", true).map_err(cfg)?
    };
    let cf_name: String = config
        .resolve(common.counterfactual.clone(), "counterfactual", "nearest".to_string())
        .map_err(cfg)?;
    let counterfactual: CfKind = cf_name.parse().map_err(CliError::Config)?;
    let smote_k = config.resolve(common.smote_k, "smote_k", 5).map_err(cfg)?;
    let smote_balance = if common.no_smote_balance {
        false
    } else {
        config.resolve(None, "smote_balance", true).map_err(cfg)?
    };
    let n_coalitions = config.resolve_opt(common.coalitions, "coalitions").map_err(cfg)?;
    let background_cap = config.resolve(common.background_cap, "background_cap", 100).map_err(cfg)?;

    let params = ExplainParams {
        neighborhood: NeighborhoodParams { k, sigma, stratification, metric },
        tree: TreeParams {
            max_depth,
            min_samples_split,
            min_gain,
            oblique_enabled,
            confidence_weighting,
        },
        smote_k,
        smote_balance,
        counterfactual,
        n_coalitions,
        background_cap,
    };

    let mut provenance = vec![format!("lux v{}", env!("CARGO_PKG_VERSION"))];
    for (key, value) in extra {
        provenance.push(format!("{key} = {value}"));
    }
    provenance.push(format!("seed = {seed}"));
    provenance.push(format!("k = {k}"));
    provenance.push(format!("sigma = {sigma}"));
    provenance.push(format!("stratification = {stratification:?}").to_lowercase());
    provenance.push(format!("metric = {metric}"));
    provenance.push(format!("max_depth = {max_depth}"));
    provenance.push(format!("min_samples_split = {min_samples_split}"));
    provenance.push(format!("min_gain = {min_gain}"));
    provenance.push(format!("oblique = {oblique_enabled}"));
    provenance.push(format!("confidence_weighting = {confidence_weighting}"));
    provenance.push(format!("counterfactual = {cf_name}"));
    provenance.push(format!("smote_k = {smote_k}"));
    provenance.push(format!("smote_balance = {smote_balance}"));
    provenance.push(format!(
        "coalitions = {}",
        n_coalitions.map_or("auto".to_string(), |c| c.to_string())
    ));
    provenance.push(format!("background_cap = {background_cap}"));

    Ok(Resolved { params, seed, provenance })
}

/// `knn:k=N` builds the built-in surrogate over the (labeled) dataset;
/// `cmd:COMMAND` spawns an external model process.
pub fn build_model(spec: &str, data: &Dataset) -> Result<Arc<dyn BlackBoxModel>, CliError> {
    if let Some(rest) = spec.strip_prefix("knn:") {
        let k = rest
            .strip_prefix("k=")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| CliError::Config(format!("bad model spec '{spec}', expected knn:k=N")))?;
        let model = knn_model(data, k).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Arc::new(model))
    } else if let Some(command) = spec.strip_prefix("cmd:") {
        let model = subprocess_model(command).map_err(|e| CliError::Pipeline(e.to_string()))?;
        Ok(Arc::new(model))
    } else {
        Err(CliError::Config(format!(
            "bad model spec '{spec}', expected knn:k=N or cmd:COMMAND"
        )))
    }
}

/// Write `content` to `path` with a provenance header in the comment syntax
/// of the target format.
pub fn write_output(
    path: &std::path::Path,
    provenance: &[String],
    content: &str,
    style: CommentStyle,
) -> Result<(), CliError> {
    let mut out = String::new();
    for line in provenance {
        match style {
            CommentStyle::Hash => out.push_str(&format!("# {line}\n")),
            CommentStyle::DoubleSlash => out.push_str(&format!("// {line}\n")),
            CommentStyle::Xml => out.push_str(&format!("<!-- {line} -->\n")),
        }
    }
    out.push_str(content);
    std::fs::write(path, out)
        .map_err(|e| CliError::Pipeline(format!("cannot write {}: {e}", path.display())))
}

#[derive(Clone, Copy)]
pub enum CommentStyle {
    Hash,
    DoubleSlash,
    Xml,
}

pub fn load_dataset(path: &std::path::Path, label: Option<&str>) -> Result<Dataset, CliError> {
    lux::dataset::load_csv(path, label)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
