//! `lux explain`: one instance, one bundle, several optional reports.

use std::path::PathBuf;

use clap::Args;

use lux::dataset::Instance;
use lux::explain::{render_rule, ExplanationBundle, Explainer};
use lux::tree::RowSource;
use lux::viz::{to_dot, to_svg, VizSpec};

use crate::run::{build_model, load_dataset, resolve_params, write_output, CommentStyle, CommonArgs};
use crate::CliError;

#[derive(Args, Debug)]
pub struct ExplainArgs {
    /// Dataset CSV (header row required)
    #[arg(long)]
    pub data: PathBuf,
    /// Label column name in the CSV
    #[arg(long)]
    pub label: Option<String>,
    /// Model spec: knn:k=N or cmd:COMMAND
    #[arg(long, default_value = "knn:k=5")]
    pub model: String,
    /// Explain this dataset row (0-based)
    #[arg(long, conflicts_with = "values")]
    pub instance: Option<usize>,
    /// Explain an ad-hoc instance: comma-separated feature values
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Write the whole explanation bundle (rules, counterfactuals, tree,
    /// importances) as one document here
    #[arg(long)]
    pub out_bundle: Option<PathBuf>,
    /// Write the factual/counterfactual rule text here
    #[arg(long)]
    pub out_rules: Option<PathBuf>,
    /// Write the counterfactual report here
    #[arg(long)]
    pub out_counterfactuals: Option<PathBuf>,
    /// Write the tree serialization here
    #[arg(long)]
    pub out_tree: Option<PathBuf>,
    /// Write a DOT rendering of the tree here
    #[arg(long)]
    pub tree_dot: Option<PathBuf>,
    /// Write an SVG rendering of the tree here
    #[arg(long)]
    pub tree_svg: Option<PathBuf>,
    /// Write a neighborhood diagnostic report here
    #[arg(long)]
    pub dump_neighborhood: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn run(args: ExplainArgs) -> Result<(), CliError> {
    let mut extra = vec![
        ("command".to_string(), "explain".to_string()),
        ("data".to_string(), args.data.display().to_string()),
        ("model".to_string(), args.model.clone()),
    ];
    if let Some(label) = &args.label {
        extra.push(("label".to_string(), label.clone()));
    }
    if let Some(row) = args.instance {
        extra.push(("instance".to_string(), row.to_string()));
    }
    if let Some(values) = &args.values {
        extra.push((
            "values".to_string(),
            values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        ));
    }
    let resolved = resolve_params(&args.common, &extra)?;

    let data = load_dataset(&args.data, args.label.as_deref())?;
    let x = match (args.instance, &args.values) {
        (Some(row), None) => {
            if row >= data.n_rows() {
                return Err(CliError::Config(format!(
                    "--instance {row} out of range (dataset has {} rows)",
                    data.n_rows()
                )));
            }
            data.instance(row)
        }
        (None, Some(values)) => {
            if values.len() != data.n_features() {
                return Err(CliError::Config(format!(
                    "--values has {} entries, dataset has {} features",
                    values.len(),
                    data.n_features()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config("--values must all be finite numbers".into()));
            }
            Instance::new(values.clone())
        }
        _ => {
            return Err(CliError::Config(
                "select the instance with --instance ROW or --values v1,v2,...".into(),
            ))
        }
    };

    let model = build_model(&args.model, &data)?;
    let explainer =
        Explainer::new(data, model).map_err(|e| CliError::Pipeline(e.to_string()))?;
    let bundle = explainer
        .explain(&x, &resolved.params, resolved.seed)
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    let schema = explainer.data().schema();

    println!("{}", render_rule(&bundle.factual, schema));
    for warning in &bundle.warnings {
        eprintln!("warning: {warning}");
    }

    if let Some(path) = &args.out_bundle {
        write_output(path, &resolved.provenance, &bundle_document(&bundle, schema), CommentStyle::Hash)?;
    }
    if let Some(path) = &args.out_rules {
        write_output(path, &resolved.provenance, &rules_text(&bundle, schema), CommentStyle::Hash)?;
    }
    if let Some(path) = &args.out_counterfactuals {
        write_output(
            path,
            &resolved.provenance,
            &counterfactual_report(&bundle, schema),
            CommentStyle::Hash,
        )?;
    }
    if let Some(path) = &args.out_tree {
        write_output(path, &resolved.provenance, &bundle.tree.serialize(schema), CommentStyle::Hash)?;
    }
    if args.tree_dot.is_some() || args.tree_svg.is_some() {
        let spec = VizSpec::from_bundle(&bundle, schema);
        if let Some(path) = &args.tree_dot {
            let dot = to_dot(&spec).map_err(|e| CliError::Pipeline(e.to_string()))?;
            write_output(path, &resolved.provenance, &dot, CommentStyle::DoubleSlash)?;
        }
        if let Some(path) = &args.tree_svg {
            let svg = to_svg(&spec).map_err(|e| CliError::Pipeline(e.to_string()))?;
            write_output(path, &resolved.provenance, &svg, CommentStyle::Xml)?;
        }
    }
    if let Some(path) = &args.dump_neighborhood {
        write_output(
            path,
            &resolved.provenance,
            &neighborhood_dump(&bundle),
            CommentStyle::Hash,
        )?;
    }
    Ok(())
}

/// The single-document form of a bundle: instance, rules, counterfactual
/// examples, importances, neighborhood summary, and the tree.
fn bundle_document(bundle: &ExplanationBundle, schema: &lux::FeatureSchema) -> String {
    let mut out = String::new();
    out.push_str("== instance ==\n");
    for (name, value) in schema.names.iter().zip(&bundle.x.values) {
        out.push_str(&format!("{name} = {value}\n"));
    }
    out.push_str(&format!(
        "predicted: class = {} # {:.4}\n",
        schema.class_name(bundle.x_pred.label),
        bundle.x_pred.confidence
    ));
    out.push_str("\n== factual ==\n");
    out.push_str(&render_rule(&bundle.factual, schema));
    out.push('\n');
    out.push_str("\n== counterfactuals ==\n");
    out.push_str(&counterfactual_report(bundle, schema));
    out.push_str("== importances ==\n");
    for (name, value) in schema.names.iter().zip(bundle.importances.values()) {
        out.push_str(&format!("{name} = {value}\n"));
    }
    out.push_str("\n== neighborhood ==\n");
    out.push_str(&format!(
        "rows = {} (base {}, inverse {}, cluster {}), synthetic = {}, epsilon = {}\n",
        bundle.neighborhood.len(),
        bundle.neighborhood.base_idx.len(),
        bundle.neighborhood.inverse_idx.len(),
        bundle.neighborhood.cluster_idx.len(),
        bundle.sample.len() - bundle.neighborhood.len(),
        bundle.neighborhood.epsilon
    ));
    out.push_str("\n== tree ==\n");
    out.push_str(&bundle.tree.serialize(schema));
    if !bundle.warnings.is_empty() {
        out.push_str("\n== warnings ==\n");
        for w in &bundle.warnings {
            out.push_str(&format!("{w}\n"));
        }
    }
    out
}

fn rules_text(bundle: &ExplanationBundle, schema: &lux::FeatureSchema) -> String {
    let mut out = String::new();
    out.push_str(&format!("factual: {}\n", render_rule(&bundle.factual, schema)));
    for cf in &bundle.counterfactuals {
        out.push_str(&format!("counterfactual: {}\n", render_rule(&cf.rule, schema)));
    }
    out
}

fn counterfactual_report(bundle: &ExplanationBundle, schema: &lux::FeatureSchema) -> String {
    let mut out = String::new();
    if bundle.counterfactuals.is_empty() {
        out.push_str("no counterfactuals (no differently-labeled leaf)\n");
        return out;
    }
    for cf in &bundle.counterfactuals {
        out.push_str(&format!("rule: {}\n", render_rule(&cf.rule, schema)));
        out.push_str(&format!("kind: {:?}\n", cf.kind));
        out.push_str(&format!("distance: {:.6}\n", cf.distance));
        out.push_str(&format!("example_row: {}\n", cf.example_row));
        for (name, value) in schema.names.iter().zip(&cf.example.values) {
            out.push_str(&format!("  {name} = {value}\n"));
        }
        out.push('\n');
    }
    out
}

fn neighborhood_dump(bundle: &ExplanationBundle) -> String {
    let nbhd = &bundle.neighborhood;
    let mut out = String::from("row,base,inverse,cluster,label,confidence,synthetic\n");
    for (pos, &row) in nbhd.all_idx.iter().enumerate() {
        out.push_str(&format!(
            "{row},{},{},{},{},{:.6},false\n",
            nbhd.base_idx.contains(&row),
            nbhd.inverse_idx.contains(&row),
            nbhd.cluster_idx.contains(&row),
            nbhd.preds[pos].label,
            nbhd.preds[pos].confidence
        ));
    }
    for srow in &bundle.sample.rows {
        if let RowSource::Synthetic(i) = srow.source {
            out.push_str(&format!(
                "synth:{i},false,false,false,{},{:.6},true\n",
                srow.pred.label, srow.pred.confidence
            ));
        }
    }
    out
}
