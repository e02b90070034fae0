//! `lux benchmark`: the metric suite over real datasets or a synthetic
//! dimensionality sweep, with optional repeated-run stability and a
//! Friedman/Nemenyi report against external per-instance score files.

use std::path::PathBuf;

use clap::Args;

use lux::dataset::Dataset;
use lux::explain::Explainer;
use lux::metrics::{
    friedman_nemenyi, make_synthetic, run_benchmark, sample_instances, stability_benchmark,
    subset, train_test_split, BenchmarkConfig, EvalRun, SyntheticSpec,
};

use crate::run::{build_model, load_dataset, resolve_params, write_output, CommentStyle, CommonArgs};
use crate::CliError;

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// Dataset CSVs (comma-separated or repeated)
    #[arg(long, value_delimiter = ',')]
    pub data: Vec<PathBuf>,
    /// Label column name (applies to every dataset)
    #[arg(long)]
    pub label: Option<String>,
    /// Model spec: knn:k=N or cmd:COMMAND
    #[arg(long, default_value = "knn:k=5")]
    pub model: String,
    /// Number of explained instances per dataset
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    /// Held-out fraction for global fidelity and phantom branches (0 disables)
    #[arg(long, default_value_t = 0.3)]
    pub holdout: f64,
    /// Repeated explain() calls per instance (stability mode when > 1)
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Repeat runs on the same instances (documentation flag; repeated runs
    /// always reuse the sampled instances)
    #[arg(long)]
    pub same_instance: bool,
    /// Vary the seed across repeated runs instead of exact repeats
    #[arg(long)]
    pub vary_seed: bool,
    /// Worker threads for the per-instance loop (default: all logical cores)
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Synthetic sweep over total dimensionality, e.g. 2:15 (2 informative
    /// features, the rest noise)
    #[arg(long)]
    pub sweep_dims: Option<String>,
    /// Rows per synthetic sweep dataset
    #[arg(long, default_value_t = 500)]
    pub sweep_samples: usize,
    /// Output directory for CSV reports
    #[arg(long, default_value = "lux-bench")]
    pub out_dir: PathBuf,
    /// External per-instance score files: NAME=PATH (repeatable)
    #[arg(long)]
    pub external_scores: Vec<String>,
    /// Metric compared in the Friedman/Nemenyi report
    #[arg(long, default_value = "local_fidelity")]
    pub friedman_metric: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn run(args: BenchmarkArgs) -> Result<(), CliError> {
    if args.data.is_empty() && args.sweep_dims.is_none() {
        return Err(CliError::Config("give --data files or --sweep-dims A:B".into()));
    }
    if let Some(jobs) = args.jobs {
        lux::exec::configure_jobs(jobs);
    }
    let extra = vec![
        ("command".to_string(), "benchmark".to_string()),
        ("model".to_string(), args.model.clone()),
        ("instances".to_string(), args.instances.to_string()),
        ("holdout".to_string(), args.holdout.to_string()),
        ("runs".to_string(), args.runs.to_string()),
    ];
    let resolved = resolve_params(&args.common, &extra)?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", args.out_dir.display())))?;

    // assemble the dataset list: files and/or the synthetic sweep
    let mut datasets: Vec<(String, Dataset)> = Vec::new();
    for path in &args.data {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string());
        datasets.push((name, load_dataset(path, args.label.as_deref())?));
    }
    if let Some(spec) = &args.sweep_dims {
        let (lo, hi) = parse_range(spec)?;
        for dim in lo..=hi {
            let spec = SyntheticSpec {
                n_samples: args.sweep_samples,
                n_informative: 2.min(dim),
                n_noise: dim.saturating_sub(2),
                n_classes: 2,
                blob_std: 1.0,
                seed: resolved.seed + dim as u64,
            };
            datasets.push((format!("synth_d{dim}"), make_synthetic(&spec)));
        }
    }

    let mut runs: Vec<EvalRun> = Vec::new();
    for (name, data) in datasets {
        eprintln!("benchmarking {name} ({} rows x {} features)", data.n_rows(), data.n_features());
        let run = benchmark_one(&name, data, &args, &resolved)?;
        let path = args.out_dir.join(format!("{name}_instances.csv"));
        let mut buf = Vec::new();
        run.write_csv(&mut buf, &resolved.provenance)
            .map_err(|e| CliError::Pipeline(e.to_string()))?;
        std::fs::write(&path, buf)
            .map_err(|e| CliError::Pipeline(format!("cannot write {}: {e}", path.display())))?;
        runs.push(run);
    }

    // summary: dataset,metric,mean,std
    let mut summary = String::from("dataset,metric,mean,std\n");
    for run in &runs {
        for (metric, mean, std) in run.aggregate() {
            summary.push_str(&format!("{},{},{},{}\n", run.dataset, metric, mean, std));
        }
    }
    write_output(&args.out_dir.join("summary.csv"), &resolved.provenance, &summary, CommentStyle::Hash)?;

    if !args.external_scores.is_empty() {
        let report = friedman_report(&runs, &args)?;
        write_output(&args.out_dir.join("friedman.txt"), &resolved.provenance, &report, CommentStyle::Hash)?;
        println!("{report}");
    }
    println!("reports written to {}", args.out_dir.display());
    Ok(())
}

fn benchmark_one(
    name: &str,
    data: Dataset,
    args: &BenchmarkArgs,
    resolved: &crate::run::Resolved,
) -> Result<EvalRun, CliError> {
    // hold out a test split; the surrogate model and the explainer both see
    // only the training part
    let (train_data, test_data) = if args.holdout > 0.0 && data.n_rows() >= 10 {
        let (train_idx, test_idx) = train_test_split(data.n_rows(), args.holdout, resolved.seed);
        if test_idx.is_empty() || train_idx.is_empty() {
            (data, None) // fraction too small to materialize a split
        } else {
            (subset(&data, &train_idx), Some(subset(&data, &test_idx)))
        }
    } else {
        (data, None)
    };

    let model = build_model(&args.model, &train_data)?;
    let explainer =
        Explainer::new(train_data, model).map_err(|e| CliError::Pipeline(e.to_string()))?;
    let instances =
        sample_instances(explainer.data().n_rows(), args.instances, resolved.seed);

    let config = BenchmarkConfig {
        dataset_name: name.to_string(),
        params: resolved.params.clone(),
        instances,
        seed: resolved.seed,
        test: test_data.as_ref(),
        sequential: false,
    };
    let mut run =
        run_benchmark(&explainer, &config).map_err(|e| CliError::Pipeline(e.to_string()))?;

    if args.runs > 1 {
        let stability = stability_benchmark(&explainer, &config, args.runs, args.vary_seed)
            .map_err(|e| CliError::Pipeline(e.to_string()))?;
        for srec in stability.records {
            match run.records.iter_mut().find(|r| r.instance == srec.instance) {
                Some(r) => r.metrics.extend(srec.metrics),
                None => run.records.push(srec),
            }
        }
    }
    Ok(run)
}

fn parse_range(spec: &str) -> Result<(usize, usize), CliError> {
    let (lo, hi) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("bad --sweep-dims '{spec}', expected A:B")))?;
    let lo: usize = lo.parse().map_err(|_| CliError::Config(format!("bad sweep start '{lo}'")))?;
    let hi: usize = hi.parse().map_err(|_| CliError::Config(format!("bad sweep end '{hi}'")))?;
    if lo < 1 || hi < lo {
        return Err(CliError::Config(format!("bad sweep range {lo}:{hi}")));
    }
    Ok((lo, hi))
}

/// Build the datasets x algorithms table from our runs plus external
/// per-instance score files and run the rank tests.
fn friedman_report(runs: &[EvalRun], args: &BenchmarkArgs) -> Result<String, CliError> {
    let metric = &args.friedman_metric;
    let mut algorithms: Vec<(String, Vec<EvalRun>)> = vec![("lux".to_string(), runs.to_vec())];
    for spec in &args.external_scores {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("bad --external-scores '{spec}', expected NAME=PATH")))?;
        let extern_runs = EvalRun::read_csv(path)
            .map_err(|e| CliError::Config(format!("{path}: {e}")))?;
        algorithms.push((name.to_string(), extern_runs));
    }

    let dataset_names: Vec<String> = runs.iter().map(|r| r.dataset.clone()).collect();
    let mut table: Vec<Vec<f64>> = Vec::new();
    for dataset in &dataset_names {
        let mut row = Vec::new();
        for (algo, algo_runs) in &algorithms {
            let values: Vec<f64> = algo_runs
                .iter()
                .filter(|r| &r.dataset == dataset)
                .flat_map(|r| r.metric_values(metric))
                .collect();
            if values.is_empty() {
                return Err(CliError::Config(format!(
                    "algorithm '{algo}' has no '{metric}' scores for dataset '{dataset}'"
                )));
            }
            row.push(values.iter().sum::<f64>() / values.len() as f64);
        }
        table.push(row);
    }

    let result = friedman_nemenyi(&table, true).map_err(|e| CliError::Pipeline(e.to_string()))?;
    let mut report = String::new();
    report.push_str(&format!("metric: {metric} (higher is better)\n"));
    report.push_str(&format!(
        "datasets: {} algorithms: {}\n",
        dataset_names.len(),
        algorithms.len()
    ));
    report.push_str(&format!(
        "friedman F = {:.4} (dof {}, {}), p = {:.4}\n",
        result.f_statistic, result.dof.0, result.dof.1, result.p_value
    ));
    report.push_str(&format!(
        "critical value at alpha=0.05: {:.2} -> {}\n",
        result.critical_value,
        if result.f_statistic > result.critical_value {
            "reject the null hypothesis"
        } else {
            "cannot reject the null hypothesis"
        }
    ));
    report.push_str("mean ranks (1 = best):\n");
    for ((algo, _), rank) in algorithms.iter().zip(&result.mean_ranks) {
        report.push_str(&format!("  {algo}: {rank:.3}\n"));
    }
    report.push_str(&format!("nemenyi critical distance: {:.3}\n", result.critical_distance));
    for i in 0..algorithms.len() {
        for j in i + 1..algorithms.len() {
            let diff = (result.mean_ranks[i] - result.mean_ranks[j]).abs();
            if diff > result.critical_distance {
                report.push_str(&format!(
                    "  {} vs {}: rank gap {:.3} exceeds CD (significant)\n",
                    algorithms[i].0, algorithms[j].0, diff
                ));
            }
        }
    }
    Ok(report)
}
