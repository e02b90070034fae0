//! `lux synth`: write a synthetic blob dataset as CSV.

use std::path::PathBuf;

use clap::Args;

use lux::metrics::{make_synthetic, SyntheticSpec};

use crate::config::{resolve_seed, ConfigFile};
use crate::CliError;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of informative feature dimensions
    #[arg(long)]
    pub dims: usize,
    /// Number of standard-normal noise features
    #[arg(long, default_value_t = 0)]
    pub noise: usize,
    /// Number of classes
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Number of rows
    #[arg(long)]
    pub n: usize,
    /// Per-blob standard deviation
    #[arg(long, default_value_t = 1.0)]
    pub blob_std: f64,
    /// Generator seed (default: LUX_SEED env var, else 42)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    if args.dims == 0 || args.n == 0 || args.classes < 2 || args.blob_std <= 0.0 {
        return Err(CliError::Config(
            "need --dims >= 1, --n >= 1, --classes >= 2 and --blob-std > 0".into(),
        ));
    }
    let seed = resolve_seed(args.seed, &ConfigFile::default()).map_err(CliError::Config)?;
    let spec = SyntheticSpec {
        n_samples: args.n,
        n_informative: args.dims,
        n_noise: args.noise,
        n_classes: args.classes,
        blob_std: args.blob_std,
        seed,
    };
    let data = make_synthetic(&spec);
    let provenance = vec![
        format!("lux v{}", env!("CARGO_PKG_VERSION")),
        "command = synth".to_string(),
        format!("dims = {}", args.dims),
        format!("noise = {}", args.noise),
        format!("classes = {}", args.classes),
        format!("n = {}", args.n),
        format!("blob_std = {}", args.blob_std),
        format!("seed = {seed}"),
    ];
    lux::dataset::write_csv(&data, &args.out, &provenance)
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    println!("wrote {} rows x {} features to {}", data.n_rows(), data.n_features(), args.out.display());
    Ok(())
}
