use std::path::PathBuf;

use clap::Args;
use guided_proto::{gen_hierarchical_gaussians, SynthParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::cost::FormatArg;
use crate::error::{CliError, CliResult};
use crate::io;

/// Generates a labelled Gaussian dataset whose class means follow the taxonomy.
#[derive(Debug, Args)]
pub struct SynthArgs {
    pub taxonomy: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 8)]
    pub dims: usize,
    #[arg(long, default_value_t = 4.0)]
    pub root_spread: f64,
    #[arg(long, default_value_t = 0.5)]
    pub decay: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset CSV; generator parameters go to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    taxonomy: &'a std::path::Path,
    seed: u64,
    params: SynthParams,
    rows: usize,
}

pub fn run(args: &SynthArgs) -> CliResult<()> {
    let tax = io::read_taxonomy(&args.taxonomy, args.format.map(Into::into))?;
    let params = SynthParams {
        per_class: args.per_class,
        dims: args.dims,
        root_spread: args.root_spread,
        decay: args.decay,
        noise: args.noise,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let data = gen_hierarchical_gaussians(&tax, &params, &mut rng).map_err(|e| CliError::core("generator", e))?;
    let mut header: Vec<String> = (0..data.input_dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    let rows = (0..data.len()).map(|i| {
        let mut row: Vec<String> = data.features().row(i).iter().map(f64::to_string).collect();
        row.push(data.class_names()[data.labels()[i]].clone());
        row
    });
    io::write_csv(&args.out, &header, rows)?;
    let mut sidecar = args.out.clone().into_os_string();
    sidecar.push(".json");
    io::write_json(
        &PathBuf::from(sidecar),
        &Sidecar {
            taxonomy: &args.taxonomy,
            seed: args.seed,
            params,
            rows: data.len(),
        },
    )?;
    Ok(())
}
