use std::path::PathBuf;

use clap::Args;
use guided_proto::distortion::{fit_prototypes, FitSummary};
use guided_proto::{cost_matrix, distortion_report, DistanceSpec, DistortionReport, PrototypeSet, Regularizer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::cost::{FormatArg, NodesArg};
use crate::error::{CliError, CliResult};
use crate::io;

/// Fits prototypes to a taxonomy's cost metric alone, without data.
#[derive(Debug, Args)]
pub struct EmbedArgs {
    pub taxonomy: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Embedding dimension.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, value_enum, default_value = "disto")]
    pub regularizer: RegularizerArg,
    /// Maximum descent steps.
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    /// Stop once a step improves the loss by less than this fraction.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embed leaves only, or every taxonomy node.
    #[arg(long, value_enum, default_value = "leaves")]
    pub nodes: NodesArg,
    /// Output directory for `prototypes.csv` and `report.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum RegularizerArg {
    Disto,
    Rank,
}

#[derive(Debug, Serialize)]
struct EmbedReport {
    dim: usize,
    seed: u64,
    regularizer: Regularizer,
    fit: FitSummary,
    distortion: DistortionReport,
}

pub fn run(args: &EmbedArgs) -> CliResult<()> {
    if args.dim == 0 {
        return Err(CliError::usage("--dim must be >= 1"));
    }
    let tax = io::read_taxonomy(&args.taxonomy, args.format.map(Into::into))?;
    let metric = cost_matrix(&tax, args.nodes.into()).map_err(|e| CliError::core(args.taxonomy.display(), e))?;
    let regularizer = match args.regularizer {
        RegularizerArg::Disto => Regularizer::Disto,
        RegularizerArg::Rank => Regularizer::Rank,
    };
    let spec = DistanceSpec::euclidean();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut pi = PrototypeSet::random(&metric, args.dim, &mut rng).map_err(|e| CliError::core("prototypes", e))?;
    let fit = fit_prototypes(&mut pi, &metric, &spec, regularizer, args.steps, args.tol, &mut rng)
        .map_err(|e| CliError::core("fitting", e))?;
    let distortion = distortion_report(&pi, &metric, &spec).map_err(|e| CliError::core("distortion", e))?;
    io::write_points(&args.out_dir.join("prototypes.csv"), metric.names(), pi.coords())?;
    let report = EmbedReport {
        dim: args.dim,
        seed: args.seed,
        regularizer,
        fit,
        distortion,
    };
    io::write_json(&args.out_dir.join("report.json"), &report)?;
    println!(
        "scale-free distortion {} after {} steps",
        distortion.scale_free_distortion, fit.steps
    );
    Ok(())
}
