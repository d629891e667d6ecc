use std::path::PathBuf;

use clap::Args;
use guided_proto::Scheme;

use super::cost::FormatArg;
use super::{score, write_confusion};
use crate::checkpoint::Checkpoint;
use crate::error::{CliError, CliResult};
use crate::io;

/// Scores a checkpoint on a labelled dataset.
#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labelled CSV with the checkpoint's feature columns.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Costs from this taxonomy instead of the checkpoint's; leaves must match.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, value_enum, default_value = "max-prob")]
    pub scheme: SchemeArg,
    /// Directory for `eval.json` and `confusion.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SchemeArg {
    MaxProb,
    #[value(alias = "min-ec")]
    MinExpectedCost,
    AnyNode,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::MaxProb => Scheme::MaxProb,
            SchemeArg::MinExpectedCost => Scheme::MinExpectedCost,
            SchemeArg::AnyNode => Scheme::AnyNode,
        }
    }
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let tax = match &args.taxonomy {
        Some(path) => {
            let tax = io::read_taxonomy(path, args.format.map(Into::into))?;
            let leaves: Vec<String> = tax.leaves().iter().map(|&l| tax.name(l).to_string()).collect();
            if leaves != ck.class_names {
                return Err(CliError::usage(format!(
                    "{}: leaves do not match the checkpoint classes",
                    path.display()
                )));
            }
            tax
        }
        None => ck.taxonomy()?,
    };
    let (data, columns) = io::load_csv(&args.data, &args.label_column, &ck.class_names)?;
    let data =
        super::infer::align_columns(&args.data, data.features(), &columns, &ck.feature_columns).and_then(|x| {
            guided_proto::Dataset::new(x, data.labels().to_vec(), ck.class_names.clone())
                .map_err(|e| CliError::core(args.data.display(), e))
        })?;
    let (report, _) = score(&ck.classifier, &tax, &data, args.scheme.into(), &data)?;
    io::write_json(&args.out_dir.join("eval.json"), &report)?;
    write_confusion(&args.out_dir.join("confusion.csv"), &report)?;
    println!("n {}: ER {:.4}, AC {:.4}", report.n, report.er, report.ac);
    Ok(())
}
