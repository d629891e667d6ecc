use std::path::PathBuf;

use clap::Args;
use guided_proto::{cost_matrix, NodeSet, TaxonomyFormat};

use crate::error::{CliError, CliResult};
use crate::io;

/// Writes the shortest-path cost matrix of a taxonomy as CSV.
#[derive(Debug, Args)]
pub struct CostArgs {
    /// Taxonomy file (edge list, or nested JSON for `.json`).
    pub taxonomy: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Rows and columns: leaf classes only, or every node.
    #[arg(long, value_enum, default_value = "leaves")]
    pub nodes: NodesArg,
    /// Output CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum NodesArg {
    Leaves,
    All,
}

impl From<NodesArg> for NodeSet {
    fn from(n: NodesArg) -> Self {
        match n {
            NodesArg::Leaves => NodeSet::Leaves,
            NodesArg::All => NodeSet::All,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FormatArg {
    EdgeList,
    JsonTree,
}

impl From<FormatArg> for TaxonomyFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::EdgeList => TaxonomyFormat::EdgeList,
            FormatArg::JsonTree => TaxonomyFormat::JsonTree,
        }
    }
}

pub fn run(args: &CostArgs) -> CliResult<()> {
    let tax = io::read_taxonomy(&args.taxonomy, args.format.map(Into::into))?;
    let metric = cost_matrix(&tax, args.nodes.into()).map_err(|e| CliError::core(args.taxonomy.display(), e))?;
    match &args.out {
        Some(path) => io::write_cost_matrix(path, &metric),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            let mut header = vec![String::new()];
            header.extend(metric.names().iter().cloned());
            let fail = |e: csv::Error| CliError::Runtime(format!("cannot write to stdout: {e}"));
            w.write_record(&header).map_err(fail)?;
            for (i, name) in metric.names().iter().enumerate() {
                let mut row = vec![name.clone()];
                row.extend((0..metric.len()).map(|j| metric.cost(i, j).to_string()));
                w.write_record(&row).map_err(fail)?;
            }
            w.flush()
                .map_err(|e| CliError::Runtime(format!("cannot write to stdout: {e}")))
        }
    }
}
