use std::path::{Path, PathBuf};

use clap::Args;
use guided_proto::Matrix;

use super::eval::SchemeArg;
use super::Predictor;
use crate::checkpoint::Checkpoint;
use crate::error::{CliError, CliResult};
use crate::io;

/// Predicts a node for every row of a feature CSV.
#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV with the checkpoint's feature columns and an optional `id` column.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value = "max-prob")]
    pub scheme: SchemeArg,
    /// Nearest-prototype search by linear scan instead of the KD-tree.
    #[arg(long)]
    pub exhaustive: bool,
    #[arg(long)]
    pub out: PathBuf,
}

const TOP: usize = 3;

pub fn run(args: &InferArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let tax = ck.taxonomy()?;
    // a label column, if present, is ignored
    let table = io::read_feature_csv(&args.features, "label")?;
    let x = align_columns(&args.features, &table.features, &table.columns, &ck.feature_columns)?;
    let scheme = args.scheme.into();
    let predictor = Predictor::new(&ck.classifier, &tax, scheme, args.exhaustive)?;

    let mut header = vec![
        "id".to_string(),
        "scheme".to_string(),
        "prediction".to_string(),
        "is_leaf".to_string(),
    ];
    for r in 1..=TOP.min(ck.class_names.len()) {
        header.push(format!("top{r}"));
        header.push(format!("p{r}"));
    }
    header.push("expected_cost".into());
    let scheme_name = serde_json::to_value(scheme)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    let mut rows = Vec::with_capacity(x.rows());
    for (i, id) in table.ids.iter().enumerate() {
        let (p, ec) = predictor.predict(x.row(i))?;
        let mut row = vec![
            id.clone(),
            scheme_name.clone(),
            predictor.metric().names()[p.row].clone(),
            p.is_leaf.to_string(),
        ];
        let mut order: Vec<usize> = (0..p.posterior.len()).collect();
        // stable sort keeps the lower class index first on ties
        order.sort_by(|&a, &b| p.posterior[b].total_cmp(&p.posterior[a]));
        for &k in order.iter().take(TOP) {
            row.push(ck.class_names[k].clone());
            row.push(p.posterior[k].to_string());
        }
        row.push(ec.to_string());
        rows.push(row);
    }
    io::write_csv(&args.out, &header, rows)
}

/// Reorders the columns of `x` to the checkpoint's feature order.
pub fn align_columns(path: &Path, x: &Matrix, columns: &[String], expected: &[String]) -> CliResult<Matrix> {
    if columns == expected {
        return Ok(x.clone());
    }
    let at = expected
        .iter()
        .map(|c| {
            columns.iter().position(|h| h == c).ok_or_else(|| {
                CliError::usage(format!(
                    "{}: missing feature column `{c}` required by the checkpoint",
                    path.display()
                ))
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    if columns.len() != expected.len() {
        return Err(CliError::usage(format!(
            "{}: {} feature columns, the checkpoint expects {}",
            path.display(),
            columns.len(),
            expected.len()
        )));
    }
    let data = (0..x.rows())
        .flat_map(|i| at.iter().map(move |&j| x.get(i, j)))
        .collect();
    Matrix::from_vec(x.rows(), expected.len(), data).map_err(|e| CliError::core(path.display(), e))
}
