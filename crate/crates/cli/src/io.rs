//! File formats: taxonomies, CSV datasets and matrices, JSON documents.

use std::fs;
use std::path::Path;

use guided_proto::{parse_taxonomy, Dataset, FiniteMetric, Matrix, Taxonomy, TaxonomyFormat};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Reads a taxonomy; `.json` files are nested trees, anything else an edge list.
pub fn read_taxonomy(path: &Path, format: Option<TaxonomyFormat>) -> CliResult<Taxonomy> {
    let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    let format = format.unwrap_or_else(|| guess_format(path));
    parse_taxonomy(&text, format).map_err(|e| CliError::core(path.display(), e))
}

pub fn guess_format(path: &Path) -> TaxonomyFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => TaxonomyFormat::JsonTree,
        _ => TaxonomyFormat::EdgeList,
    }
}

/// Numeric table read from a CSV file with a header row.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    /// Value of the id column per row, or the 0-based row number.
    pub ids: Vec<String>,
    pub features: Matrix,
    /// Raw label cell per row, when a label column was present.
    pub labels: Option<Vec<String>>,
}

/// Reads a CSV whose columns are numeric features, plus an optional label
/// column and an optional `id` column (both excluded from the features).
pub fn read_feature_csv(path: &Path, label_column: &str) -> CliResult<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::read(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::read(path, e))?.clone();
    let label_at = headers.iter().position(|h| h == label_column);
    let id_at = headers.iter().position(|h| h == "id");
    let feature_at: Vec<usize> = (0..headers.len())
        .filter(|&i| Some(i) != label_at && Some(i) != id_at)
        .collect();
    if feature_at.is_empty() {
        return Err(CliError::usage(format!("{}: no feature columns", path.display())));
    }
    let mut data = Vec::new();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::usage(format!("{}: row {}: {e}", path.display(), row + 1)))?;
        for &i in &feature_at {
            let cell = record.get(i).unwrap_or("");
            let value: f64 = cell.parse().map_err(|_| {
                CliError::usage(format!(
                    "{}: row {}: column `{}` is not a number: `{cell}`",
                    path.display(),
                    row + 1,
                    &headers[i]
                ))
            })?;
            data.push(value);
        }
        ids.push(
            id_at
                .and_then(|i| record.get(i))
                .map_or_else(|| row.to_string(), str::to_string),
        );
        if let Some(i) = label_at {
            labels.push(record.get(i).unwrap_or("").to_string());
        }
    }
    if ids.is_empty() {
        return Err(CliError::usage(format!(
            "{}: empty dataset (no data rows)",
            path.display()
        )));
    }
    let features =
        Matrix::from_vec(ids.len(), feature_at.len(), data).map_err(|e| CliError::core(path.display(), e))?;
    Ok(FeatureTable {
        columns: feature_at.iter().map(|&i| headers[i].to_string()).collect(),
        ids,
        features,
        labels: label_at.map(|_| labels),
    })
}

/// Reads a labelled dataset, resolving label names against `class_names`.
pub fn load_csv(path: &Path, label_column: &str, class_names: &[String]) -> CliResult<(Dataset, Vec<String>)> {
    let table = read_feature_csv(path, label_column)?;
    let Some(raw) = table.labels else {
        return Err(CliError::usage(format!(
            "{}: missing label column `{label_column}`",
            path.display()
        )));
    };
    let labels = raw
        .iter()
        .enumerate()
        .map(|(row, name)| {
            class_names.iter().position(|c| c == name).ok_or_else(|| {
                CliError::usage(format!(
                    "{}: row {}: unknown label `{name}` (not a taxonomy leaf)",
                    path.display(),
                    row + 1
                ))
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let data =
        Dataset::new(table.features, labels, class_names.to_vec()).map_err(|e| CliError::core(path.display(), e))?;
    Ok((data, table.columns))
}

/// Writes rows of cells as CSV.
pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::write(path, e))?;
    w.write_record(header).map_err(|e| CliError::write(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

/// Square matrix with names in the header and in the first column.
pub fn write_named_matrix(path: &Path, names: &[String], value: impl Fn(usize, usize) -> String) -> CliResult<()> {
    let mut header = vec![String::new()];
    header.extend(names.iter().cloned());
    let rows = (0..names.len()).map(|i| {
        let mut row = vec![names[i].clone()];
        row.extend((0..names.len()).map(|j| value(i, j)));
        row
    });
    write_csv(path, &header, rows)
}

pub fn write_cost_matrix(path: &Path, metric: &FiniteMetric) -> CliResult<()> {
    write_named_matrix(path, metric.names(), |i, j| metric.cost(i, j).to_string())
}

/// One row per point: name followed by coordinates.
pub fn write_points(path: &Path, names: &[String], points: &Matrix) -> CliResult<()> {
    let mut header = vec!["name".to_string()];
    header.extend((0..points.cols()).map(|j| format!("x{j}")));
    let rows = (0..points.rows()).map(|i| {
        let mut row = vec![names[i].clone()];
        row.extend(points.row(i).iter().map(f64::to_string));
        row
    });
    write_csv(path, &header, rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::write(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e)),
        _ => Ok(()),
    }
}
