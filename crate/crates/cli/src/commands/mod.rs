pub mod cost;
pub mod embed;
pub mod eval;
pub mod infer;
pub mod synth;
pub mod train;

use guided_proto::evaluation::class_means;
use guided_proto::inference::{decide, CostTable};
use guided_proto::model::Head;
use guided_proto::{
    build_index, cost_matrix, distortion_report, evaluate, Classifier, Dataset, DistanceSpec, DistortionReport,
    EvalReport, FiniteMetric, Matrix, NodeSet, Prediction, PrototypeIndex, PrototypeSet, Scheme, Taxonomy,
};

use crate::error::{CliError, CliResult};

/// Applies one scheme to a trained classifier.
pub struct Predictor<'a> {
    classifier: &'a Classifier,
    scheme: Scheme,
    /// Leaves for max-prob and min-expected-cost, all nodes for any-node.
    metric: FiniteMetric,
    table: CostTable,
    index: Option<PrototypeIndex>,
    exhaustive: bool,
}

impl<'a> Predictor<'a> {
    pub fn new(classifier: &'a Classifier, tax: &Taxonomy, scheme: Scheme, exhaustive: bool) -> CliResult<Self> {
        let nodes = if scheme == Scheme::AnyNode {
            NodeSet::All
        } else {
            NodeSet::Leaves
        };
        let metric = cost_matrix(tax, nodes).map_err(|e| CliError::core("taxonomy", e))?;
        let index = match &classifier.head {
            Head::Prototypes(pi) => Some(build_index(pi).map_err(|e| CliError::core("prototypes", e))?),
            Head::Logits(_) => None,
        };
        Ok(Self {
            classifier,
            scheme,
            table: CostTable::new(&metric, scheme == Scheme::AnyNode),
            metric,
            index,
            exhaustive,
        })
    }

    /// Metric whose rows the predictions index.
    pub fn metric(&self) -> &FiniteMetric {
        &self.metric
    }

    pub fn predict(&self, x: &[f64]) -> CliResult<(Prediction, f64)> {
        let numeric = |e| CliError::core("prediction", e);
        let e = self.classifier.embed(x).map_err(numeric)?;
        let posterior = self.classifier.posterior_of_embedding(&e).map_err(numeric)?;
        let mut p = decide(posterior, self.scheme, &self.table).map_err(numeric)?;
        if let (Scheme::MaxProb, Some(index)) = (self.scheme, &self.index) {
            // nearest prototype through the index rather than the posterior argmax
            let class = if self.exhaustive {
                index.nearest_exhaustive(&e)
            } else {
                index.nearest(&e)
            }
            .map_err(numeric)?;
            let i = self
                .table
                .candidates()
                .iter()
                .position(|&r| r == class)
                .expect("leaf table covers every class");
            p.row = class;
            p.node_id = self.table.node_ids()[i];
            p.is_leaf = true;
        }
        let ec = guided_proto::expected_costs(&p.posterior, &self.table).map_err(numeric)?;
        let at = self
            .table
            .candidates()
            .iter()
            .position(|&r| r == p.row)
            .expect("prediction is a candidate");
        Ok((p, ec[at]))
    }
}

/// Predicts every row of `data` and scores the predictions.
///
/// Distortion diagnostics use the leaf prototypes, or for logit heads the
/// class means of the embeddings of `means_from`.
pub fn score(
    classifier: &Classifier,
    tax: &Taxonomy,
    data: &Dataset,
    scheme: Scheme,
    means_from: &Dataset,
) -> CliResult<(EvalReport, Vec<Prediction>)> {
    let predictor = Predictor::new(classifier, tax, scheme, false)?;
    let mut predictions = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        predictions.push(predictor.predict(data.features().row(i))?.0);
    }
    let rows: Vec<usize> = predictions.iter().map(|p| p.row).collect();
    let mut report =
        evaluate(&rows, data.labels(), predictor.metric(), None).map_err(|e| CliError::core("evaluation", e))?;
    report.distortion = distortion_of(classifier, tax, means_from)?;
    Ok((report, predictions))
}

fn distortion_of(classifier: &Classifier, tax: &Taxonomy, means_from: &Dataset) -> CliResult<Option<DistortionReport>> {
    let leaves = cost_matrix(tax, NodeSet::Leaves).map_err(|e| CliError::core("taxonomy", e))?;
    let (coords, spec) = match &classifier.head {
        Head::Prototypes(pi) => (pi.leaf_coords(), classifier.distance),
        Head::Logits(_) => {
            let mut rows = Vec::with_capacity(means_from.len());
            for i in 0..means_from.len() {
                rows.push(
                    classifier
                        .embed(means_from.features().row(i))
                        .map_err(|e| CliError::core("embedding", e))?,
                );
            }
            let embeddings = Matrix::from_rows(&rows).map_err(|e| CliError::core("embedding", e))?;
            match class_means(&embeddings, means_from.labels(), leaves.len()) {
                Ok(m) => (m, DistanceSpec::euclidean()),
                // a class without samples has no mean
                Err(_) => return Ok(None),
            }
        }
    };
    let pi = PrototypeSet::for_metric(&leaves, coords).map_err(|e| CliError::core("prototypes", e))?;
    match distortion_report(&pi, &leaves, &spec) {
        Ok(r) => Ok(Some(r)),
        Err(guided_proto::Error::DegeneratePrototypes) => Ok(None),
        Err(e) => Err(CliError::core("distortion", e)),
    }
}

/// Writes the confusion matrix with true classes as rows.
pub fn write_confusion(path: &std::path::Path, report: &EvalReport) -> CliResult<()> {
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(report.predicted_names.iter().cloned());
    let rows = report.confusion.iter().zip(&report.class_names).map(|(row, name)| {
        let mut cells = vec![name.clone()];
        cells.extend(row.iter().map(u64::to_string));
        cells
    });
    crate::io::write_csv(path, &header, rows)
}
