//! Versioned JSON checkpoints of trained classifiers.

use std::path::Path;

use guided_proto::model::Head;
use guided_proto::{parse_taxonomy, Classifier, Taxonomy, TaxonomyFormat, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;

const FORMAT: &str = "guided-proto-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Taxonomy in edge-list form.
    pub taxonomy: String,
    /// Leaf classes, in the order of the classifier outputs.
    pub class_names: Vec<String>,
    pub feature_columns: Vec<String>,
    pub config: TrainConfig,
    pub classifier: Classifier,
}

impl Checkpoint {
    pub fn new(tax: &Taxonomy, feature_columns: Vec<String>, config: TrainConfig, classifier: Classifier) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            taxonomy: tax.to_edge_list(),
            class_names: tax.leaves().iter().map(|&l| tax.name(l).to_string()).collect(),
            feature_columns,
            config,
            classifier,
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::usage(format!("checkpoint {} does not exist", path.display())));
        }
        let ck: Self = io::read_json(path)?;
        let bad = |m: String| Err(CliError::usage(format!("{}: {m}", path.display())));
        if ck.format != FORMAT {
            return bad(format!("not a checkpoint (format `{}`)", ck.format));
        }
        if ck.version != VERSION {
            return bad(format!("unsupported checkpoint version {}", ck.version));
        }
        let c = &ck.classifier;
        if c.model.input_dim() != ck.feature_columns.len() {
            return bad("model input size does not match the feature columns".into());
        }
        if c.head.n_classes() != ck.class_names.len() {
            return bad("head size does not match the class list".into());
        }
        let finite = c.model.params().iter().chain(c.head.params()).all(|x| x.is_finite());
        if !finite {
            return bad("non-finite parameters".into());
        }
        if let Head::Prototypes(pi) = &c.head {
            if pi.dim() != c.model.output_dim() {
                return bad("prototype size does not match the embedding size".into());
            }
        }
        let tax = ck.taxonomy()?;
        let leaves: Vec<String> = tax.leaves().iter().map(|&l| tax.name(l).to_string()).collect();
        if leaves != ck.class_names {
            return bad("class list does not match the taxonomy leaves".into());
        }
        Ok(ck)
    }

    pub fn taxonomy(&self) -> CliResult<Taxonomy> {
        parse_taxonomy(&self.taxonomy, TaxonomyFormat::EdgeList).map_err(|e| CliError::core("checkpoint taxonomy", e))
    }
}
