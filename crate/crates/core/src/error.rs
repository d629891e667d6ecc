use alloc::string::String;

/// Everything that can go wrong in the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no nodes")]
    NoNodes,
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("multiple roots: `{0}` and `{1}`")]
    MultipleRoots(String, String),
    #[error("cycle detected through node `{0}`")]
    Cycle(String),
    #[error("orphan node `{0}`: its parent is not part of the taxonomy")]
    Orphan(String),
    #[error("need at least {needed} leaves, found {found}")]
    TooFewLeaves { needed: usize, found: usize },

    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("zero cost between distinct classes {0} and {1}")]
    ZeroCost(usize, usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("distance is not differentiable at coincident points")]
    NonDifferentiable,
    #[error("degenerate prototypes: all pairwise distances are zero")]
    DegeneratePrototypes,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("need at least {needed} classes, found {found}")]
    TooFewClasses { needed: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch} (learning rate {lr}): {what} is not finite")]
    Diverged { epoch: usize, lr: f64, what: &'static str },

    #[error("unknown class {0}")]
    UnknownClass(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("class sets differ")]
    MismatchedClassSets,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
