use std::path::Path;

/// Failure of a command, classified by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: arguments, config, taxonomy, dataset. Exit status 2.
    #[error("{0}")]
    Usage(String),
    /// Numeric or IO failure while running. Exit status 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// Wraps a library error with the input it concerns.
    pub fn core(context: impl std::fmt::Display, e: guided_proto::Error) -> Self {
        use guided_proto::Error as E;
        let msg = format!("{context}: {e}");
        match e {
            E::Diverged { .. } | E::NonFinite(_) | E::DegeneratePrototypes | E::NonDifferentiable | E::EmptyBatch => {
                CliError::Runtime(msg)
            }
            _ => CliError::Usage(msg),
        }
    }

    /// Failure to read an input file.
    pub fn read(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Usage(format!("cannot read {}: {e}", path.display()))
    }

    /// Failure to write an output file.
    pub fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("cannot write {}: {e}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;
