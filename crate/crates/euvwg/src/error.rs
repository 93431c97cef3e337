use thiserror::Error;

/// Library-wide error type. Variants map onto the CLI exit codes: bad inputs
/// and malformed configuration are distinct from runtime numerical failures
/// and from validation-gate failures.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input: bad geometry, incommensurate source, unknown names,
    /// malformed files.
    #[error("config: {0}")]
    Config(String),

    /// Operand shapes do not line up. Indicates an internal inconsistency in
    /// the caller rather than bad user input.
    #[error("shape: {0}")]
    Shape(String),

    /// Numerical failure at runtime: non-convergence, singular systems,
    /// non-finite values.
    #[error("numerical: {0}")]
    Numerical(String),

    /// A validation gate failed.
    #[error("validation: {0}")]
    Validation(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
