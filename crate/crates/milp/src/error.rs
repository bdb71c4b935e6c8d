use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    Malformed(String),

    /// The basis matrix could not be inverted even after a fresh refactorization.
    #[error("singular basis after refactorization (iteration {iteration}); basis: {basis_dump}")]
    SingularBasis { iteration: usize, basis_dump: String },

    #[error("LP format parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, SolverError>;
