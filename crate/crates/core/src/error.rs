use thiserror::Error;

/// Failures of the operator layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NcError {
    #[error("matrix is not Hermitian: |x[{row},{col}] - conj(x[{col},{row}])| = {deviation:e}")]
    NonHermitianInput {
        row: usize,
        col: usize,
        deviation: f64,
    },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("operator dimension must be at least 1")]
    EmptyOperator,
    #[error("spectrum must be nonempty")]
    EmptySpectrum,
    #[error("multiplicity must be a positive integer")]
    InvalidMultiplicity,
    #[error("operator has a non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },
    #[error("operator is singular: eigenvalue {eigenvalue:e} is below the inversion threshold")]
    SingularOperator { eigenvalue: f64 },
    #[error("spectrum reaches {eigenvalue:e}, below the clipping tolerance for a fractional root")]
    NegativeSpectrum { eigenvalue: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}
