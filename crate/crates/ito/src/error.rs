use thiserror::Error;

/// Failures of parsing and differentiation. Positions count characters
/// from the start of the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ItoError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("grading error at position {position}: {message}")]
    Grading { position: usize, message: String },
    #[error("unsupported polynomial: {0}")]
    UnsupportedPolynomial(String),
    #[error("not a differential: {0}")]
    InvalidDifferential(String),
}

impl ItoError {
    pub fn syntax(position: usize, message: impl Into<String>) -> Self {
        ItoError::Syntax {
            position,
            message: message.into(),
        }
    }

    pub fn grading(position: usize, message: impl Into<String>) -> Self {
        ItoError::Grading {
            position,
            message: message.into(),
        }
    }
}
