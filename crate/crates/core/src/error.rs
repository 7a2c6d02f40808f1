use thiserror::Error;

/// Failures raised by the constructions and evaluators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in `{field}`: {msg}")]
    Domain { field: String, msg: String },
    #[error("{stage}: {msg}")]
    Construction { stage: String, msg: String },
    #[error("search exhausted in {stage} after {steps} steps")]
    SearchExhausted { stage: String, steps: usize },
    #[error("quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(field: &str, msg: impl Into<String>) -> Self {
        Error::Domain { field: field.to_string(), msg: msg.into() }
    }

    pub fn construction(stage: &str, msg: impl Into<String>) -> Self {
        Error::Construction { stage: stage.to_string(), msg: msg.into() }
    }

    pub fn exhausted(stage: &str, steps: usize) -> Self {
        Error::SearchExhausted { stage: stage.to_string(), steps }
    }

    /// Prefix the stage with the pipeline step that raised it.
    pub fn in_stage(self, outer: &str) -> Self {
        match self {
            Error::Construction { stage, msg } => Error::Construction { stage: format!("{outer}/{stage}"), msg },
            Error::SearchExhausted { stage, steps } => Error::SearchExhausted { stage: format!("{outer}/{stage}"), steps },
            other => Error::Construction { stage: outer.to_string(), msg: other.to_string() },
        }
    }

    /// Name of the offending input field, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::Domain { field, .. } => Some(field),
            _ => None,
        }
    }
}
