//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Bad argument to an operation (out-of-range index, mismatched shape, ...).
    #[error("argument error: {0}")]
    Argument(String),

    /// Arithmetic outside the operation's domain (division by zero, log of a
    /// nonpositive value, sqrt of a negative value, ...). Carries the tangent
    /// sample where the evaluation failed when one is known.
    #[error("domain error: {what}{}", location_suffix(.location))]
    Domain {
        what: String,
        location: Option<(Vec<f64>, Vec<f64>)>,
    },

    /// Expression source could not be parsed.
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    /// A linear solve hit a (numerically) singular matrix.
    #[error("linear algebra error: {what}{}", location_suffix(.location))]
    Singular {
        what: String,
        location: Option<(Vec<f64>, Vec<f64>)>,
    },

    /// A structure failed an axiom or construction check.
    #[error("validation error: {0}")]
    Validation(String),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn domain(what: impl Into<String>) -> Self {
        Error::Domain {
            what: what.into(),
            location: None,
        }
    }

    pub fn singular(what: impl Into<String>) -> Self {
        Error::Singular {
            what: what.into(),
            location: None,
        }
    }

    /// Attaches sample coordinates to domain/singular errors so failures can
    /// be traced back to the evaluation site.
    pub fn at_sample(self, x: &[f64], y: &[f64]) -> Self {
        let loc = Some((x.to_vec(), y.to_vec()));
        match self {
            Error::Domain { what, location } => Error::Domain {
                what,
                location: location.or(loc),
            },
            Error::Singular { what, location } => Error::Singular {
                what,
                location: location.or(loc),
            },
            other => other,
        }
    }
}

fn location_suffix(location: &Option<(Vec<f64>, Vec<f64>)>) -> String {
    match location {
        Some((x, y)) => format!(" at x={x:?}, y={y:?}"),
        None => String::new(),
    }
}
