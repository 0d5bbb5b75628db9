use thiserror::Error;

/// Errors produced by the forward model, the inversion stages and their IO helpers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("`{name}` = {value} is outside the valid domain ({reason})")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("calm wind: horizontal speed {speed} m/s is below the plume validity threshold")]
    CalmWind { speed: f64 },

    #[error("measurement index {index} out of range for sensor `{sensor}` ({count} measurements)")]
    IndexOutOfRange {
        sensor: String,
        index: usize,
        count: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by bad inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Domain { .. }
                | Error::CalmWind { .. }
                | Error::IndexOutOfRange { .. }
                | Error::Config(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
