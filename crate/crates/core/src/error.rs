use thiserror::Error;

/// Failure modes shared by every module of the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("outcome grid too narrow: edge density {edge_density:.3e} (normalization defect {normalization_defect:.3e})")]
    Range {
        edge_density: f64,
        normalization_defect: f64,
    },

    #[error("outcome has vanishing probability {probability:.3e}")]
    ZeroProbability { probability: f64 },

    #[error("completeness defect {defect:.3e} exceeds {tolerance:.1e}")]
    Completeness { defect: f64, tolerance: f64 },

    #[error("infeasible feedback: displacement {required:.4} needs |beta| >= {required:.4}, got {beta:.4}")]
    InfeasibleFeedback { required: f64, beta: f64 },

    #[error("density is not normalized (defect {defect:.3e})")]
    Unnormalized { defect: f64 },

    #[error("degenerate measurement: marginal variance {variance:.3e}")]
    DegenerateMeasurement { variance: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
