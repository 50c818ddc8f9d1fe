use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),
    /// Argument outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Query point outside the region where an operation is defined.
    #[error("region error: {0}")]
    Region(String),
    /// An iterative solver did not reach its tolerance.
    #[error("numerical error: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },
    /// The tangency data violate the requested feasibility inequality.
    #[error("infeasible data: pair ({first}, {second}) violates the inequality by {violation:e}")]
    Infeasible {
        first: usize,
        second: usize,
        violation: f64,
    },
    /// Two data share a point but carry different normals.
    #[error("data {first} and {second} share a point but have different normals")]
    DuplicatePoint { first: usize, second: usize },
    /// The two envelope backends disagree beyond tolerance.
    #[error(
        "envelope backends disagree at {point:?}: grid {grid} vs direct {direct} (tolerance {tolerance:e})"
    )]
    BackendDisagreement {
        point: Vec<f64>,
        grid: f64,
        direct: f64,
        tolerance: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
