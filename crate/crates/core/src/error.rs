use thiserror::Error;

/// Errors raised by the spectral and algebraic routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid algebra shape: {0}")]
    InvalidShape(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported spectral structure: {0}")]
    UnsupportedStructure(String),

    #[error("numerical rank failure: {0}")]
    NumericalRank(String),

    #[error("fit refused: {0}")]
    FitRefused(String),

    #[error("theorem violation: {0}")]
    TheoremViolation(String),

    #[error("cohomology violation: {0}")]
    CohomologyViolation(String),

    #[error("resolvent blow-up on the contour: {0}")]
    ResolventBlowUp(String),

    #[error("step refinement required: {0}")]
    StepRefinement(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
