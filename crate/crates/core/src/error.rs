use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-orthonormal spectral data: Gram defect {0:.3e}")]
    NotOrthonormal(f64),
    #[error("eigenvalues not ascending at index {0}")]
    NotAscending(usize),
    #[error("zero-mean profile: Taylor mechanism degenerate")]
    ZeroMean,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("branch tracking unreliable: {0}")]
    Branch(String),
    #[error("window too wide or truncation too small (residual {0:.3e})")]
    FitResidual(f64),
    #[error("mu-norm zero: functional degenerate")]
    DegenerateFunctional,
    #[error("field not localized: boundary ratio {0:.3e}")]
    NotLocalized(f64),
    #[error("grid under-resolved: {0}")]
    UnderResolved(String),
    #[error("integrator failure: {0}")]
    Integrator(String),
    #[error("eigensolver failure at kappa = {0}")]
    Eigensolver(f64),
}

pub type Result<T> = std::result::Result<T, LabError>;
