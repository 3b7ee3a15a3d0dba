use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension must be at least {min}, got {got}")]
    DimensionTooSmall { min: u32, got: u32 },

    #[error("{name} = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("facet budget too small: slab-width radicand {radicand} is not positive")]
    FacetBudgetTooSmall { radicand: f64 },

    #[error("alpha exceeded 1 by {excess}, beyond the 1e-12 clamp tolerance")]
    ClampViolation { excess: f64 },

    #[error("incomplete beta continued fraction did not converge")]
    BetaNotConverged,

    #[error("independent evaluation paths disagree: {first} vs {second} (relative {relative})")]
    PathDisagreement {
        first: f64,
        second: f64,
        relative: f64,
    },

    #[error("quadrature unconverged: error bound {error_bound} on value {value}")]
    Unconverged { value: f64, error_bound: f64 },

    #[error("tail not certified: bound {bound} exceeds tolerance {tolerance}")]
    TailNotCertified { bound: f64, tolerance: f64 },

    #[error("facet count must be an even integer with N/2 >= n, got {given}")]
    BadFacetCount { given: f64 },

    #[error("surface/facet budget inconsistent: radicand {radicand} is not positive")]
    SurfaceBudgetInconsistent { radicand: f64 },

    #[error("inconsistent estimate: {what} = {value} is negative beyond 3 standard errors ({std_error})")]
    InconsistentEstimate {
        what: &'static str,
        value: f64,
        std_error: f64,
    },

    #[error("width search did not converge")]
    SearchNotConverged,
}

pub type Result<T> = std::result::Result<T, Error>;
