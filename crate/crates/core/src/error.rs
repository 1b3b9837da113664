use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Each variant carries enough context to be rendered as a structured
/// diagnostic; [`Error::name`] gives the stable machine-readable tag.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("division by the zero polynomial")]
    DivisionByZero,

    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("point {z} is not a simple root (|p'| = {derivative:e})")]
    RootNotSimple { z: String, derivative: f64 },

    #[error("radius {radius} too large: another root lies at distance {distance}")]
    RadiusTooLarge { radius: f64, distance: f64 },

    #[error("linear identity has no solution (relative residual {residual:e})")]
    NoSolution { residual: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("boundary rays {theta_a} and {theta_b} lie in adjacent (or equal) Stokes sectors {sector_a} and {sector_b}")]
    AdjacentSectors {
        theta_a: f64,
        theta_b: f64,
        sector_a: usize,
        sector_b: usize,
    },

    #[error("potential is not normalized: {0}")]
    NotNormalized(String),

    #[error("ray at angle {theta} is not recessive: {reason}")]
    RayNotRecessive { theta: f64, reason: String },

    #[error("WKB branch is ambiguous at radius {radius} on ray {theta} (|Re| / |s| = {ratio:e}); increase the seed radius")]
    BranchAmbiguous { theta: f64, radius: f64, ratio: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepFailure { t: f64, h: f64 },

    #[error("problem is not conjugate-symmetric")]
    NotSymmetric,

    #[error("contour passes through a zero (winding residual {residual})")]
    ContourThroughZero { residual: f64 },

    #[error("box subdivision limit reached with {remaining} unresolved zeros")]
    SubdivisionLimit { remaining: usize },

    #[error("eigenfunction has a zero within {distance:e} of the contour")]
    BoundaryZero { distance: f64 },

    #[error("singular point of the locus near ({x}, {lambda}) (|grad H| = {gradient:e})")]
    SingularPoint { x: f64, lambda: f64, gradient: f64 },

    #[error("corrector diverged near ({x}, {lambda})")]
    CorrectorDiverged { x: f64, lambda: f64 },

    #[error("degenerate eigenvalue: {0}")]
    DegenerateEigenvalue(String),

    #[error("Wronskian is not constant; non-constant coefficients {coefficients:?}")]
    WronskianNotConstant { coefficients: Vec<f64> },

    #[error("Bethe iterates collided (distance {distance:e})")]
    Collision { distance: f64 },

    #[error("lost track of the branch at b = {b}")]
    BranchTrackingLost { b: f64 },
}

impl Error {
    /// Stable identifier used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DivisionByZero => "DivisionByZero",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::RootNotSimple { .. } => "RootNotSimple",
            Error::RadiusTooLarge { .. } => "RadiusTooLarge",
            Error::NoSolution { .. } => "NoSolution",
            Error::InvalidParams(_) => "InvalidParams",
            Error::AdjacentSectors { .. } => "AdjacentSectors",
            Error::NotNormalized(_) => "NotNormalized",
            Error::RayNotRecessive { .. } => "RayNotRecessive",
            Error::BranchAmbiguous { .. } => "BranchAmbiguous",
            Error::StepFailure { .. } => "StepFailure",
            Error::NotSymmetric => "NotSymmetric",
            Error::ContourThroughZero { .. } => "ContourThroughZero",
            Error::SubdivisionLimit { .. } => "SubdivisionLimit",
            Error::BoundaryZero { .. } => "BoundaryZero",
            Error::SingularPoint { .. } => "SingularPoint",
            Error::CorrectorDiverged { .. } => "CorrectorDiverged",
            Error::DegenerateEigenvalue(_) => "DegenerateEigenvalue",
            Error::WronskianNotConstant { .. } => "WronskianNotConstant",
            Error::Collision { .. } => "Collision",
            Error::BranchTrackingLost { .. } => "BranchTrackingLost",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
