use thiserror::Error;

/// Failure modes of every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input norm {norm} is not within tolerance of 1")]
    NonUnitInput { norm: f64 },
    #[error("empty or too short input")]
    EmptyInput,
    #[error("eta = {eta} lies outside the hyperspherical chart")]
    ChartBoundary { eta: f64 },
    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("excluded endpoint: {0}")]
    ExcludedEndpoint(String),
    #[error("recovered data misses the endpoint by {error}")]
    BranchInconsistency { error: f64 },
    #[error("negative radicand {value}")]
    NegativeRadicand { value: f64 },
    #[error("oscillation amplitude vanishes but eta must move")]
    DegenerateOscillation,
    #[error("arcsin argument {value} outside [-1, 1]")]
    ArgumentOutOfRange { value: f64 },
    #[error("tangent pole crossed at s = {s}")]
    PoleCrossing { s: f64 },
    #[error("no solution for branches n in [{n_min}, {n_max}]")]
    NoSolutionInBranchRange { n_min: i32, n_max: i32 },
    #[error("closed form {closed} disagrees with quadrature {quadrature}")]
    BranchMismatch { closed: f64, quadrature: f64 },
    #[error("finite-difference stencil leaves the admissible domain")]
    StencilOutOfDomain,
    #[error("target lies on the vertical line through the base point")]
    VerticalLineTarget,
    #[error("no critical point of the action found")]
    NoCriticalPointFound,
    #[error("tau = {tau} is within exclusion distance of the pole {pole}")]
    SingularTau { tau: f64, pole: f64 },
    #[error("no root on branch {branch}")]
    NoRootInBranch { branch: i32 },
    #[error("theta = {theta} is at a turning point")]
    TurningPoint { theta: f64 },
    #[error("quadrature not converged (relative change {change})")]
    NonConvergent { change: f64 },
    #[error("collocation system is rank deficient (rank {rank} of {cols})")]
    IllConditioned { rank: usize, cols: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
