//! Error types, one enum per subsystem.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point {0:?} is not strictly interior to the domain")]
    NotInterior([f64; 3]),
    #[error("direction {0:?} is not a unit vector")]
    BadDirection([f64; 3]),
    #[error("ray grazes a face tangentially at {point:?} (|omega.nu| = {cosine:.3e})")]
    TangentFace { point: [f64; 3], cosine: f64 },
    #[error("point {0:?} does not lie on the boundary")]
    NotOnBoundary([f64; 3]),
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("no lattice point falls inside the domain (nx = {nx})")]
    EmptyGrid { nx: usize },
    #[error("field shaped for {expected} phase nodes, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("grid counts must be at least 2 (got {0})")]
    TooCoarse(usize),
    #[error("unsupported norm exponent {0}, expected 1, 2 or 3")]
    BadExponent(u32),
}

#[derive(Debug, Error)]
pub enum XsError {
    #[error("negative cross-section data: {what} = {value:.3e}")]
    NegativeData { what: String, value: f64 },
    #[error("field shape mismatch: {0}")]
    Shape(#[from] GridError),
    #[error("tabulated kernel would need {need} bytes (limit {limit})")]
    TableTooLarge { need: usize, limit: usize },
    #[error("unknown kernel family '{0}'")]
    UnknownKernel(String),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e}, tol {tol:.3e})")]
    NoConvergence { iterations: usize, residual: f64, tol: f64 },
    #[error("angular grid is not antipodally symmetric (worst pairing error {0:.3e})")]
    AsymmetricGrid(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Xs(#[from] XsError),
}

#[derive(Debug, Error)]
pub enum TimeError {
    #[error("collision exponential truncated too early: tail estimate {tail:.3e} exceeds {limit:.3e}; shrink dt or raise the series order")]
    SeriesDivergence { tail: f64, limit: f64 },
    #[error("explicit boundary solution requires a kernel-free configuration")]
    HasKernel,
    #[error("species kinematics need E0 > 0, grid has E0 = {0}")]
    ZeroEnergyFloor(f64),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("objective exponent must be 1 or 2, got {0}")]
    BadExponent(u32),
    #[error("gradient-based optimization requires p = 2")]
    NeedsQuadratic,
    #[error("fixed point did not converge in {iterations} iterations (update {update:.3e}); try a smaller damping factor")]
    NoConvergence { iterations: usize, update: f64 },
    #[error("line search stalled (step {0:.3e})")]
    LineSearchStall(f64),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("cross sections violate sub-criticality (c_row = {0:.3e}); analog histories cannot terminate")]
    SubCriticalViolation(f64),
    #[error("no particles requested")]
    ZeroSource,
    #[error("unsupported configuration for this oracle: {0}")]
    WrongConfiguration(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown key '{key}' (line {line})")]
    UnknownKey { key: String, line: usize },
    #[error("missing required key '{0}'")]
    MissingKey(String),
    #[error("key '{key}': {msg}")]
    BadValue { key: String, msg: String },
    #[error("unknown {family} '{name}', known: {known}")]
    UnknownStrategy { family: &'static str, name: String, known: String },
}
