//! Toolkit for difference-of-convex (dc) optimization with piecewise-max structure.
//!
//! The central object is a program
//!
//! ```text
//!   minimize  zeta(x) = phi(x) - sum_i max_k psi_{i,k}(x)   over x in X,
//! ```
//!
//! where `phi` is convex (smooth plus an optional piecewise max), every
//! `psi_{i,k}` is smooth convex, and `X` is a polyhedron. Module map:
//!
//! - [`funcs`]: convex atoms, weighted sums, piecewise maxima, directional derivatives
//! - [`sets`]: polyhedra with projection (Dykstra) and active-set queries
//! - [`subsolver`]: strongly convex proximal subproblems over a polyhedron,
//!   with optional smooth convex constraints
//! - [`dca`]: the surrogate-descent iterations (all epsilon-active pieces,
//!   randomized piece sampling, and the classical single-piece baseline)
//! - [`certify`]: stationarity certificates (d-stationary, critical, Clarke)
//! - [`dcc`]: dc constraints — merging, constraint qualification, B-stationarity,
//!   the feasible-iterates method, and the exact penalty scheme
//! - [`consensus`]: duplicated-variable consensus splitting for grouped programs
//! - [`decomp`]: dc decomposition of parametric bivariate-term maxima
//! - [`models`]: worked problem builders (secrecy rates, complementarity toys, gallery)
//! - [`json`]: serde wire formats for problems, models, and reports

pub mod certify;
pub mod consensus;
pub mod dca;
pub mod dcc;
pub mod decomp;
pub mod funcs;
pub mod json;
pub mod models;
pub mod sets;
pub mod subsolver;

pub(crate) mod util;

/// Errors shared across the toolkit.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A function was evaluated outside its domain (e.g. `-log` of a
    /// nonpositive argument).
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// Construction-time validation failed (dimensions, signs, curvature).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A constraint system is empty (beyond tolerance).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A query point does not belong to the required set.
    #[error("point not feasible: {0}")]
    NotFeasible(String),

    /// An iterative method must start inside the feasible region and did not.
    #[error("infeasible start: {0}")]
    InfeasibleStart(String),

    /// An iterative routine hit its cap without meeting its tolerance.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// Flattening grouped pieces would create too many tuples.
    #[error("piece tuple explosion: {count} tuples exceeds cap {cap}")]
    TupleExplosion { count: usize, cap: usize },

    /// The requested check is not defined for this structure.
    #[error("unsupported structure: {0}")]
    UnsupportedStructure(String),

    /// A boundary-only check was invoked at an interior point.
    #[error("not on the constraint boundary: {0}")]
    NotOnBoundary(String),

    /// A declared-convex (or declared-concave) term failed a convexity probe.
    #[error("curvature mismatch: {0}")]
    CurvatureMismatch(String),

    /// Unknown gallery or method name.
    #[error("unknown name: {0}")]
    UnknownName(String),
}

pub type Result<T> = std::result::Result<T, Error>;
