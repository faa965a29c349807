//! Error type shared by every numerical operation in the crate.
//!
//! Structural misuse (dimension mismatches between caller-assembled pieces)
//! panics; everything that depends on the numerical data at hand is reported
//! through [`Error`]. Payload values are `f64` regardless of the working
//! scalar so the variants stay non-generic.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A finite-difference stencil left the map's domain box.
    #[error("finite-difference stencil leaves the domain box at coordinate {axis} (x = {coord}, step = {step})")]
    StencilOutsideDomain { axis: usize, coord: f64, step: f64 },

    /// |det| of a Jacobian fell below the representable floor.
    #[error("Jacobian is numerically singular (|det| = {abs_det:e})")]
    SingularJacobian { abs_det: f64 },

    /// The damped Newton solve did not reach the requested residual.
    #[error("Newton solve failed to converge after {iterations} iterations (residual {residual:e}, tol {tol:e})")]
    NewtonDivergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    /// The mixed Hessian block of a generating function was singular at an
    /// iterate, so the implicit solve cannot proceed.
    #[error("generating function is degenerate: mixed second-derivative block singular (|det| = {abs_det:e})")]
    NondegeneracyViolation { abs_det: f64 },

    /// Two path integrals of the candidate 1-form disagreed: the input map is
    /// not symplectic to tolerance.
    #[error("1-form is not closed: two paths disagree by {discrepancy:e} (tol {tol:e})")]
    ClosednessViolation { discrepancy: f64, tol: f64 },

    /// Doubling the quadrature nodes moved the result more than allowed; the
    /// kernel is under-resolved.
    #[error("quadrature inconsistency: node doubling changed the result by {change:e} (tol {tol:e})")]
    QuadratureInconsistency { change: f64, tol: f64 },

    /// The perturbation is outside the certified perturbative regime. Carries
    /// the largest amplitude the downward search could certify.
    #[error("perturbation amplitude {requested:e} not certifiable (largest certified amplitude {certified:e})")]
    DeltaTooLarge { requested: f64, certified: f64 },

    /// The volume-preserving extension requires dim(W) <= codim(W).
    #[error("dimension violation: disk dimension {k} exceeds codimension {codim}")]
    DimensionViolation { k: usize, codim: usize },

    /// An eigenvalue sits on (or numerically at) the unit circle.
    #[error("matrix is not hyperbolic: eigenvalue modulus {modulus} within {tol:e} of 1")]
    NotHyperbolic { modulus: f64, tol: f64 },

    /// (Df)^T J (Df) - J residual above tolerance.
    #[error("matrix is not symplectic: residual {residual:e} exceeds tol {tol:e}")]
    NotSymplectic { residual: f64, tol: f64 },

    /// A constructed map failed the contraction certificate.
    #[error("map is not a contraction: {reason}")]
    NotAContraction { reason: String },

    /// The orbit of x meets the neighborhood of the reference compact set.
    #[error("orbits are not separated: minimum gap {min_gap:e} below margin {margin:e}")]
    OrbitsNotSeparated { min_gap: f64, margin: f64 },

    /// The requested Jacobian gap cannot be realized by an embedding-preserving bump.
    #[error("Jacobian gap {requested:e} infeasible: amplitude cap allows at most {max_feasible:e}")]
    GapInfeasible { requested: f64, max_feasible: f64 },

    /// Newton inversion of a chart failed.
    #[error("chart inversion failed at a probe point (residual {residual:e})")]
    ChartInversionFailure { residual: f64 },

    /// Two candidate powers both fit a probe within tolerance.
    #[error("ambiguous power match at probe {probe}: powers {i} and {j} both fit within {tol:e}")]
    AmbiguousMatch {
        probe: usize,
        i: i64,
        j: i64,
        tol: f64,
    },

    /// The bell family could not bracket a plateau with unit integral.
    #[error("no feasible plateau for the bell family (hint {hint})")]
    NoFeasiblePlateau { hint: f64 },

    /// A constructed input failed its own declared invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
