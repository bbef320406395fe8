//! Adini finite element library for the clamped biharmonic problem
//! `Δ²u = f`, `u = ∂u/∂n = 0`, on d-rectangular tensor meshes (d = 1, 2, 3).
//!
//! Two arithmetic worlds coexist:
//!
//! * **Exact**: multivariate polynomials over arbitrary-precision rationals
//!   ([`polyq`]) drive element construction ([`element`]) and the structural
//!   identity checks (opposite-face trace equality, the face expansion of the
//!   bilinear interpolation residual, the interpolation-error Hessian
//!   identity). These hold as exact rational equalities, not to a tolerance.
//! * **Floating point**: assembly ([`assembly`]), Gauss quadrature
//!   ([`quadrature`]), solvers ([`linsolve`]) and convergence studies
//!   ([`analysis`]) run on `f64` twins of the exact basis.
//!
//! The element is nonconforming for fourth-order problems: the discrete
//! energy is the broken Hessian seminorm summed over cells, and convergence
//! studies measure observed orders against manufactured solutions.

pub mod analysis;
pub mod assembly;
pub mod element;
pub mod field;
pub mod linsolve;
pub mod mesh;
pub mod polyq;
pub mod quadrature;

use thiserror::Error;

/// Crate-wide error type for fallible operations on runtime input
/// (meshes, solver configuration, file formats). Violated mathematical
/// preconditions inside the exact layer panic instead: they are bugs,
/// not recoverable states.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("dimension {0} unsupported (expected 1, 2 or 3)")]
    BadDimension(usize),
    #[error("degenerate domain on axis {0}: upper bound must exceed lower bound")]
    DegenerateDomain(usize),
    #[error("axis {0} needs at least one subdivision")]
    EmptyAxis(usize),
    #[error("breakpoints on axis {0} must be strictly increasing")]
    UnsortedBreakpoints(usize),
    #[error("jitter fraction {0} outside [0, 0.45]")]
    BadJitter(f64),
    #[error("quadrature order {0} outside supported range 1..=16")]
    BadQuadOrder(usize),
    #[error("quadrature Newton iteration failed to locate node {node} of rule n={n}")]
    QuadNoConvergence { n: usize, node: usize },
    #[error("no free degrees of freedom: every vertex of the mesh is clamped")]
    NoFreeDofs,
    #[error("matrix is singular to working precision (pivot {pivot:.3e} at step {step})")]
    SingularMatrix { step: usize, pivot: f64 },
    #[error(
        "conjugate gradients stopped at maxit={maxit} with relative residual {residual:.6e}"
    )]
    CgStalled {
        maxit: usize,
        residual: f64,
        /// Best iterate found so far, returned for diagnostics.
        best: Vec<f64>,
    },
    #[error("jittered studies refine the coarsest level: {0} is not a multiple of {1}")]
    BadStudyLevels(usize, usize),
    #[error("need at least two error records to observe a convergence order")]
    TooFewRecords,
    #[error("error records must have strictly decreasing mesh size h")]
    NonDecreasingH,
    #[error("parse error in {what} at line {line}: {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        msg: String,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
