//! Error types shared across the crate.

use thiserror::Error;

/// Failure while evaluating a scalar expression or form at a point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    /// A subexpression hit a pole (tan at an odd multiple of pi/2, division
    /// by a near-zero denominator, negative power of a near-zero base).
    #[error("singular evaluation in {op}: {detail}")]
    Singular { op: &'static str, detail: String },
    /// Evaluation produced a non-finite number that was not caught by a
    /// specific singularity guard.
    #[error("non-finite result while evaluating {op}")]
    NonFinite { op: &'static str },
    /// Point lies outside the chart domain.
    #[error("point {point:?} outside domain of chart `{chart}`")]
    OutOfDomain { chart: String, point: [f64; 3] },
    /// Operation needs a symbolic derivative or substitution the node does
    /// not support (bump and axis-average nodes are evaluation-only).
    #[error("symbolic {op} unsupported for node {node}")]
    SymbolicUnsupported { op: &'static str, node: &'static str },
}

/// Failure in pointwise one-form machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    /// The contact pairing alpha(v) vanished, so the Reeb rescale is refused.
    #[error("degenerate point {point:?}: |alpha(v)| = {pairing:.3e} below threshold")]
    Degenerate { point: [f64; 3], pairing: f64 },
    /// Reeb postcondition residuals exceeded tolerance (indicates a broken
    /// derivative, not a user error).
    #[error("reeb residuals out of tolerance at {point:?}: alpha {alpha_residual:.3e}, dalpha {dalpha_residual:.3e}")]
    ResidualExceeded {
        point: [f64; 3],
        alpha_residual: f64,
        dalpha_residual: f64,
    },
    #[error("charts do not match: expected `{expected}`, got `{got}`")]
    ChartMismatch { expected: String, got: String },
}

/// Failure in expression parsing.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

/// Failure constructing a model form.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model parameter out of range: {0}")]
    Parameter(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Failure in surgery arithmetic or planning.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurgeryError {
    #[error("p = {p} and q = {q} are not coprime")]
    NonCoprime { p: i64, q: i64 },
    #[error("gluing matrix ({p},{q},{s},{t}) has pt - qs = {det}, expected 1")]
    BadDeterminant { p: i64, q: i64, s: i64, t: i64, det: i64 },
    /// Denominator of a transformed slope vanished: the image curve is
    /// meridional.
    #[error("slope at infinity (meridional)")]
    SlopeAtInfinity,
    #[error("no admissible plan for ({p},{q}) within search bounds")]
    PlanExhausted { p: i64, q: i64 },
    #[error("plan invariant violated: {0}")]
    InvalidPlan(String),
    #[error("integer overflow in exact slope arithmetic")]
    Overflow,
    #[error(transparent)]
    Form(#[from] FormError),
}

/// Failure in branched-cover construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoverError {
    #[error("branch data out of range: {0}")]
    BadBranchData(String),
    #[error("bump radii must satisfy 0 < r0 < r1, got ({r0}, {r1})")]
    BadBumpRadii { r0: f64, r1: f64 },
    /// The per-core covering data do not glue to a cover of the lens space.
    #[error("incompatible branching data: composed gluing matrix is not integral")]
    IncompatibleBranching,
    #[error("homology validation failed: matrix gives |H1| = {from_matrix}, presentation gives {from_presentation}")]
    HomologyMismatch {
        from_matrix: String,
        from_presentation: String,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Form(#[from] FormError),
}

/// Failure in flow integration and orbit analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error("field is tangent to the section at {point:?} (|X_s| = {speed:.3e})")]
    TangentSection { point: [f64; 3], speed: f64 },
    #[error("no section return within max time {max_time}")]
    NoReturn { max_time: f64 },
    #[error("newton iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("trajectory drifted off the invariant torus: |rho - rho0| = {drift:.3e}")]
    TorusDrift { drift: f64 },
    #[error("step limit {max_steps} exceeded before reaching target time")]
    StepLimit { max_steps: usize },
    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("floquet multipliers invalid: |l1*l2 - 1| = {defect:.3e} exceeds 1e-6")]
    InvalidMultipliers { defect: f64 },
    #[error("winding number not integral: {value} (coordinate {coord})")]
    NonIntegralWinding { value: f64, coord: usize },
}

impl From<EvalError> for DynError {
    fn from(e: EvalError) -> Self {
        DynError::Form(FormError::Eval(e))
    }
}

impl From<EvalError> for SurgeryError {
    fn from(e: EvalError) -> Self {
        SurgeryError::Form(FormError::Eval(e))
    }
}
