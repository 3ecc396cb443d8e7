//! Numerical laboratory for the 2-D magnetic Prandtl boundary layer in the
//! Prandtl-Hartmann regime.
//!
//! The model is the reduced boundary-layer system
//!
//! ```text
//! u u_x + v u_y - u_yy + u - 1 = 0,      u_x + v_y = 0,
//! u(x,0) = v(x,0) = 0,                   u(x,y) -> 1  (y -> infinity),
//! ```
//!
//! where `x` is time-like and the magnetic coupling has been reduced to the
//! damping term `u - 1`. The tangential magnetic component is recovered from
//! `b_y = 1 - u`. The system relaxes toward the Hartmann layer
//! `u_bar(y) = 1 - exp(-y)`, and this crate provides the tools to march the
//! evolution and measure that relaxation quantitatively:
//!
//! - [`numerics`]: nonuniform grids, quadrature, finite differences,
//!   tridiagonal solves, monotone interpolation, root finding, log-linear fits.
//! - [`equilibrium`]: the closed-form Hartmann layer in physical and
//!   von-Mises coordinates.
//! - [`profiles`]: initial-data families with exact wall derivatives.
//! - [`transforms`]: forward/inverse von-Mises transforms and reconstruction
//!   of `(u, v, b)` from either solver's output.
//! - [`solver_vm`]: implicit marching in von-Mises variables, in the `w = u^2`
//!   form and in the perturbation form `phi = u^2 - u_bar^2`.
//! - [`solver_eps`]: marching for the epsilon-regularized physical-variable
//!   system and the epsilon-ladder driver for the limit `eps -> 0`.
//! - [`diagnostics`]: weighted norms, the monitored functionals, compatibility
//!   checks, Hardy-inequality checks, physical-variable decay series, and
//!   decay certificates.
//!
//! All solvers are deterministic: identical inputs produce identical outputs.

pub mod diagnostics;
pub mod equilibrium;
pub mod numerics;
pub mod profiles;
pub mod solver_eps;
pub mod solver_vm;
pub mod transforms;

/// Crate-wide error type.
///
/// Variants are grouped by the subsystem that raises them; solver errors carry
/// the marching station `x` at which the step failed.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // ---- generic parameter / shape errors -------------------------------
    /// A precondition on a scalar parameter was violated.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Two arrays that must have equal lengths do not.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    /// An input value is NaN or infinite.
    #[error("non-finite input at index {index}")]
    NonFiniteInput { index: usize },

    // ---- numerics -------------------------------------------------------
    /// A pivot fell below the configured floor during tridiagonal elimination.
    #[error("singular pivot at row {row}: |pivot| = {magnitude:.3e} below floor {floor:.3e}")]
    SingularPivot {
        row: usize,
        magnitude: f64,
        floor: f64,
    },
    /// An interpolation query lies outside the source abscissae.
    #[error("query point {value} outside source range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    /// Both bracket endpoints have the same sign.
    #[error("no sign change over [{a}, {b}]: f(a) = {fa:.3e}, f(b) = {fb:.3e}")]
    NoSignChange { a: f64, b: f64, fa: f64, fb: f64 },
    /// The root iteration exhausted its iteration budget.
    #[error("root finder exceeded {max_iters} iterations (|f| = {residual:.3e}, tol = {tol:.3e})")]
    MaxIterations {
        max_iters: usize,
        residual: f64,
        tol: f64,
    },
    /// A log-linear fit was asked to process a nonpositive ordinate.
    #[error("nonpositive sample at index {index}: {value}")]
    NonpositiveSample { index: usize, value: f64 },
    /// All fit abscissae coincide.
    #[error("degenerate abscissae: all x values are equal")]
    DegenerateXs,

    // ---- equilibrium / transforms ---------------------------------------
    /// A closed-form profile was evaluated at a negative coordinate.
    #[error("negative argument: {name} = {value}")]
    NegativeArgument { name: &'static str, value: f64 },
    /// A velocity field that must be positive is not.
    #[error("nonpositive u at node {index}: u = {value:.6e}")]
    NonpositiveU { index: usize, value: f64 },
    /// A squared-velocity field that must be positive is not.
    #[error("nonpositive w at node {index}: w = {value:.6e}")]
    NonpositiveW { index: usize, value: f64 },
    /// Two states that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// v-reconstruction was requested without a previous station.
    #[error("missing station: v reconstruction needs two consecutive stations")]
    MissingStation,

    // ---- marching solvers ------------------------------------------------
    /// Picard iteration failed to reach tolerance.
    #[error(
        "Picard iteration diverged at station x = {x}: \
         residual {residual:.3e} after {iterations} iterations (tol {tol:.3e})"
    )]
    PicardDivergence {
        x: f64,
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    /// Picard residuals oscillated instead of contracting.
    #[error("Picard iteration oscillated at station x = {x} (residual nonmonotone for {count} consecutive iterates)")]
    PicardOscillation { x: f64, count: usize },
    /// The w iterate left the admissible region.
    #[error("negativity at station x = {x}: w[{index}] = {value:.3e}")]
    Negativity { x: f64, index: usize, value: f64 },
    /// phi + w_bar became negative, so u = sqrt(phi + w_bar) is undefined.
    #[error("sqrt domain violation at station x = {x}: phi + w_bar = {value:.3e} at node {index}")]
    SqrtDomain { x: f64, index: usize, value: f64 },
    /// An interior velocity node was driven to zero or below.
    #[error("positivity loss at station x = {x}: u[{index}] = {value:.3e}")]
    PositivityLoss { x: f64, index: usize, value: f64 },
    /// Ladder differences failed to decrease.
    #[error("ladder nonconvergence: oracle differences {diffs:?} are not strictly decreasing")]
    LadderNonconvergence { diffs: Vec<f64> },
    /// delta0 lies outside the grid range.
    #[error("invalid delta0 = {delta0}: must lie strictly inside (0, {y_max})")]
    InvalidDelta0 { delta0: f64, y_max: f64 },

    // ---- diagnostics -----------------------------------------------------
    /// A singular quotient norm requires the wall sample to vanish.
    #[error("nonzero wall value: |values[0]| = {value:.3e} exceeds tolerance {tol:.3e}")]
    NonzeroWallValue { value: f64, tol: f64 },
    /// Hardy inequalities are undefined on the critical line lambda = -1/2.
    #[error("lambda = -1/2 lies on the critical line; the Hardy inequalities do not apply")]
    LambdaOnCriticalLine,
    /// The lambda > -1/2 Hardy branch needs a decaying sample.
    #[error("non-decaying sample: |f(y_max)| = {value:.3e} exceeds {tol:.3e}")]
    NonDecayingF { value: f64, tol: f64 },
    /// A derivative closure was requested from a sampled-only profile.
    #[error("derivative unavailable: {0}")]
    DerivativeUnavailable(String),
    /// Orders 3-4 compatibility requires orders 0-2 to pass first.
    #[error("orders 3-4 requested but orders 0-2 fail at tol {tol:.3e} (residuals {r1:.3e}, {r2:.3e})")]
    OrderThreeWithoutPrereq { tol: f64, r1: f64, r2: f64 },
    /// A station-history diagnostic needs more stations than were provided.
    #[error("insufficient stations: need at least {needed}, got {got}")]
    InsufficientStations { needed: usize, got: usize },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
