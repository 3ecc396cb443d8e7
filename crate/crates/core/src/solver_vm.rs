//! Implicit marching solvers for the von-Mises form of the system.
//!
//! Two algebraically equivalent unknowns are supported: the squared velocity
//! `w = u^2`, which obeys `w_x = u w_psipsi + 2(1 - u)`, and the equilibrium
//! perturbation `phi = w - wbar`, which obeys
//! `phi_x = u phi_psipsi - 2 phi / (ubar (u + ubar))`. Both are discretized
//! by backward Euler in `x` with the degenerate coefficient `u` frozen at the
//! previous Picard iterate, so every iterate solves one tridiagonal system.
//!
//! The w-form receives a well-balanced source correction by default: the
//! second-difference stencil applied to `wbar` misses the exact
//! `wbar_psipsi` by a defect that does *not* shrink in the maximum norm
//! under refinement (the `sqrt(psi)` wall layer keeps the relative stencil
//! error at the first interior node fixed at about 1/9), and the resulting
//! steady-state drift in `u` is a few 1e-6 — visible at the accuracy this
//! crate targets. Adding `u * defect` to the right-hand side makes the
//! sampled equilibrium an exact discrete fixed point while changing the
//! consistency order nowhere (the correction is exactly the local truncation
//! term of the equilibrium). With the correction in place, the w-form and
//! the phi-form solve identical nonlinear systems at Picard convergence:
//! substituting `phi = w - wbar` into the corrected w-rows reproduces the
//! phi-rows term by term, so the two marches can only differ through the
//! far boundary value (`w = 1` versus `w = wbar(psi_max)`) and the Picard
//! truncation.

use std::sync::Arc;

use crate::equilibrium::{hartmann_u, hartmann_y_of_psi};
use crate::numerics::{
    fd_second_derivative, find_root_bisect_newton, second_derivative_stencil, solve_tridiagonal,
    Grid1D, TridiagonalSystem,
};
use crate::transforms::VmState;
use crate::{Error, Result};

/// Tolerance for the equilibrium-table inversions; the closed forms behind
/// them are exact, so the tables are accurate to root-finding error.
const TABLE_INVERSION_TOL: f64 = 1e-12;

/// Consecutive non-decreasing Picard residuals that count as oscillation.
const OSCILLATION_RUN: usize = 5;

/// Which unknown a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmForm {
    /// March the squared velocity `w = u^2`.
    WForm,
    /// March the perturbation `phi = w - wbar`.
    PhiForm,
}

/// Marching parameters shared by both von-Mises forms.
#[derive(Debug, Clone)]
pub struct VmStepConfig {
    /// Marching step in `x`.
    pub dx: f64,
    /// Picard stopping tolerance on `max|iterate difference|`.
    pub picard_tol: f64,
    /// Maximum Picard iterations per station.
    pub picard_max: usize,
    /// Which unknown the config drives; steps validate the match.
    pub form: VmForm,
    /// Apply the equilibrium defect correction in the w-form (see module
    /// docs). The phi-form needs no correction: `phi = 0` is an exact
    /// fixed point of its discretization by linearity.
    pub well_balanced: bool,
}

impl VmStepConfig {
    /// Builds a config with the default Picard contract (tolerance 1e-10,
    /// at most 50 iterations, well-balanced w-form).
    pub fn new(dx: f64, form: VmForm) -> Self {
        Self {
            dx,
            picard_tol: 1e-10,
            picard_max: 50,
            form,
            well_balanced: true,
        }
    }

    fn validate(&self, expected_form: VmForm) -> Result<()> {
        if !(self.dx.is_finite() && self.dx > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "marching step must be positive, got {}",
                self.dx
            )));
        }
        if !(self.picard_tol.is_finite() && self.picard_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Picard tolerance must be positive, got {}",
                self.picard_tol
            )));
        }
        if self.picard_max == 0 {
            return Err(Error::InvalidParameter(
                "Picard iteration budget must be at least 1".into(),
            ));
        }
        if self.form != expected_form {
            return Err(Error::InvalidParameter(format!(
                "config form {:?} does not match the requested step", self.form
            )));
        }
        Ok(())
    }
}

/// A marching station for the perturbation unknown `phi = w - wbar`.
#[derive(Debug, Clone)]
pub struct PhiState {
    /// Marching station.
    pub x: f64,
    /// von-Mises grid.
    pub grid_psi: Arc<Grid1D>,
    /// Perturbation samples on `grid_psi`.
    pub phi: Vec<f64>,
}

impl PhiState {
    /// Builds a state after validating length, finiteness, and the pinned
    /// wall value (`phi(0) = 0` is exact for the limit problem; 1e-12
    /// absolute covers rounding in `w - wbar`).
    pub fn new(x: f64, grid_psi: Arc<Grid1D>, phi: Vec<f64>) -> Result<Self> {
        if phi.len() != grid_psi.count() {
            return Err(Error::LengthMismatch {
                expected: grid_psi.count(),
                got: phi.len(),
            });
        }
        if let Some(index) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        if phi[0].abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "perturbation wall value must vanish, got {}",
                phi[0]
            )));
        }
        Ok(Self { x, grid_psi, phi })
    }
}

/// Equilibrium data sampled on a fixed von-Mises grid, shared by every step.
///
/// `wbar_psi_psi` stores the exact second derivative `2(ubar - (1 + eps))/ubar`,
/// which for the unshifted tables is singular like `-sqrt(2/psi)` at the
/// wall; in that case index 0 holds 0.0 and is never read (the wall row is
/// Dirichlet). `defect` is the difference between that exact derivative and
/// the grid's second-difference stencil applied to `wbar` (interior nodes;
/// endpoints 0), i.e. exactly the local truncation error of the equilibrium
/// — the well-balanced correction.
#[derive(Debug, Clone)]
pub struct EquilibriumTables {
    /// The von-Mises grid the tables are sampled on.
    pub grid: Arc<Grid1D>,
    /// Wall shift of the sampled steady state: `u(0) = eps`, far field
    /// `1 + eps`. Zero for the limit problem.
    pub eps: f64,
    /// `ubar(ybar_j) + eps`, the steady profile of the shifted system.
    pub ubar: Vec<f64>,
    /// `ybar(psi_j)`, the physical height of each node at equilibrium.
    pub ybar: Vec<f64>,
    /// `wbar(psi_j) = ubar^2`.
    pub wbar: Vec<f64>,
    /// Exact `d^2 wbar/dpsi^2`; index 0 unused (0.0) when `eps == 0`.
    pub wbar_psi_psi: Vec<f64>,
    /// `wbar_psi_psi - D_psipsi wbar` at interior nodes; endpoints 0.
    pub defect: Vec<f64>,
}

impl EquilibriumTables {
    /// Samples the equilibrium on `grid` via the closed-form inverse map.
    pub fn new(grid: Arc<Grid1D>) -> Result<Self> {
        Self::shifted(grid, 0.0)
    }

    /// Samples the steady state of the wall-value-`eps` system, whose profile
    /// is the equilibrium lifted by `eps`: `u(0) = eps`, far field `1 + eps`,
    /// streamfunction `psi = y + expm1(-y) + eps y`. With `eps = 0` this is
    /// the plain equilibrium; with `eps > 0` the wall curvature
    /// `2(ubar - (1 + eps))/ubar` is finite everywhere.
    pub fn shifted(grid: Arc<Grid1D>, eps: f64) -> Result<Self> {
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "equilibrium shift must be finite and nonnegative, got {eps}"
            )));
        }
        let n = grid.count();
        let mut ubar = Vec::with_capacity(n);
        let mut ybar = Vec::with_capacity(n);
        for &psi in grid.nodes() {
            let y = shifted_y_of_psi(psi, eps)?;
            ybar.push(y);
            ubar.push(hartmann_u(y)? + eps);
        }
        let wbar: Vec<f64> = ubar.iter().map(|&u| u * u).collect();
        let mut wbar_psi_psi = vec![0.0; n];
        let first = if eps > 0.0 { 0 } else { 1 };
        for j in first..n {
            wbar_psi_psi[j] = 2.0 * (ubar[j] - (1.0 + eps)) / ubar[j];
        }
        let fd = fd_second_derivative(&grid, &wbar)?;
        let mut defect = vec![0.0; n];
        for j in 1..n - 1 {
            defect[j] = wbar_psi_psi[j] - fd[j];
        }
        Ok(Self {
            grid,
            eps,
            ubar,
            ybar,
            wbar,
            wbar_psi_psi,
            defect,
        })
    }
}

/// Inverts the shifted streamfunction `psi = y + expm1(-y) + eps y` for `y`.
///
/// The map is pinched between `(1 + eps) y - 1` and `(1 + eps) y`, so the
/// root lies below `(psi + 1)/(1 + eps)`; padding that endpoint by one keeps
/// the bracket strictly on the far side.
fn shifted_y_of_psi(psi: f64, eps: f64) -> Result<f64> {
    if eps == 0.0 {
        return hartmann_y_of_psi(psi, TABLE_INVERSION_TOL);
    }
    if psi == 0.0 {
        return Ok(0.0);
    }
    let hi = (psi + 1.0) / (1.0 + eps) + 1.0;
    let f = |y: f64| {
        let value = y + (-y).exp_m1() + eps * y - psi;
        let slope = 1.0 - (-y).exp() + eps;
        (value, slope)
    };
    find_root_bisect_newton(f, (0.0, hi), TABLE_INVERSION_TOL, Some(psi / (1.0 + eps)))
}

/// Per-node second-difference stencil coefficients for the interior of a
/// grid, computed once per station solve.
fn interior_stencils(grid: &Grid1D) -> Vec<(f64, f64, f64)> {
    let nodes = grid.nodes();
    (1..nodes.len() - 1)
        .map(|j| second_derivative_stencil(nodes[j] - nodes[j - 1], nodes[j + 1] - nodes[j]))
        .collect()
}

/// One Picard-resolved station advance for the w-form. `allow_split` is the
/// single permitted oscillation recovery: the step is redone as two half
/// steps, and oscillation inside a half step fails the whole step.
fn solve_station_w(
    state: &VmState,
    x_next: f64,
    cfg: &VmStepConfig,
    tables: &EquilibriumTables,
    allow_split: bool,
) -> Result<Vec<f64>> {
    let n = state.grid_psi.count();
    let dx = x_next - state.x;
    let dt_inv = 1.0 / dx;
    let stencils = interior_stencils(&state.grid_psi);
    let mut w_m = state.w.clone();
    let mut last_residual = f64::INFINITY;
    let mut oscillation_run = 0;

    for _ in 0..cfg.picard_max {
        let mut system = TridiagonalSystem::zeros(n);
        system.diagonal[0] = 1.0;
        system.rhs[0] = state.w[0];
        system.diagonal[n - 1] = 1.0;
        system.rhs[n - 1] = state.far_value;
        for j in 1..n - 1 {
            let u = w_m[j].max(0.0).sqrt();
            let (ca, cb, cc) = stencils[j - 1];
            system.lower[j - 1] = -u * ca;
            system.diagonal[j] = dt_inv - u * cb;
            system.upper[j] = -u * cc;
            system.rhs[j] = state.w[j] * dt_inv + 2.0 * (1.0 - u);
            if cfg.well_balanced {
                system.rhs[j] += u * tables.defect[j];
            }
        }
        let w_next = solve_tridiagonal(&system)?;
        for (j, &w) in w_next.iter().enumerate().take(n - 1).skip(1) {
            if w < -10.0 * cfg.picard_tol {
                return Err(Error::Negativity {
                    x: x_next,
                    index: j,
                    value: w,
                });
            }
        }
        let residual = w_next
            .iter()
            .zip(&w_m)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        w_m = w_next;
        if residual <= cfg.picard_tol {
            return Ok(w_m);
        }
        if residual >= last_residual {
            oscillation_run += 1;
        } else {
            oscillation_run = 0;
        }
        last_residual = residual;
        if oscillation_run >= OSCILLATION_RUN {
            if !allow_split {
                return Err(Error::PicardOscillation {
                    x: x_next,
                    count: oscillation_run,
                });
            }
            let x_mid = state.x + 0.5 * dx;
            let w_mid = solve_station_w(state, x_mid, cfg, tables, false)?;
            let mid = VmState::new(x_mid, Arc::clone(&state.grid_psi), w_mid, state.far_value)?;
            return solve_station_w(&mid, x_next, cfg, tables, false);
        }
    }
    Err(Error::PicardDivergence {
        x: x_next,
        iterations: cfg.picard_max,
        residual: last_residual,
        tol: cfg.picard_tol,
    })
}

/// One Picard-resolved station advance for the phi-form; same oscillation
/// contract as the w-form.
fn solve_station_phi(
    state: &PhiState,
    x_next: f64,
    cfg: &VmStepConfig,
    tables: &EquilibriumTables,
    allow_split: bool,
) -> Result<Vec<f64>> {
    let n = state.grid_psi.count();
    let dx = x_next - state.x;
    let dt_inv = 1.0 / dx;
    let stencils = interior_stencils(&state.grid_psi);
    let mut phi_m = state.phi.clone();
    let mut last_residual = f64::INFINITY;
    let mut oscillation_run = 0;

    for _ in 0..cfg.picard_max {
        let mut system = TridiagonalSystem::zeros(n);
        system.diagonal[0] = 1.0;
        system.rhs[0] = 0.0;
        system.diagonal[n - 1] = 1.0;
        system.rhs[n - 1] = 0.0;
        for j in 1..n - 1 {
            let w = phi_m[j] + tables.wbar[j];
            if w < -10.0 * cfg.picard_tol {
                return Err(Error::SqrtDomain {
                    x: x_next,
                    index: j,
                    value: w,
                });
            }
            let u = w.max(0.0).sqrt();
            let ubar = tables.ubar[j];
            let damping = 2.0 / (ubar * (u + ubar));
            let (ca, cb, cc) = stencils[j - 1];
            system.lower[j - 1] = -u * ca;
            system.diagonal[j] = dt_inv - u * cb + damping;
            system.upper[j] = -u * cc;
            system.rhs[j] = state.phi[j] * dt_inv;
        }
        let phi_next = solve_tridiagonal(&system)?;
        let residual = phi_next
            .iter()
            .zip(&phi_m)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        phi_m = phi_next;
        if residual <= cfg.picard_tol {
            return Ok(phi_m);
        }
        if residual >= last_residual {
            oscillation_run += 1;
        } else {
            oscillation_run = 0;
        }
        last_residual = residual;
        if oscillation_run >= OSCILLATION_RUN {
            if !allow_split {
                return Err(Error::PicardOscillation {
                    x: x_next,
                    count: oscillation_run,
                });
            }
            let x_mid = state.x + 0.5 * dx;
            let phi_mid = solve_station_phi(state, x_mid, cfg, tables, false)?;
            let mid = PhiState::new(x_mid, Arc::clone(&state.grid_psi), phi_mid)?;
            return solve_station_phi(&mid, x_next, cfg, tables, false);
        }
    }
    Err(Error::PicardDivergence {
        x: x_next,
        iterations: cfg.picard_max,
        residual: last_residual,
        tol: cfg.picard_tol,
    })
}

fn check_tables(grid: &Arc<Grid1D>, tables: &EquilibriumTables) -> Result<()> {
    if *grid != tables.grid {
        return Err(Error::GridMismatch(
            "state grid does not match the equilibrium tables".into(),
        ));
    }
    Ok(())
}

/// Advances a w-form state by one step of `cfg.dx`.
pub fn step_w(state: &VmState, cfg: &VmStepConfig, tables: &EquilibriumTables) -> Result<VmState> {
    cfg.validate(VmForm::WForm)?;
    check_tables(&state.grid_psi, tables)?;
    let x_next = state.x + cfg.dx;
    let w = solve_station_w(state, x_next, cfg, tables, true)?;
    VmState::new(x_next, Arc::clone(&state.grid_psi), w, state.far_value)
}

/// Advances a phi-form state by one step of `cfg.dx`.
pub fn step_phi(
    state: &PhiState,
    cfg: &VmStepConfig,
    tables: &EquilibriumTables,
) -> Result<PhiState> {
    cfg.validate(VmForm::PhiForm)?;
    check_tables(&state.grid_psi, tables)?;
    let x_next = state.x + cfg.dx;
    let phi = solve_station_phi(state, x_next, cfg, tables, true)?;
    PhiState::new(x_next, Arc::clone(&state.grid_psi), phi)
}

/// Station schedule for a march: `n_full` whole steps of `dx` plus an
/// optional remainder, with every station assigned as `x0 + j*dx` exactly
/// (no accumulated drift). Shared with the regularized physical solver.
pub(crate) fn station_schedule(x0: f64, x_end: f64, dx: f64) -> Result<(usize, bool)> {
    if !(x_end.is_finite() && x_end > x0) {
        return Err(Error::InvalidParameter(format!(
            "march target {x_end} must exceed the initial station {x0}"
        )));
    }
    let span = x_end - x0;
    // The 1e-9 relative slack keeps x_end = x0 + k*dx from producing a
    // spurious trailing micro-step through rounding.
    let n_full = (span / dx + 1e-9).floor() as usize;
    let remainder = span - n_full as f64 * dx;
    Ok((n_full, remainder > 1e-9 * dx))
}

/// Marches a w-form state to `x_end`, invoking `observer` on every newly
/// accepted station. The returned history starts with the initial state.
pub fn march_w(
    initial: &VmState,
    x_end: f64,
    cfg: &VmStepConfig,
    tables: &EquilibriumTables,
    mut observer: impl FnMut(&VmState),
) -> Result<Vec<VmState>> {
    cfg.validate(VmForm::WForm)?;
    check_tables(&initial.grid_psi, tables)?;
    let (n_full, has_remainder) = station_schedule(initial.x, x_end, cfg.dx)?;
    let mut history = vec![initial.clone()];
    for j in 1..=n_full {
        let x_next = initial.x + j as f64 * cfg.dx;
        let prev = history.last().expect("nonempty history");
        let w = solve_station_w(prev, x_next, cfg, tables, true)?;
        let state = VmState::new(x_next, Arc::clone(&prev.grid_psi), w, prev.far_value)?;
        observer(&state);
        history.push(state);
    }
    if has_remainder {
        let prev = history.last().expect("nonempty history");
        let w = solve_station_w(prev, x_end, cfg, tables, true)?;
        let state = VmState::new(x_end, Arc::clone(&prev.grid_psi), w, prev.far_value)?;
        observer(&state);
        history.push(state);
    }
    Ok(history)
}

/// Marches a phi-form state to `x_end`; same contract as [`march_w`].
pub fn march_phi(
    initial: &PhiState,
    x_end: f64,
    cfg: &VmStepConfig,
    tables: &EquilibriumTables,
    mut observer: impl FnMut(&PhiState),
) -> Result<Vec<PhiState>> {
    cfg.validate(VmForm::PhiForm)?;
    check_tables(&initial.grid_psi, tables)?;
    let (n_full, has_remainder) = station_schedule(initial.x, x_end, cfg.dx)?;
    let mut history = vec![initial.clone()];
    for j in 1..=n_full {
        let x_next = initial.x + j as f64 * cfg.dx;
        let prev = history.last().expect("nonempty history");
        let phi = solve_station_phi(prev, x_next, cfg, tables, true)?;
        let state = PhiState::new(x_next, Arc::clone(&prev.grid_psi), phi)?;
        observer(&state);
        history.push(state);
    }
    if has_remainder {
        let prev = history.last().expect("nonempty history");
        let phi = solve_station_phi(prev, x_end, cfg, tables, true)?;
        let state = PhiState::new(x_end, Arc::clone(&prev.grid_psi), phi)?;
        observer(&state);
        history.push(state);
    }
    Ok(history)
}
