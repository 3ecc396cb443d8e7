//! Marching solver for the regularized physical-variable system and the
//! epsilon-ladder driver.
//!
//! The regularized system lifts the wall value to `u(0) = eps` and the far
//! field to `1 + eps`, which removes the degeneracy of the equation at the
//! wall; the shifted equilibrium `ubar + eps` is an exact steady state. The
//! ladder marches a decreasing sequence of `eps` values from the same
//! profile and quantifies convergence to the degenerate (`eps = 0`) problem
//! by comparing against the von-Mises solver in streamfunction coordinates,
//! where states with different wall values share a common domain.

use std::sync::Arc;

use crate::numerics::{
    cumulative_trapezoid, first_derivative_stencil, second_derivative_stencil,
    solve_tridiagonal, Grid1D, TridiagonalSystem,
};
use crate::profiles::Profile;
use crate::solver_vm::{march_w, station_schedule, EquilibriumTables, VmForm, VmStepConfig};
use crate::transforms::{to_von_mises, PhysState};
use crate::{diagnostics, Error, Result};

/// Compatibility tolerance demanded of analytic profiles before a ladder
/// run; the closed-form wall derivatives make this essentially exact.
const LADDER_COMPAT_TOL: f64 = 1e-6;

/// Compatibility tolerance for sampled profiles, limited by one-sided
/// stencils on the sample nodes rather than closed forms.
const LADDER_COMPAT_TOL_SAMPLED: f64 = 1e-3;

/// Parameters for regularized marching and the epsilon ladder.
#[derive(Debug, Clone)]
pub struct EpsRunConfig {
    /// Strictly decreasing positive regularization levels.
    pub eps_ladder: Vec<f64>,
    /// Marching step in `x`.
    pub dx: f64,
    /// Picard stopping tolerance on `max|iterate difference|`.
    pub picard_tol: f64,
    /// Maximum Picard iterations per station.
    pub picard_max: usize,
    /// Physical wall-normal grid shared by every ladder entry.
    pub grid_y: Arc<Grid1D>,
}

impl EpsRunConfig {
    /// Builds a config with the default Picard contract (tolerance 1e-10,
    /// at most 50 iterations) after validating the ladder.
    pub fn new(eps_ladder: Vec<f64>, dx: f64, grid_y: Arc<Grid1D>) -> Result<Self> {
        let cfg = Self {
            eps_ladder,
            dx,
            picard_tol: 1e-10,
            picard_max: 50,
            grid_y,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.eps_ladder.is_empty() {
            return Err(Error::InvalidParameter(
                "epsilon ladder must contain at least one value".into(),
            ));
        }
        for pair in self.eps_ladder.windows(2) {
            if !(pair[1] < pair[0]) {
                return Err(Error::InvalidParameter(format!(
                    "epsilon ladder must be strictly decreasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        let last = *self.eps_ladder.last().expect("nonempty ladder");
        if !(last.is_finite() && last > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon values must be positive, got {last}"
            )));
        }
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
        Ok(())
    }
}

/// One nodewise bound from the uniform-estimate report.
#[derive(Debug, Clone, Copy)]
pub struct BoundInequality {
    /// Smallest slack found; negative means the bound is violated.
    pub margin: f64,
    /// Node index realizing the smallest slack.
    pub worst_index: usize,
    /// Height of that node.
    pub worst_y: f64,
    /// Whether the bound holds with strictly positive margin.
    pub holds: bool,
}

/// Nodewise verification of the uniform wall/bulk bounds on a state:
/// `u >= y/4` and `u <= 2(y + eps)` below `delta0`, and `u >= delta0/4`
/// above it.
#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    /// `u >= y/4` on `[0, delta0]`.
    pub wall_lower: BoundInequality,
    /// `u <= 2(y + eps)` on `[0, delta0]`.
    pub wall_upper: BoundInequality,
    /// `u >= delta0/4` on `[delta0, y_max]`.
    pub bulk_lower: BoundInequality,
    /// All three margins strictly positive.
    pub all_hold: bool,
    /// The split height used.
    pub delta0: f64,
}

/// Ladder convergence measurements, all taken at the final station in
/// streamfunction coordinates.
#[derive(Debug, Clone)]
pub struct LadderReport {
    /// The regularization levels, as configured.
    pub eps: Vec<f64>,
    /// `max_psi |u^{eps_i} - u^{eps_{i+1}}|` for consecutive entries.
    pub pairwise_diffs: Vec<f64>,
    /// `max_psi |u^{eps_i} - u^{vm}|` against the von-Mises solution.
    pub oracle_diffs: Vec<f64>,
    /// Convergence order fitted from `oracle_diffs` against `eps`
    /// (log-log); `None` with fewer than two ladder entries.
    pub observed_order: Option<f64>,
}

/// Result of a ladder run: one station history per `eps`, plus the
/// convergence report (absent for a single-entry ladder, which degenerates
/// to a plain march).
#[derive(Debug)]
pub struct LadderOutcome {
    /// Station histories, ordered as the configured ladder.
    pub histories: Vec<Vec<PhysState>>,
    /// Convergence measurements; `None` for single-entry ladders.
    pub report: Option<LadderReport>,
}

/// One Picard-resolved station advance of the regularized system.
fn solve_station_eps(state: &PhysState, x_next: f64, cfg: &EpsRunConfig) -> Result<Vec<f64>> {
    let n = state.grid_y.count();
    let nodes = state.grid_y.nodes();
    let eps = state.eps;
    let dx = x_next - state.x;
    let dx_inv = 1.0 / dx;
    for j in 1..n - 1 {
        if state.u[j] <= 0.0 {
            return Err(Error::PositivityLoss {
                x: state.x,
                index: j,
                value: state.u[j],
            });
        }
    }
    let stencils: Vec<_> = (1..n - 1)
        .map(|j| {
            let hm = nodes[j] - nodes[j - 1];
            let hp = nodes[j + 1] - nodes[j];
            (first_derivative_stencil(hm, hp), second_derivative_stencil(hm, hp))
        })
        .collect();

    let mut u_m = state.u.clone();
    let mut last_residual = f64::INFINITY;
    for _ in 0..cfg.picard_max {
        // Divergence-free reconstruction from the lagged streamwise
        // derivative; the first iterate has u_m = u^n, hence v = 0.
        let u_x: Vec<f64> = u_m
            .iter()
            .zip(&state.u)
            .map(|(&m, &p)| (m - p) * dx_inv)
            .collect();
        let mut v = cumulative_trapezoid(&state.grid_y, &u_x)?;
        v.iter_mut().for_each(|val| *val = -*val);

        let mut system = TridiagonalSystem::zeros(n);
        system.diagonal[0] = 1.0;
        system.rhs[0] = eps;
        system.diagonal[n - 1] = 1.0;
        system.rhs[n - 1] = 1.0 + eps;
        for j in 1..n - 1 {
            let ((da, db, dc), (ca, cb, cc)) = stencils[j - 1];
            system.lower[j - 1] = v[j] * da - ca;
            system.diagonal[j] = state.u[j] * dx_inv + v[j] * db - cb + 1.0;
            system.upper[j] = v[j] * dc - cc;
            system.rhs[j] = state.u[j] * state.u[j] * dx_inv + 1.0 + eps;
        }
        let u_next = solve_tridiagonal(&system)?;
        for (j, &u) in u_next.iter().enumerate().take(n - 1).skip(1) {
            if u <= 0.0 {
                return Err(Error::PositivityLoss {
                    x: x_next,
                    index: j,
                    value: u,
                });
            }
        }
        let residual = u_next
            .iter()
            .zip(&u_m)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        u_m = u_next;
        if residual <= cfg.picard_tol {
            return Ok(u_m);
        }
        last_residual = residual;
    }
    Err(Error::PicardDivergence {
        x: x_next,
        iterations: cfg.picard_max,
        residual: last_residual,
        tol: cfg.picard_tol,
    })
}

/// Assembles the advanced station, rebuilding `v` from the divergence-free
/// constraint and `b` from the recovery relation `b_y = 1 - u`.
fn finish_station(prev: &PhysState, x_next: f64, u: Vec<f64>, cfg: &EpsRunConfig) -> Result<PhysState> {
    let dx_inv = 1.0 / (x_next - prev.x);
    let u_x: Vec<f64> = u
        .iter()
        .zip(&prev.u)
        .map(|(&c, &p)| (c - p) * dx_inv)
        .collect();
    let mut v = cumulative_trapezoid(&cfg.grid_y, &u_x)?;
    v.iter_mut().for_each(|val| *val = -*val);
    let one_minus_u: Vec<f64> = u.iter().map(|&val| 1.0 - val).collect();
    let b = cumulative_trapezoid(&cfg.grid_y, &one_minus_u)?;
    let mut state = PhysState::new(x_next, Arc::clone(&prev.grid_y), u, prev.eps)?;
    state.v = Some(v);
    state.b = Some(b);
    Ok(state)
}

/// Advances a regularized state by one step of `cfg.dx`. The state's own
/// `eps` sets the boundary data.
pub fn step_eps(state: &PhysState, cfg: &EpsRunConfig) -> Result<PhysState> {
    cfg.validate()?;
    if state.grid_y != cfg.grid_y {
        return Err(Error::GridMismatch(
            "state grid does not match the run config".into(),
        ));
    }
    let x_next = state.x + cfg.dx;
    let u = solve_station_eps(state, x_next, cfg)?;
    finish_station(state, x_next, u, cfg)
}

/// Marches a regularized state to `x_end`, invoking `observer` on every
/// newly accepted station; the returned history starts with the initial
/// state.
pub fn march_eps(
    initial: &PhysState,
    x_end: f64,
    cfg: &EpsRunConfig,
    mut observer: impl FnMut(&PhysState),
) -> Result<Vec<PhysState>> {
    cfg.validate()?;
    if initial.grid_y != cfg.grid_y {
        return Err(Error::GridMismatch(
            "initial grid does not match the run config".into(),
        ));
    }
    let (n_full, has_remainder) = station_schedule(initial.x, x_end, cfg.dx)?;
    let mut history = vec![initial.clone()];
    for j in 1..=n_full {
        let x_next = initial.x + j as f64 * cfg.dx;
        let prev = history.last().expect("nonempty history");
        let u = solve_station_eps(prev, x_next, cfg)?;
        let state = finish_station(prev, x_next, u, cfg)?;
        observer(&state);
        history.push(state);
    }
    if has_remainder {
        let prev = history.last().expect("nonempty history");
        let u = solve_station_eps(prev, x_end, cfg)?;
        let state = finish_station(prev, x_end, u, cfg)?;
        observer(&state);
        history.push(state);
    }
    Ok(history)
}

/// Verifies the profile against the compatibility conditions before a
/// ladder run; analytic families are held to near-exact tolerance, sampled
/// ones to what one-sided stencils can resolve.
fn ladder_precheck(profile: &Profile) -> Result<()> {
    let tol = match profile {
        Profile::Samples { .. } => LADDER_COMPAT_TOL_SAMPLED,
        _ => LADDER_COMPAT_TOL,
    };
    let report = diagnostics::check_compatibility(profile, tol, false)?;
    if !report.passes(tol) {
        return Err(Error::InvalidParameter(format!(
            "profile fails the compatibility conditions at tolerance {tol}: \
             order-0 {:.3e}, slope {:.3e}, order-1 {:.3e}, order-2 {:.3e}",
            report.residual_order0, report.slope, report.residual_order1, report.residual_order2
        )));
    }
    Ok(())
}

/// Runs the epsilon ladder: marches `profile + eps` to `x_end` for every
/// ladder entry, then measures convergence toward the von-Mises solution
/// of the degenerate problem (marched with the same `dx` on the tables'
/// grid).
///
/// The differences to the oracle must decrease strictly down the ladder;
/// otherwise the run fails with `LadderNonconvergence` carrying the
/// measured sequence.
pub fn run_ladder(
    profile: &Profile,
    cfg: &EpsRunConfig,
    x_end: f64,
    tables: &EquilibriumTables,
) -> Result<LadderOutcome> {
    cfg.validate()?;
    ladder_precheck(profile)?;
    profile.check_positive_interior(cfg.grid_y.length())?;
    let base = profile.sample(&cfg.grid_y)?;

    let mut histories = Vec::with_capacity(cfg.eps_ladder.len());
    for &eps in &cfg.eps_ladder {
        let mut u: Vec<f64> = base.iter().map(|&val| val + eps).collect();
        // The boundary rows are Dirichlet; pin the initial endpoints to the
        // same data so the first step starts consistent.
        u[0] = eps;
        let last = u.len() - 1;
        u[last] = 1.0 + eps;
        let initial = PhysState::new(0.0, Arc::clone(&cfg.grid_y), u, eps)?;
        histories.push(march_eps(&initial, x_end, cfg, |_| {})?);
    }

    if cfg.eps_ladder.len() < 2 {
        return Ok(LadderOutcome {
            histories,
            report: None,
        });
    }

    // Degenerate-problem oracle: w-form von-Mises march with matching dx.
    let mut vm_cfg = VmStepConfig::new(cfg.dx, VmForm::WForm);
    vm_cfg.picard_tol = cfg.picard_tol;
    vm_cfg.picard_max = cfg.picard_max;
    let vm_initial = profile.initial_vm_state(&tables.grid)?;
    let vm_history = march_w(&vm_initial, x_end, &vm_cfg, tables, |_| {})?;
    let u_oracle: Vec<f64> = vm_history
        .last()
        .expect("nonempty history")
        .w
        .iter()
        .map(|&w| w.max(0.0).sqrt())
        .collect();

    let mut finals_on_psi = Vec::with_capacity(histories.len());
    for history in &histories {
        let vm = to_von_mises(history.last().expect("nonempty history"), &tables.grid)?;
        let u: Vec<f64> = vm.w.iter().map(|&w| w.max(0.0).sqrt()).collect();
        finals_on_psi.push(u);
    }

    let sup_diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let pairwise_diffs: Vec<f64> = finals_on_psi
        .windows(2)
        .map(|pair| sup_diff(&pair[0], &pair[1]))
        .collect();
    let oracle_diffs: Vec<f64> = finals_on_psi
        .iter()
        .map(|u| sup_diff(u, &u_oracle))
        .collect();

    if oracle_diffs.windows(2).any(|pair| pair[1] >= pair[0]) {
        return Err(Error::LadderNonconvergence {
            diffs: oracle_diffs,
        });
    }

    let observed_order = fit_order(&cfg.eps_ladder, &oracle_diffs);
    Ok(LadderOutcome {
        histories,
        report: Some(LadderReport {
            eps: cfg.eps_ladder.clone(),
            pairwise_diffs,
            oracle_diffs,
            observed_order,
        }),
    })
}

/// Fits `diff ~ C eps^p` and returns `p`; falls back to the two-point
/// log-ratio when only two samples exist.
fn fit_order(eps: &[f64], diffs: &[f64]) -> Option<f64> {
    if eps.len() < 2 || diffs.iter().any(|&d| d <= 0.0) {
        return None;
    }
    if eps.len() == 2 {
        return Some((diffs[0] / diffs[1]).ln() / (eps[0] / eps[1]).ln());
    }
    // With xs = ln(1/eps) the model `diff = A exp(-rate * xs)` reads
    // `diff = A eps^rate`, so the fitted rate *is* the epsilon-order.
    let xs: Vec<f64> = eps.iter().map(|&e| (1.0 / e).ln()).collect();
    crate::numerics::fit_log_linear(&xs, diffs)
        .ok()
        .map(|fit| fit.rate)
}

/// Evaluates the uniform wall/bulk bounds on a state (reporting only; a
/// violated bound is returned, not raised).
pub fn uniform_bound_check(state: &PhysState, delta0: f64) -> Result<BoundReport> {
    let y_max = state.grid_y.length();
    if !(delta0.is_finite() && delta0 > 0.0 && delta0 < y_max) {
        return Err(Error::InvalidDelta0 { delta0, y_max });
    }
    let nodes = state.grid_y.nodes();
    let eps = state.eps;
    let fold = |acc: Option<BoundInequality>, (j, margin): (usize, f64)| match acc {
        Some(best) if best.margin <= margin => Some(best),
        _ => Some(BoundInequality {
            margin,
            worst_index: j,
            worst_y: nodes[j],
            holds: margin > 0.0,
        }),
    };
    let wall_lower = nodes
        .iter()
        .zip(&state.u)
        .enumerate()
        .filter(|(_, (&y, _))| y <= delta0)
        .map(|(j, (&y, &u))| (j, u - 0.25 * y))
        .fold(None, fold)
        .expect("wall window contains at least the wall node");
    let wall_upper = nodes
        .iter()
        .zip(&state.u)
        .enumerate()
        .filter(|(_, (&y, _))| y <= delta0)
        .map(|(j, (&y, &u))| (j, 2.0 * (y + eps) - u))
        .fold(None, fold)
        .expect("wall window contains at least the wall node");
    let bulk_lower = nodes
        .iter()
        .zip(&state.u)
        .enumerate()
        .filter(|(_, (&y, _))| y >= delta0)
        .map(|(j, (_, &u))| (j, u - 0.25 * delta0))
        .fold(None, fold)
        .expect("bulk window contains at least the far node");
    let all_hold = wall_lower.holds && wall_upper.holds && bulk_lower.holds;
    Ok(BoundReport {
        wall_lower,
        wall_upper,
        bulk_lower,
        all_hold,
        delta0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{hartmann_psi_of_y, hartmann_u};
    use crate::numerics::{fd_first_derivative, make_graded_grid, trapezoid_integral};

    fn y_grid(count: usize) -> Arc<Grid1D> {
        Arc::new(make_graded_grid(15.0, count, 2.0).unwrap())
    }

    fn shifted_equilibrium(grid: &Arc<Grid1D>, eps: f64) -> PhysState {
        let u: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&y| hartmann_u(y).unwrap() + eps)
            .collect();
        PhysState::new(0.0, Arc::clone(grid), u, eps).unwrap()
    }

    fn tables(count: usize) -> EquilibriumTables {
        let psi_max = hartmann_psi_of_y(15.0).unwrap();
        let grid = Arc::new(make_graded_grid(psi_max, count, 2.0).unwrap());
        EquilibriumTables::new(grid).unwrap()
    }

    #[test]
    fn shifted_equilibrium_stays_near_itself() {
        let eps = 0.1;
        let grid = y_grid(1001);
        let cfg = EpsRunConfig::new(vec![eps], 0.01, Arc::clone(&grid)).unwrap();
        let initial = shifted_equilibrium(&grid, eps);
        let history = march_eps(&initial, 1.0, &cfg, |_| {}).unwrap();
        let mut worst = 0.0_f64;
        for state in &history {
            for (j, &u) in state.u.iter().enumerate() {
                let target = hartmann_u(grid.nodes()[j]).unwrap() + eps;
                worst = worst.max((u - target).abs());
            }
        }
        assert!(
            worst <= 3.0 * eps,
            "drift from the shifted equilibrium = {worst:.3e}"
        );
        // The scheme is not well-balanced in physical variables, but the
        // stencil consistency error on the smooth equilibrium is tiny.
        assert!(worst <= 1e-3, "drift should be far below 3 eps: {worst:.3e}");
    }

    #[test]
    fn one_step_damps_the_perturbation_l2() {
        let eps = 0.05;
        let grid = y_grid(1001);
        let cfg = EpsRunConfig::new(vec![eps], 0.01, Arc::clone(&grid)).unwrap();
        let u: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&y| hartmann_u(y).unwrap() + 0.05 * y.powi(4) * (-y).exp() + eps)
            .collect();
        let initial = PhysState::new(0.0, Arc::clone(&grid), u, eps).unwrap();
        let next = step_eps(&initial, &cfg).unwrap();
        let l2 = |state: &PhysState| {
            let sq: Vec<f64> = state
                .u
                .iter()
                .zip(grid.nodes())
                .map(|(&u, &y)| {
                    let d = u - hartmann_u(y).unwrap() - eps;
                    d * d
                })
                .collect();
            trapezoid_integral(&grid, &sq).unwrap().sqrt()
        };
        let before = l2(&initial);
        let after = l2(&next);
        assert!(
            after <= before,
            "perturbation grew from {before:.6e} to {after:.6e}"
        );
    }

    #[test]
    fn reconstructed_v_satisfies_divergence_constraint() {
        let eps = 0.05;
        let grid = y_grid(1001);
        let cfg = EpsRunConfig::new(vec![eps], 0.01, Arc::clone(&grid)).unwrap();
        let u: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&y| hartmann_u(y).unwrap() + 0.05 * y.powi(4) * (-y).exp() + eps)
            .collect();
        let initial = PhysState::new(0.0, Arc::clone(&grid), u, eps).unwrap();
        let next = step_eps(&initial, &cfg).unwrap();
        let v = next.v.as_ref().expect("v reconstructed by the step");
        let u_x: Vec<f64> = next
            .u
            .iter()
            .zip(&initial.u)
            .map(|(&c, &p)| (c - p) / cfg.dx)
            .collect();
        let dv = fd_first_derivative(&grid, v).unwrap();
        let scale = u_x.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        let mut worst = 0.0_f64;
        for j in 1..grid.count() - 1 {
            worst = worst.max((dv[j] + u_x[j]).abs());
        }
        // The antiderivative is a trapezoid sum and the derivative a
        // three-point stencil; the two only agree to the quadrature's own
        // O(h^2) consistency, so a 1% relative band is the honest check.
        assert!(
            worst <= 1e-2 * scale.max(1e-12),
            "divergence defect {worst:.3e} vs scale {scale:.3e}"
        );
    }

    #[test]
    fn interior_zero_reports_positivity_loss() {
        let eps = 0.05;
        let grid = y_grid(301);
        let cfg = EpsRunConfig::new(vec![eps], 0.01, Arc::clone(&grid)).unwrap();
        let mut state = shifted_equilibrium(&grid, eps);
        state.u[5] = 0.0;
        assert!(matches!(
            step_eps(&state, &cfg),
            Err(Error::PositivityLoss { index: 5, .. })
        ));
    }

    #[test]
    fn ladder_converges_toward_the_von_mises_solution() {
        let grid = y_grid(501);
        let cfg = EpsRunConfig::new(vec![0.2, 0.1, 0.05], 0.02, Arc::clone(&grid)).unwrap();
        let tables = tables(501);
        let outcome = run_ladder(&Profile::Hartmann, &cfg, 0.5, &tables).unwrap();
        assert_eq!(outcome.histories.len(), 3);
        let report = outcome.report.expect("multi-entry ladder reports");
        assert_eq!(report.oracle_diffs.len(), 3);
        assert!(
            report.oracle_diffs.windows(2).all(|p| p[1] < p[0]),
            "oracle differences must decrease: {:?}",
            report.oracle_diffs
        );
        let order = report.observed_order.expect("three entries fit an order");
        assert!(
            (0.8..=1.3).contains(&order),
            "observed epsilon-order {order} outside the first-order band"
        );
    }

    #[test]
    fn single_entry_ladder_has_no_report() {
        let grid = y_grid(301);
        let cfg = EpsRunConfig::new(vec![0.1], 0.05, Arc::clone(&grid)).unwrap();
        let tables = tables(101);
        let outcome = run_ladder(&Profile::Hartmann, &cfg, 0.2, &tables).unwrap();
        assert_eq!(outcome.histories.len(), 1);
        assert!(outcome.report.is_none(), "single march must not report");
    }

    #[test]
    fn increasing_ladder_rejected() {
        let grid = y_grid(64);
        assert!(matches!(
            EpsRunConfig::new(vec![0.05, 0.1], 0.01, grid),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn bounds_hold_for_the_shifted_equilibrium() {
        let grid = y_grid(501);
        let state = shifted_equilibrium(&grid, 0.1);
        let report = uniform_bound_check(&state, 0.5).unwrap();
        assert!(report.all_hold, "all bounds should hold: {report:?}");
        assert!(report.wall_lower.margin > 0.0);
        assert!(report.wall_upper.margin > 0.0);
        assert!(report.bulk_lower.margin > 0.0);
    }

    #[test]
    fn synthetic_violation_is_located() {
        let grid = y_grid(501);
        let mut state = shifted_equilibrium(&grid, 0.1);
        let delta0 = 0.5;
        let k = grid
            .nodes()
            .iter()
            .position(|&y| y >= delta0)
            .expect("delta0 inside the grid");
        state.u[k] = delta0 / 8.0;
        let report = uniform_bound_check(&state, delta0).unwrap();
        assert!(!report.bulk_lower.holds, "violation must be detected");
        assert!(!report.all_hold);
        assert_eq!(report.bulk_lower.worst_index, k, "violation located");
        assert!(report.bulk_lower.margin < 0.0);
    }

    #[test]
    fn delta0_outside_grid_rejected() {
        let grid = y_grid(64);
        let state = shifted_equilibrium(&grid, 0.1);
        assert!(matches!(
            uniform_bound_check(&state, 20.0),
            Err(Error::InvalidDelta0 { .. })
        ));
        assert!(matches!(
            uniform_bound_check(&state, 0.0),
            Err(Error::InvalidDelta0 { .. })
        ));
    }
}
