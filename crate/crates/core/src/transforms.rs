//! Physical/von-Mises coordinate transforms and field reconstruction.
//!
//! The von-Mises coordinate is the streamfunction `psi(y) = int_0^y u dy'`;
//! in `(x, psi)` variables the normal velocity drops out of the evolution.
//! This module converts profiles both ways and rebuilds the derived fields:
//! `v` from the divergence-free constraint and `b` from the recovery relation
//! `b_y = 1 - u`.
//!
//! The inverse map `y(psi) = int_0^psi dpsi'/u` has an integrable singularity
//! at the wall, where `u ~ s sqrt(psi)`. Quadrature therefore runs in the
//! substituted variable `t = sqrt(psi)`: the integrand becomes `2t/u`, which
//! extends continuously to `t = 0` (with value `2/s`), and on a
//! quadratically graded psi-grid the t-nodes are uniform, so plain trapezoid
//! quadrature is second-order accurate all the way to the wall. The first
//! cell evaluated this way reproduces the analytic `2 psi_1/u_1` patch of the
//! `u = s sqrt(psi)` wall model exactly.

use std::sync::Arc;

use crate::numerics::{cumulative_trapezoid, fd_first_derivative, interp_monotone, Grid1D};
use crate::{Error, Result};

/// Relative slack (fraction of the source range) within which query points
/// beyond the source endpoint are clamped to it instead of rejected.
///
/// Coordinate ranges produced by quadrature differ from their closed-form
/// counterparts by the quadrature error, so a target grid built from the
/// closed form can overhang the computed range by that error. The fields
/// interpolated here are exponentially flat near the far end, so clamping by
/// up to 0.1% of the range perturbs values by less than 1e-9 while still
/// rejecting genuinely out-of-range targets.
const ENDPOINT_CLAMP_SLACK: f64 = 1e-3;

/// A marching station in physical variables `(x, y)`.
///
/// `v` and `b` are reconstructed fields and may be absent depending on how
/// the state was produced. `eps` is the regularization level: the wall value
/// of `u` (0 for the limit problem).
#[derive(Debug, Clone)]
pub struct PhysState {
    /// Marching station.
    pub x: f64,
    /// Physical wall-normal grid.
    pub grid_y: Arc<Grid1D>,
    /// Tangential velocity samples on `grid_y`.
    pub u: Vec<f64>,
    /// Normal velocity, when reconstructed.
    pub v: Option<Vec<f64>>,
    /// Tangential magnetic component, when reconstructed.
    pub b: Option<Vec<f64>>,
    /// Regularization level (wall value of `u`).
    pub eps: f64,
}

impl PhysState {
    /// Builds a state after validating lengths and finiteness of `u`.
    pub fn new(x: f64, grid_y: Arc<Grid1D>, u: Vec<f64>, eps: f64) -> Result<Self> {
        if u.len() != grid_y.count() {
            return Err(Error::LengthMismatch {
                expected: grid_y.count(),
                got: u.len(),
            });
        }
        if let Some(index) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        Ok(Self {
            x,
            grid_y,
            u,
            v: None,
            b: None,
            eps,
        })
    }
}

/// A marching station in von-Mises variables `(x, psi)` with unknown
/// `w = u^2`.
#[derive(Debug, Clone)]
pub struct VmState {
    /// Marching station.
    pub x: f64,
    /// von-Mises grid.
    pub grid_psi: Arc<Grid1D>,
    /// Squared-velocity samples on `grid_psi`.
    pub w: Vec<f64>,
    /// Far-field Dirichlet value for `w` (1 for the limit problem,
    /// `(1 + eps)^2` for regularized states).
    pub far_value: f64,
}

impl VmState {
    /// Builds a state after validating lengths and finiteness of `w`.
    pub fn new(x: f64, grid_psi: Arc<Grid1D>, w: Vec<f64>, far_value: f64) -> Result<Self> {
        if w.len() != grid_psi.count() {
            return Err(Error::LengthMismatch {
                expected: grid_psi.count(),
                got: w.len(),
            });
        }
        if let Some(index) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        Ok(Self {
            x,
            grid_psi,
            w,
            far_value,
        })
    }

    /// Regularization level implied by the wall value, `sqrt(w[0])`.
    pub fn eps(&self) -> f64 {
        self.w[0].max(0.0).sqrt()
    }
}

/// Clamps query points to `[0, limit]`, allowing overhang up to
/// [`ENDPOINT_CLAMP_SLACK`] of the range; larger overhang is an error.
fn clamp_queries(queries: &[f64], limit: f64) -> Result<Vec<f64>> {
    let slack = ENDPOINT_CLAMP_SLACK * limit.max(1.0);
    queries
        .iter()
        .map(|&q| {
            if !q.is_finite() || q < -slack || q > limit + slack {
                Err(Error::OutOfRange {
                    value: q,
                    min: 0.0,
                    max: limit,
                })
            } else {
                Ok(q.clamp(0.0, limit))
            }
        })
        .collect()
}

/// Forward von-Mises transform: computes `psi` by cumulative quadrature of
/// `u` and interpolates `u` (then squares) onto `target_grid`.
///
/// Requires `u > 0` on interior nodes so that `psi` is strictly increasing.
/// The far-field value of the result is pinned to `(1 + eps)^2`.
pub fn to_von_mises(phys: &PhysState, target_grid: &Arc<Grid1D>) -> Result<VmState> {
    let n = phys.grid_y.count();
    for j in 1..n - 1 {
        if phys.u[j] <= 0.0 {
            return Err(Error::NonpositiveU {
                index: j,
                value: phys.u[j],
            });
        }
    }
    let psi = cumulative_trapezoid(&phys.grid_y, &phys.u)?;
    let psi_total = *psi.last().expect("nonempty grid");
    let source = Grid1D::from_nodes(psi, 1.0)?;
    let queries = clamp_queries(target_grid.nodes(), psi_total)?;
    let u_interp = interp_monotone(&source, &phys.u, &queries)?;
    let w = u_interp.iter().map(|&u| u * u).collect();
    VmState::new(phys.x, Arc::clone(target_grid), w, (1.0 + phys.eps).powi(2))
}

/// Inverse von-Mises transform: rebuilds `y(psi)` by trapezoid quadrature of
/// `2t/u` in `t = sqrt(psi)` (see module docs), interpolates `u = sqrt(w)`
/// onto `target_grid_y`, and reconstructs `b(y) = int_0^y (1 - u) dy'`.
///
/// When `du_dx` (the x-derivative of `u` on `target_grid_y`, typically a
/// backward difference of consecutive stations) is supplied, also
/// reconstructs `v(y) = -int_0^y du_dx dy'`; otherwise `v` is left unset.
pub fn from_von_mises(
    vm: &VmState,
    target_grid_y: &Arc<Grid1D>,
    du_dx: Option<&[f64]>,
) -> Result<PhysState> {
    let n = vm.grid_psi.count();
    for j in 1..n - 1 {
        if vm.w[j] <= 0.0 {
            return Err(Error::NonpositiveW {
                index: j,
                value: vm.w[j],
            });
        }
    }
    let u_src: Vec<f64> = vm.w.iter().map(|&w| w.max(0.0).sqrt()).collect();

    // Quadrature of dy = dpsi/u = (2t/u) dt in the substituted variable.
    let t_nodes: Vec<f64> = vm.grid_psi.nodes().iter().map(|&p| p.sqrt()).collect();
    let mut integrand = vec![0.0; n];
    for j in 1..n {
        integrand[j] = 2.0 * t_nodes[j] / u_src[j];
    }
    // Wall value: continuous limit 2/s of the u = s sqrt(psi) model for the
    // degenerate problem; exact value 0 when the wall velocity is positive.
    integrand[0] = if vm.w[0] > 0.0 {
        0.0
    } else {
        2.0 * t_nodes[1] / u_src[1]
    };
    let t_grid = Grid1D::from_nodes(t_nodes, 1.0)?;
    let y_src = cumulative_trapezoid(&t_grid, &integrand)?;
    let y_total = *y_src.last().expect("nonempty grid");

    let y_grid = Grid1D::from_nodes(y_src, 1.0)?;
    let queries = clamp_queries(target_grid_y.nodes(), y_total)?;
    let u = interp_monotone(&y_grid, &u_src, &queries)?;

    let one_minus_u: Vec<f64> = u.iter().map(|&u| 1.0 - u).collect();
    let b = cumulative_trapezoid(target_grid_y, &one_minus_u)?;

    let v = match du_dx {
        Some(field) => {
            if field.len() != target_grid_y.count() {
                return Err(Error::LengthMismatch {
                    expected: target_grid_y.count(),
                    got: field.len(),
                });
            }
            let mut v = cumulative_trapezoid(target_grid_y, field)?;
            v.iter_mut().for_each(|val| *val = -*val);
            Some(v)
        }
        None => None,
    };

    let eps = vm.eps();
    let mut phys = PhysState::new(vm.x, Arc::clone(target_grid_y), u, eps)?;
    phys.b = Some(b);
    phys.v = v;
    Ok(phys)
}

/// Discrete quotient `q = v/u` from two consecutive stations.
///
/// `v` is rebuilt from the divergence-free constraint with the backward
/// difference `u_x = (u_curr - u_prev)/dx`; the wall entry `q[0]` is the
/// limit `v_y(0)/u_y(0)` evaluated with one-sided stencils (the pointwise
/// quotient is 0/0 at the wall).
pub fn quotient_field(prev: &PhysState, curr: &PhysState, dx: f64) -> Result<Vec<f64>> {
    if prev.grid_y != curr.grid_y {
        return Err(Error::GridMismatch(
            "quotient_field requires both stations on the same y-grid".into(),
        ));
    }
    if !(dx.is_finite() && dx > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "station spacing must be positive, got {dx}"
        )));
    }
    let n = curr.grid_y.count();
    for j in 1..n - 1 {
        if curr.u[j] <= 0.0 {
            return Err(Error::NonpositiveU {
                index: j,
                value: curr.u[j],
            });
        }
    }
    let u_x: Vec<f64> = curr
        .u
        .iter()
        .zip(&prev.u)
        .map(|(&c, &p)| (c - p) / dx)
        .collect();
    let mut v = cumulative_trapezoid(&curr.grid_y, &u_x)?;
    v.iter_mut().for_each(|val| *val = -*val);

    let mut q = vec![0.0; n];
    for j in 1..n {
        q[j] = v[j] / curr.u[j];
    }
    let dv = fd_first_derivative(&curr.grid_y, &v)?;
    let du = fd_first_derivative(&curr.grid_y, &curr.u)?;
    if du[0].abs() < 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "wall slope u_y(0) = {:.3e} too small for the quotient limit",
            du[0]
        )));
    }
    q[0] = dv[0] / du[0];
    Ok(q)
}
