//! Initial-condition profile families for the marching solvers.
//!
//! Analytic families are perturbations `u0 = ubar + a p(y) e^{-y}` of the
//! equilibrium with a polynomial envelope `p`. Everything downstream (wall
//! derivatives, steady residual, streamfunction) then has closed forms:
//! derivatives of `p(y) e^{-y}` follow the recursion `p_{k+1} = p_k' - p_k`
//! on the polynomial coefficients, and the equilibrium part contributes
//! `(-1)^{k+1} e^{-y}`.
//!
//! The `Samples` variant carries tabulated data instead; operations that
//! genuinely require smoothness (high-order wall derivatives, closed-form
//! streamfunction) report `DerivativeUnavailable` rather than inventing
//! values from an interpolant whose higher derivatives are not trustworthy.

use std::sync::Arc;

use crate::equilibrium::{hartmann_psi_of_y, hartmann_u};
use crate::numerics::{find_root_bisect_newton, interp_monotone, Grid1D};
use crate::transforms::{to_von_mises, PhysState, VmState};
use crate::{Error, Result};

/// Tolerance for the streamfunction inversions that build von-Mises
/// initial data; the closed forms are exact, so only root-finding error
/// remains and it can be pushed to near machine precision.
const PSI_INVERSION_TOL: f64 = 1e-12;

/// Highest wall-derivative order supported for analytic families. The
/// compatibility analysis needs order 6 (two beyond the order-4 residual);
/// a little headroom is free because the recursion is exact.
const MAX_WALL_DERIVATIVE_ORDER: usize = 10;

/// An inflow profile `u0(y)` for the marching problem.
#[derive(Debug, Clone)]
pub enum Profile {
    /// The equilibrium itself, `u0 = 1 - e^{-y}`.
    Hartmann,
    /// `u0 = ubar + a y^4 e^{-y}`: flat to third order at the wall, so the
    /// compatibility defect first appears in the order-3/order-4 residuals.
    PerturbedQuartic {
        /// Perturbation amplitude `a`.
        amplitude: f64,
    },
    /// `u0 = ubar + a y^2 e^{-y}`: the leading compatibility defect sits in
    /// the order-1 residual through `u0''(0) = -1 + 2a`.
    PerturbedQuadratic {
        /// Perturbation amplitude `a`.
        amplitude: f64,
    },
    /// Tabulated samples on an explicit grid, interpolated monotonically.
    Samples {
        /// Sample locations.
        grid: Arc<Grid1D>,
        /// Sample values `u0(y_j)`.
        values: Vec<f64>,
    },
}

/// Coefficients of `p' - p` for a polynomial given by ascending
/// coefficients; this is one step of the derivative recursion for
/// `p(y) e^{-y}` envelopes.
fn envelope_step(p: &[f64]) -> Vec<f64> {
    let mut next = vec![0.0; p.len()];
    for (i, c) in p.iter().enumerate() {
        next[i] -= c;
        if i > 0 {
            next[i - 1] += *c * i as f64;
        }
    }
    next
}

impl Profile {
    /// Builds the quartic family after validating the amplitude.
    pub fn perturbed_quartic(amplitude: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quartic amplitude must be finite, got {amplitude}"
            )));
        }
        Ok(Self::PerturbedQuartic { amplitude })
    }

    /// Builds the quadratic family after validating the amplitude.
    pub fn perturbed_quadratic(amplitude: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quadratic amplitude must be finite, got {amplitude}"
            )));
        }
        Ok(Self::PerturbedQuadratic { amplitude })
    }

    /// Wraps tabulated samples after validating length, finiteness, and a
    /// nonnegative wall value.
    pub fn from_samples(grid: Arc<Grid1D>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::LengthMismatch {
                expected: grid.count(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        if values[0] < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "wall value must be nonnegative, got {}",
                values[0]
            )));
        }
        Ok(Self::Samples { grid, values })
    }

    /// Envelope polynomial coefficients (ascending) for analytic
    /// perturbations, together with the amplitude; `None` for families
    /// without one.
    fn envelope(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            Self::Hartmann => None,
            Self::PerturbedQuartic { amplitude } => {
                Some((vec![0.0, 0.0, 0.0, 0.0, 1.0], *amplitude))
            }
            Self::PerturbedQuadratic { amplitude } => Some((vec![0.0, 0.0, 1.0], *amplitude)),
            Self::Samples { .. } => None,
        }
    }

    /// Evaluates `u0(y)`.
    pub fn eval(&self, y: f64) -> Result<f64> {
        match self {
            Self::Hartmann => hartmann_u(y),
            Self::PerturbedQuartic { amplitude } => {
                Ok(hartmann_u(y)? + amplitude * y.powi(4) * (-y).exp())
            }
            Self::PerturbedQuadratic { amplitude } => {
                Ok(hartmann_u(y)? + amplitude * y * y * (-y).exp())
            }
            Self::Samples { grid, values } => {
                Ok(interp_monotone(grid, values, &[y])?[0])
            }
        }
    }

    /// Evaluates `u0` on every node of `grid`.
    pub fn sample(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        grid.nodes().iter().map(|&y| self.eval(y)).collect()
    }

    /// Exact wall derivative `u0^{(order)}(0)` for analytic families.
    ///
    /// Sampled profiles report `DerivativeUnavailable` beyond order 0: a
    /// shape-preserving interpolant is only C^1, so differentiating it at
    /// the wall would silently return garbage.
    pub fn wall_derivative(&self, order: usize) -> Result<f64> {
        if order > MAX_WALL_DERIVATIVE_ORDER {
            return Err(Error::InvalidParameter(format!(
                "wall derivative order {order} exceeds supported maximum \
                 {MAX_WALL_DERIVATIVE_ORDER}"
            )));
        }
        match self {
            Self::Samples { values, .. } => {
                if order == 0 {
                    Ok(values[0])
                } else {
                    Err(Error::DerivativeUnavailable(format!(
                        "order-{order} wall derivative of a sampled profile; \
                         supply an analytic family for derivative-based checks"
                    )))
                }
            }
            _ => {
                // Equilibrium part: ubar(0) = 0, ubar^(k)(0) = (-1)^(k+1).
                let base = if order == 0 {
                    0.0
                } else if order % 2 == 1 {
                    1.0
                } else {
                    -1.0
                };
                let perturbation = match self.envelope() {
                    None => 0.0,
                    Some((mut poly, amplitude)) => {
                        for _ in 0..order {
                            poly = envelope_step(&poly);
                        }
                        amplitude * poly[0]
                    }
                };
                Ok(base + perturbation)
            }
        }
    }

    /// Steady residual `N[u0](y) = -u0'' + u0 - 1` in closed form.
    ///
    /// The equilibrium part cancels identically, so only the perturbation
    /// contributes: `a (p - p_2)(y) e^{-y}` with `p_2` from the derivative
    /// recursion.
    pub fn steady_residual(&self, y: f64) -> Result<f64> {
        if !(y.is_finite() && y >= 0.0) {
            return Err(Error::NegativeArgument { name: "y", value: y });
        }
        match self.envelope() {
            None => match self {
                Self::Hartmann => Ok(0.0),
                _ => Err(Error::DerivativeUnavailable(
                    "steady residual of a sampled profile requires second \
                     derivatives; supply an analytic family"
                        .into(),
                )),
            },
            Some((poly, amplitude)) => {
                let p2 = envelope_step(&envelope_step(&poly));
                let mut value = 0.0;
                for i in (0..poly.len()).rev() {
                    value = value * y + (poly[i] - p2[i]);
                }
                Ok(amplitude * value * (-y).exp())
            }
        }
    }

    /// Streamfunction `psi0(y) = int_0^y u0` in closed form for analytic
    /// families.
    pub fn psi_of_y(&self, y: f64) -> Result<f64> {
        if !(y.is_finite() && y >= 0.0) {
            return Err(Error::NegativeArgument { name: "y", value: y });
        }
        let base = hartmann_psi_of_y(y)?;
        match self {
            Self::Hartmann => Ok(base),
            Self::PerturbedQuartic { amplitude } => {
                // int_0^y t^4 e^{-t} dt = 24 - e^{-y} (y^4+4y^3+12y^2+24y+24).
                let horner = (((y + 4.0) * y + 12.0) * y + 24.0) * y + 24.0;
                Ok(base + amplitude * (24.0 - (-y).exp() * horner))
            }
            Self::PerturbedQuadratic { amplitude } => {
                // int_0^y t^2 e^{-t} dt = 2 - e^{-y} (y^2+2y+2).
                let horner = (y + 2.0) * y + 2.0;
                Ok(base + amplitude * (2.0 - (-y).exp() * horner))
            }
            Self::Samples { .. } => Err(Error::DerivativeUnavailable(
                "closed-form streamfunction unavailable for sampled profiles; \
                 build initial data through the coordinate transform instead"
                    .into(),
            )),
        }
    }

    /// Builds von-Mises initial data `w(psi) = u0(y(psi))^2` on `grid_psi`.
    ///
    /// Analytic families invert the closed-form streamfunction node by node
    /// with a safeguarded Newton iteration; sampled profiles go through the
    /// forward coordinate transform.
    pub fn initial_vm_state(&self, grid_psi: &Arc<Grid1D>) -> Result<VmState> {
        if let Self::Samples { grid, values } = self {
            let eps = values[0];
            let phys = PhysState::new(0.0, Arc::clone(grid), values.clone(), eps)?;
            return to_von_mises(&phys, grid_psi);
        }
        let amplitude = self.envelope().map(|(_, a)| a).unwrap_or(0.0);
        let mut w = Vec::with_capacity(grid_psi.count());
        for &psi in grid_psi.nodes() {
            if psi == 0.0 {
                let u0 = self.eval(0.0)?;
                w.push(u0 * u0);
                continue;
            }
            // psi0(y) >= y - 1 - 26|a| for every family here (the envelope
            // integral is bounded by 24|a|), so this bracket always
            // contains the preimage; sqrt(2 psi) is the wall-asymptotic
            // starter of the equilibrium inverse and lands close enough
            // for Newton everywhere.
            let hi = psi + 1.0 + 26.0 * amplitude.abs();
            let start = (2.0 * psi).sqrt().min(hi);
            let y = find_root_bisect_newton(
                |y| {
                    let f = self.psi_of_y(y).expect("analytic closed form") - psi;
                    let df = self.eval(y).expect("analytic closed form");
                    (f, df)
                },
                (0.0, hi),
                PSI_INVERSION_TOL,
                Some(start),
            )?;
            let u0 = self.eval(y)?;
            w.push(u0 * u0);
        }
        VmState::new(0.0, Arc::clone(grid_psi), w, 1.0)
    }

    /// Verifies `u0 > 0` strictly inside `(0, y_max]` by dense sampling;
    /// the marching schemes and the coordinate transforms both require it.
    pub fn check_positive_interior(&self, y_max: f64) -> Result<()> {
        if !(y_max.is_finite() && y_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "positivity check needs a positive height, got {y_max}"
            )));
        }
        // 4001 samples resolve every envelope scale used here (the
        // narrowest feature of p(y) e^{-y} families is O(1) wide).
        let count = 4001;
        for j in 1..count {
            let y = y_max * j as f64 / (count - 1) as f64;
            let u = self.eval(y)?;
            if u <= 0.0 {
                return Err(Error::NonpositiveU { index: j, value: u });
            }
        }
        Ok(())
    }
}
