//! Closed-form Hartmann layer and its von-Mises representation.
//!
//! The equilibrium shear flow is `u_bar(y) = 1 - exp(-y)` with zero normal
//! velocity; the induced magnetic field satisfies `b_bar'(y) = 1 - u_bar`,
//! i.e. `b_bar(y) = 1 - exp(-y)` with the normalization `b_bar(0) = 0`.
//! The streamfunction `psi_bar(y) = y + exp(-y) - 1` is the exact
//! antiderivative of `u_bar` and defines the von-Mises coordinate; its
//! inverse is computed by safeguarded Newton iteration. All functions here
//! are pointwise, pure, and thread-safe.

use crate::numerics::find_root_bisect_newton;
use crate::{Error, Result};

/// Residual tolerance used by [`hartmann_u_of_psi`] when inverting the
/// streamfunction. `1e-12` keeps the induced error in `u` below `1e-9`
/// for every coordinate value the solvers visit.
const PSI_INVERSION_TOL: f64 = 1e-12;

fn require_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::NegativeArgument { name, value });
    }
    Ok(())
}

/// Equilibrium tangential velocity `u_bar(y) = 1 - exp(-y)`.
///
/// Computed as `-expm1(-y)` so values near the wall keep full relative
/// precision.
pub fn hartmann_u(y: f64) -> Result<f64> {
    require_nonnegative("y", y)?;
    Ok(-(-y).exp_m1())
}

/// Equilibrium magnetic field `b_bar(y) = 1 - exp(-y)`, normalized so that
/// `b_bar(0) = 0` and `b_bar -> 1` far from the wall. Its derivative is
/// `1 - u_bar(y)` exactly.
pub fn hartmann_b(y: f64) -> Result<f64> {
    require_nonnegative("y", y)?;
    Ok(-(-y).exp_m1())
}

/// Equilibrium streamfunction `psi_bar(y) = y + exp(-y) - 1`, the exact
/// antiderivative of `u_bar` with `psi_bar(0) = 0`.
///
/// Computed as `y + expm1(-y)`; near the wall this evaluates the
/// `y^2/2 + O(y^3)` behaviour without catastrophic cancellation.
pub fn hartmann_psi_of_y(y: f64) -> Result<f64> {
    require_nonnegative("y", y)?;
    Ok(y + (-y).exp_m1())
}

/// Inverse streamfunction: the `y >= 0` with `psi_bar(y) = psi`, found by
/// safeguarded Newton within the bracket `[0, psi + 1]` (valid because
/// `y - 1 < psi_bar(y) < y`). The result satisfies
/// `|psi_bar(result) - psi| <= tol`.
///
/// Since `psi_bar'(0) = 0`, Newton from an arbitrary point degenerates near
/// the wall; the iteration therefore starts from the leading-order inverse
/// `y0 = sqrt(2 psi)`.
pub fn hartmann_y_of_psi(psi: f64, tol: f64) -> Result<f64> {
    require_nonnegative("psi", psi)?;
    if psi == 0.0 {
        return Ok(0.0);
    }
    let f = |y: f64| (y + (-y).exp_m1() - psi, -(-y).exp_m1());
    let start = (2.0 * psi).sqrt().min(psi + 0.5);
    find_root_bisect_newton(f, (0.0, psi + 1.0), tol, Some(start))
}

/// Equilibrium velocity as a function of the von-Mises coordinate:
/// `u_bar(y(psi))`. Behaves as `sqrt(2 psi) + O(psi)` near the wall and
/// approaches 1 like `exp(-psi)` in the far field.
pub fn hartmann_u_of_psi(psi: f64) -> Result<f64> {
    let y = hartmann_y_of_psi(psi, PSI_INVERSION_TOL)?;
    hartmann_u(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{fd_first_derivative, fd_second_derivative, make_graded_grid};

    #[test]
    fn u_closed_form_values() {
        assert_eq!(hartmann_u(0.0).unwrap(), 0.0);
        let half = hartmann_u(std::f64::consts::LN_2).unwrap();
        assert!((half - 0.5).abs() < 1e-15, "u(ln 2) = {half}");
        assert!(hartmann_u(-0.1).is_err(), "negative y must be rejected");
    }

    #[test]
    fn u_derivative_matches_finite_differences() {
        // u_bar' = exp(-y); a second-order stencil on h = 0.01 has error
        // ~ h^2/6 * max|u'''| ~ 1.7e-5, so 1e-4 is a comfortable bound.
        let g = make_graded_grid(5.0, 501, 1.0).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|&y| hartmann_u(y).unwrap()).collect();
        let du = fd_first_derivative(&g, &u).unwrap();
        for (j, (&y, &d)) in g.nodes().iter().zip(&du).enumerate() {
            let exact = (-y).exp();
            assert!((d - exact).abs() < 1e-4, "du[{j}] = {d} vs {exact}");
        }
    }

    #[test]
    fn psi_closed_form_values() {
        assert_eq!(hartmann_psi_of_y(0.0).unwrap(), 0.0);
        let at_one = hartmann_psi_of_y(1.0).unwrap();
        assert!((at_one - (-1.0_f64).exp()).abs() < 1e-15, "psi(1) = {at_one}");
        // Near the wall psi = y^2/2 - y^3/6 + ..., so psi(1e-3) differs from
        // 5e-7 by ~1.67e-10.
        let near_wall = hartmann_psi_of_y(1e-3).unwrap();
        assert!(
            (near_wall - 5e-7).abs() < 2e-10,
            "psi(1e-3) = {near_wall:e}"
        );
    }

    #[test]
    fn psi_is_strictly_increasing() {
        let mut prev = -1.0;
        for k in 0..200 {
            let y = 0.05 * k as f64;
            let p = hartmann_psi_of_y(y).unwrap();
            assert!(p > prev || (k == 0 && p == 0.0), "psi not increasing at y = {y}");
            prev = p;
        }
    }

    #[test]
    fn y_of_psi_inverts_closed_form() {
        assert_eq!(hartmann_y_of_psi(0.0, 1e-12).unwrap(), 0.0);
        let y = hartmann_y_of_psi(0.367_879_441_171_442_33, 1e-12).unwrap();
        assert!((y - 1.0).abs() < 1e-8, "y(exp(-1)) = {y}");
    }

    #[test]
    fn psi_roundtrip_is_identity() {
        for &y in &[0.1, 1.0, 5.0] {
            let psi = hartmann_psi_of_y(y).unwrap();
            let back = hartmann_y_of_psi(psi, 1e-12).unwrap();
            // Residual tol 1e-12 maps to |dy| = tol / u_bar(y) <= ~1e-11 here.
            assert!((back - y).abs() < 1e-9, "roundtrip at y = {y}: {back}");
        }
    }

    #[test]
    fn u_of_psi_near_wall_and_far_field() {
        assert_eq!(hartmann_u_of_psi(0.0).unwrap(), 0.0);
        // Leading order u = sqrt(2 psi); the next correction is O(psi),
        // about 6.7e-7 at psi = 1e-6.
        let u = hartmann_u_of_psi(1e-6).unwrap();
        let leading = (2e-6_f64).sqrt();
        assert!((u - leading).abs() < 1e-6, "u(1e-6) = {u:e} vs {leading:e}");
        // y(psi) >= psi, so 1 - u <= exp(-psi).
        let far = hartmann_u_of_psi(5.0).unwrap();
        assert!(1.0 - far <= (-5.0_f64).exp() * (1.0 + 1e-12), "far = {far}");
        assert!(far < 1.0);
    }

    #[test]
    fn b_closed_form_and_flux_relation() {
        assert_eq!(hartmann_b(0.0).unwrap(), 0.0);
        let far = hartmann_b(30.0).unwrap();
        assert!((far - 1.0).abs() < 1e-13, "b(30) = {far}");
        // d(b_bar)/dy = exp(-y) = 1 - u_bar exactly.
        for &y in &[0.0_f64, 0.3, 1.0, 4.0] {
            let db = (-y).exp();
            let u = hartmann_u(y).unwrap();
            assert!((db + u - 1.0).abs() < 1e-15, "relation fails at y = {y}");
        }
    }

    #[test]
    fn u_is_equilibrium_of_reduced_system() {
        // -u'' + u - 1 = 0 holds exactly for the closed form; sampled on a
        // grid and differentiated with second-order stencils the residual is
        // O(h^2) ~ 8.3e-6 at h = 0.01.
        let g = make_graded_grid(10.0, 1001, 1.0).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|&y| hartmann_u(y).unwrap()).collect();
        let d2 = fd_second_derivative(&g, &u).unwrap();
        for j in 0..g.count() {
            let residual = -d2[j] + u[j] - 1.0;
            assert!(residual.abs() < 1e-4, "residual[{j}] = {residual:e}");
        }
    }

    /// Max von-Mises equation residual for w_bar = u_bar^2 over interior
    /// nodes with psi in [2, 10] on a graded grid with the given count.
    fn wbar_window_residual(count: usize) -> f64 {
        let g = make_graded_grid(20.0, count, 2.0).unwrap();
        let w: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&p| {
                let u = hartmann_u_of_psi(p).unwrap();
                u * u
            })
            .collect();
        let d2 = fd_second_derivative(&g, &w).unwrap();
        let mut worst = 0.0_f64;
        for j in 1..count - 1 {
            let psi = g.nodes()[j];
            if (2.0..=10.0).contains(&psi) {
                let r = w[j].sqrt() * d2[j] + 2.0 * (1.0 - w[j].sqrt());
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    #[test]
    fn wbar_satisfies_von_mises_equation_at_second_order() {
        // sqrt(w_bar) w_bar'' + 2(1 - sqrt(w_bar)) = 0 analytically; the
        // discrete residual in a fixed interior window must shrink at the
        // stencil's order (>= 1.8 observed) under nested refinement.
        let r1 = wbar_window_residual(501);
        let r2 = wbar_window_residual(1001);
        let r3 = wbar_window_residual(2001);
        let order12 = (r1 / r2).log2();
        let order23 = (r2 / r3).log2();
        assert!(
            order12 >= 1.8 && order12 <= 2.6,
            "refinement order {order12} from residuals {r1:e}, {r2:e}"
        );
        assert!(
            order23 >= 1.8 && order23 <= 2.6,
            "refinement order {order23} from residuals {r2:e}, {r3:e}"
        );
    }
}
