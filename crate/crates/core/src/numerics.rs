//! Coordinate-agnostic numerical kernels.
//!
//! Everything here is a pure function of its inputs: nonuniform graded grids,
//! composite trapezoid quadrature, three-point finite-difference stencils,
//! tridiagonal solves, monotone (PCHIP) interpolation, safeguarded
//! Newton-bisection root finding, and log-linear least-squares fits.
//!
//! Quadrature and stencils are fixed at second order; the grids are graded
//! toward the origin because the fields of interest behave like `sqrt(psi)`
//! there, and an exponent-2 grading renders them smooth in the grid index.

use crate::{Error, Result};

/// A strictly increasing 1-D node set starting at 0, with cached trapezoid
/// weights. Used for both the physical `y` and von-Mises `psi` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    grading_exponent: f64,
}

/// Minimum number of nodes accepted by grid constructors.
pub const MIN_GRID_COUNT: usize = 8;

impl Grid1D {
    /// Builds a grid from explicit nodes.
    ///
    /// Requirements: at least [`MIN_GRID_COUNT`] nodes, `nodes[0] = 0`,
    /// strictly increasing, all finite. `grading_exponent` is advisory
    /// metadata (1 for uniform grids).
    pub fn from_nodes(nodes: Vec<f64>, grading_exponent: f64) -> Result<Self> {
        if nodes.len() < MIN_GRID_COUNT {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least {MIN_GRID_COUNT} nodes, got {}",
                nodes.len()
            )));
        }
        if let Some(index) = nodes.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "nodes[0] must be 0, got {}",
                nodes[0]
            )));
        }
        if nodes.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidParameter(
                "nodes must be strictly increasing".into(),
            ));
        }
        if !(grading_exponent.is_finite() && grading_exponent >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "grading exponent must be >= 1, got {grading_exponent}"
            )));
        }
        let weights = trapezoid_weights(&nodes);
        Ok(Self {
            nodes,
            weights,
            grading_exponent,
        })
    }

    /// Node coordinates.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Composite trapezoid weights (nonnegative, summing to the grid length).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of nodes.
    pub fn count(&self) -> usize {
        self.nodes.len()
    }

    /// Last node coordinate (the grid length, since `nodes[0] = 0`).
    pub fn length(&self) -> f64 {
        *self.nodes.last().expect("grid is nonempty")
    }

    /// Grading exponent used to construct the grid (1 = uniform).
    pub fn grading_exponent(&self) -> f64 {
        self.grading_exponent
    }
}

fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for j in 0..n - 1 {
        let half = 0.5 * (nodes[j + 1] - nodes[j]);
        w[j] += half;
        w[j + 1] += half;
    }
    w
}

/// Builds the graded grid `nodes[j] = length * (j/(count-1))^exponent`.
///
/// `exponent = 1` gives a uniform grid; `exponent = 2` clusters nodes near 0
/// quadratically, which makes `sqrt`-type profiles smooth in the node index.
pub fn make_graded_grid(length: f64, count: usize, exponent: f64) -> Result<Grid1D> {
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid length must be positive and finite, got {length}"
        )));
    }
    if count < MIN_GRID_COUNT {
        return Err(Error::InvalidParameter(format!(
            "grid count must be at least {MIN_GRID_COUNT}, got {count}"
        )));
    }
    if !(exponent.is_finite() && exponent >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "grading exponent must be >= 1, got {exponent}"
        )));
    }
    let m = (count - 1) as f64;
    let nodes: Vec<f64> = (0..count)
        .map(|j| length * (j as f64 / m).powf(exponent))
        .collect();
    Grid1D::from_nodes(nodes, exponent)
}

fn check_len(grid: &Grid1D, values: &[f64]) -> Result<()> {
    if values.len() != grid.count() {
        return Err(Error::LengthMismatch {
            expected: grid.count(),
            got: values.len(),
        });
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { index });
    }
    Ok(())
}

/// Composite trapezoid rule on the grid's (possibly nonuniform) nodes.
pub fn trapezoid_integral(grid: &Grid1D, values: &[f64]) -> Result<f64> {
    check_len(grid, values)?;
    check_finite(values)?;
    let nodes = grid.nodes();
    let mut acc = 0.0;
    for j in 0..nodes.len() - 1 {
        acc += 0.5 * (nodes[j + 1] - nodes[j]) * (values[j] + values[j + 1]);
    }
    Ok(acc)
}

/// Cumulative trapezoid: `out[j]` approximates the integral from `nodes[0]`
/// to `nodes[j]`; `out[0] = 0`.
pub fn cumulative_trapezoid(grid: &Grid1D, values: &[f64]) -> Result<Vec<f64>> {
    check_len(grid, values)?;
    check_finite(values)?;
    let nodes = grid.nodes();
    let mut out = vec![0.0; nodes.len()];
    for j in 1..nodes.len() {
        out[j] = out[j - 1] + 0.5 * (nodes[j] - nodes[j - 1]) * (values[j] + values[j - 1]);
    }
    Ok(out)
}

/// Interior three-point second-derivative stencil coefficients
/// `(c_minus, c_center, c_plus)` for spacings `h_minus`, `h_plus`.
/// Exact for quadratics on any spacing pair.
pub(crate) fn second_derivative_stencil(h_minus: f64, h_plus: f64) -> (f64, f64, f64) {
    let s = h_minus + h_plus;
    (
        2.0 / (h_minus * s),
        -2.0 / (h_minus * h_plus),
        2.0 / (h_plus * s),
    )
}

/// Interior three-point first-derivative stencil coefficients
/// `(c_minus, c_center, c_plus)`. Exact for quadratics.
pub(crate) fn first_derivative_stencil(h_minus: f64, h_plus: f64) -> (f64, f64, f64) {
    let s = h_minus + h_plus;
    (
        -h_plus / (h_minus * s),
        (h_plus - h_minus) / (h_minus * h_plus),
        h_minus / (h_plus * s),
    )
}

/// Solves the small dense system `a x = b` in place by Gaussian elimination
/// with partial pivoting. Used only for endpoint stencil weights, where the
/// systems are 4x4 at most and well conditioned after scaling.
fn solve_small_dense(a: &mut [Vec<f64>], b: &mut [f64]) {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty column");
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let pivot = a[col][col];
        debug_assert!(pivot != 0.0, "endpoint stencil system is singular");
        for row in col + 1..n {
            let factor = a[row][col] / pivot;
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * b[k];
        }
        b[row] = acc / a[row][row];
    }
}

/// Weights `c` such that `sum_i c[i] f(x[i])` approximates the `order`-th
/// derivative of `f` at `x[0]`, exact for polynomials of degree
/// `x.len() - 1`. Obtained by solving the Vandermonde moment system in the
/// shifted variable `t = x - x[0]`.
pub(crate) fn one_sided_derivative_weights(x: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    assert!(order < n, "need more points than the derivative order");
    // Scale t by the spread to keep the Vandermonde system well conditioned.
    let scale = x[n - 1] - x[0];
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|row| {
            (0..n)
                .map(|col| ((x[col] - x[0]) / scale).powi(row as i32))
                .collect()
        })
        .collect();
    let mut b = vec![0.0; n];
    // d^order/dt^order of t^row at 0 is order! when row == order, else 0.
    b[order] = (1..=order).map(|k| k as f64).product::<f64>();
    solve_small_dense(&mut a, &mut b);
    let rescale = scale.powi(order as i32);
    b.iter_mut().for_each(|c| *c /= rescale);
    b
}

/// First derivative on the grid: three-point stencils, one-sided and
/// second-order at both endpoints, exact for quadratics everywhere.
pub fn fd_first_derivative(grid: &Grid1D, values: &[f64]) -> Result<Vec<f64>> {
    check_len(grid, values)?;
    let nodes = grid.nodes();
    let n = nodes.len();
    let mut out = vec![0.0; n];
    for j in 1..n - 1 {
        let (cm, cc, cp) = first_derivative_stencil(nodes[j] - nodes[j - 1], nodes[j + 1] - nodes[j]);
        out[j] = cm * values[j - 1] + cc * values[j] + cp * values[j + 1];
    }
    let wl = one_sided_derivative_weights(&nodes[..3], 1);
    out[0] = wl[0] * values[0] + wl[1] * values[1] + wl[2] * values[2];
    let tail = [nodes[n - 1], nodes[n - 2], nodes[n - 3]];
    let wr = one_sided_derivative_weights(&tail, 1);
    out[n - 1] = wr[0] * values[n - 1] + wr[1] * values[n - 2] + wr[2] * values[n - 3];
    Ok(out)
}

/// Second derivative on the grid: three-point interior stencils (exact for
/// quadratics) and four-point one-sided endpoint stencils (exact for cubics,
/// hence second-order accurate at the boundary).
pub fn fd_second_derivative(grid: &Grid1D, values: &[f64]) -> Result<Vec<f64>> {
    check_len(grid, values)?;
    let nodes = grid.nodes();
    let n = nodes.len();
    let mut out = vec![0.0; n];
    for j in 1..n - 1 {
        let (cm, cc, cp) =
            second_derivative_stencil(nodes[j] - nodes[j - 1], nodes[j + 1] - nodes[j]);
        out[j] = cm * values[j - 1] + cc * values[j] + cp * values[j + 1];
    }
    let wl = one_sided_derivative_weights(&nodes[..4], 2);
    out[0] = (0..4).map(|i| wl[i] * values[i]).sum();
    let tail = [nodes[n - 1], nodes[n - 2], nodes[n - 3], nodes[n - 4]];
    let wr = one_sided_derivative_weights(&tail, 2);
    out[n - 1] = (0..4).map(|i| wr[i] * values[n - 1 - i]).sum();
    Ok(out)
}

/// Default pivot magnitude floor for [`solve_tridiagonal`].
pub const DEFAULT_PIVOT_FLOOR: f64 = 1e-14;

/// A tridiagonal linear system `A x = rhs`.
///
/// `lower` and `upper` hold the sub- and super-diagonal and are one entry
/// shorter than `diagonal`. The solve refuses pivots whose magnitude falls
/// below `pivot_floor` (default [`DEFAULT_PIVOT_FLOOR`]).
#[derive(Debug, Clone)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diagonal: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
    pub pivot_floor: f64,
}

impl TridiagonalSystem {
    /// Builds a system after validating the band lengths.
    pub fn new(lower: Vec<f64>, diagonal: Vec<f64>, upper: Vec<f64>, rhs: Vec<f64>) -> Result<Self> {
        let n = diagonal.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty diagonal".into()));
        }
        if lower.len() != n - 1 {
            return Err(Error::LengthMismatch {
                expected: n - 1,
                got: lower.len(),
            });
        }
        if upper.len() != n - 1 {
            return Err(Error::LengthMismatch {
                expected: n - 1,
                got: upper.len(),
            });
        }
        if rhs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        Ok(Self {
            lower,
            diagonal,
            upper,
            rhs,
            pivot_floor: DEFAULT_PIVOT_FLOOR,
        })
    }

    /// Zero-initialized system of size `n` (identity-free; caller fills bands).
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n.saturating_sub(1)],
            diagonal: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
            rhs: vec![0.0; n],
            pivot_floor: DEFAULT_PIVOT_FLOOR,
        }
    }
}

/// Thomas algorithm. Returns `x` with `A x = rhs`; fails with
/// [`Error::SingularPivot`] if any elimination pivot magnitude drops below
/// `sys.pivot_floor`.
pub fn solve_tridiagonal(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    let n = sys.diagonal.len();
    let mut c_prime = vec![0.0; n];
    let mut x = vec![0.0; n];

    let mut pivot = sys.diagonal[0];
    if pivot.abs() < sys.pivot_floor {
        return Err(Error::SingularPivot {
            row: 0,
            magnitude: pivot.abs(),
            floor: sys.pivot_floor,
        });
    }
    if n > 1 {
        c_prime[0] = sys.upper[0] / pivot;
    }
    x[0] = sys.rhs[0] / pivot;

    for row in 1..n {
        pivot = sys.diagonal[row] - sys.lower[row - 1] * c_prime[row - 1];
        if pivot.abs() < sys.pivot_floor {
            return Err(Error::SingularPivot {
                row,
                magnitude: pivot.abs(),
                floor: sys.pivot_floor,
            });
        }
        if row < n - 1 {
            c_prime[row] = sys.upper[row] / pivot;
        }
        x[row] = (sys.rhs[row] - sys.lower[row - 1] * x[row - 1]) / pivot;
    }

    for row in (0..n - 1).rev() {
        x[row] = x[row] - c_prime[row] * x[row + 1];
    }
    Ok(x)
}

/// Relative slack allowed when an interpolation query sits at a source
/// endpoint up to floating-point roundoff.
const INTERP_EDGE_SLACK: f64 = 1e-12;

/// Piecewise monotone cubic (PCHIP, Fritsch-Carlson) interpolation.
///
/// Exact at source nodes and for affine data; preserves monotonicity of
/// monotone data (no overshoot). Queries must lie within the source range;
/// extrapolation is an error (queries within roundoff slack of an endpoint
/// are clamped to it).
pub fn interp_monotone(
    src_grid: &Grid1D,
    src_values: &[f64],
    query_points: &[f64],
) -> Result<Vec<f64>> {
    check_len(src_grid, src_values)?;
    check_finite(src_values)?;
    let x = src_grid.nodes();
    let n = x.len();

    // Interval widths and secant slopes.
    let h: Vec<f64> = (0..n - 1).map(|j| x[j + 1] - x[j]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|j| (src_values[j + 1] - src_values[j]) / h[j]).collect();

    // Fritsch-Carlson node derivatives.
    let mut m = vec![0.0; n];
    for j in 1..n - 1 {
        if delta[j - 1] * delta[j] > 0.0 {
            let w1 = 2.0 * h[j] + h[j - 1];
            let w2 = h[j] + 2.0 * h[j - 1];
            m[j] = (w1 + w2) / (w1 / delta[j - 1] + w2 / delta[j]);
        }
    }
    // n >= MIN_GRID_COUNT, so h and delta have at least 7 entries each.
    m[0] = endpoint_slope(h[0], h[1], delta[0], delta[1]);
    m[n - 1] = endpoint_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);

    let span = src_grid.length() - x[0];
    let slack = INTERP_EDGE_SLACK * span.max(1.0);
    let mut out = Vec::with_capacity(query_points.len());
    for &q in query_points {
        if !q.is_finite() || q < x[0] - slack || q > x[n - 1] + slack {
            return Err(Error::OutOfRange {
                value: q,
                min: x[0],
                max: x[n - 1],
            });
        }
        let qc = q.clamp(x[0], x[n - 1]);
        // Locate the interval [x[k], x[k+1]] containing qc.
        let k = match x.partition_point(|&v| v <= qc) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let t = qc - x[k];
        let hk = h[k];
        // Cubic Hermite basis on the interval.
        let s = t / hk;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = t * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = t * s * (s - 1.0);
        out.push(h00 * src_values[k] + h10 * m[k] + h01 * src_values[k + 1] + h11 * m[k + 1]);
    }
    Ok(out)
}

/// Shape-preserving one-sided endpoint slope (Fritsch-Carlson boundary rule).
fn endpoint_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let mut m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        m = 0.0;
    } else if d0 * d1 < 0.0 && m.abs() > 3.0 * d0.abs() {
        m = 3.0 * d0;
    }
    m
}

/// Iteration budget for [`find_root_bisect_newton`].
pub const ROOT_MAX_ITERATIONS: usize = 100;

/// Hybrid safeguarded Newton / bisection root finder.
///
/// `f` returns `(value, derivative)`. The bracket must exhibit a sign change.
/// Newton steps are taken from `start` (or the bracket midpoint) and fall
/// back to bisection whenever they leave the bracket or stall; the returned
/// root satisfies `|f(root)| <= tol` and always lies inside the initial
/// bracket.
pub fn find_root_bisect_newton(
    f: impl Fn(f64) -> (f64, f64),
    bracket: (f64, f64),
    tol: f64,
    start: Option<f64>,
) -> Result<f64> {
    let (a, b) = bracket;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidParameter(format!(
            "invalid bracket [{a}, {b}]"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "root tolerance must be positive, got {tol}"
        )));
    }
    let (fa, _) = f(a);
    if fa.abs() <= tol {
        return Ok(a);
    }
    let (fb, _) = f(b);
    if fb.abs() <= tol {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::NoSignChange { a, b, fa, fb });
    }

    let (mut lo, mut hi) = (a, b);
    let (mut flo, _) = (fa, fb);
    let mut x = match start {
        Some(s) if s > lo && s < hi => s,
        _ => 0.5 * (lo + hi),
    };
    let mut residual = f64::INFINITY;
    for _ in 0..ROOT_MAX_ITERATIONS {
        let (fx, dfx) = f(x);
        residual = fx.abs();
        if residual <= tol {
            return Ok(x);
        }
        // Tighten the bracket around the sign change.
        if fx * flo < 0.0 {
            hi = x;
        } else {
            lo = x;
            flo = fx;
        }
        // Newton candidate, safeguarded: must land strictly inside (lo, hi).
        let newton = if dfx != 0.0 { x - fx / dfx } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::MaxIterations {
        max_iters: ROOT_MAX_ITERATIONS,
        residual,
        tol,
    })
}

/// Result of a least-squares fit of `log y = log amplitude - rate * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLinearFit {
    /// Decay rate (positive for decaying data).
    pub rate: f64,
    /// Fitted value at `x = 0`.
    pub amplitude: f64,
    /// Coefficient of determination in `[0, 1]`.
    pub r_squared: f64,
}

/// Fits `y = amplitude * exp(-rate * x)` by least squares in log space.
///
/// Needs at least 3 samples, all `ys` strictly positive, and non-identical
/// `xs`. Constant data fits exactly with rate 0 and `r_squared = 1`.
pub fn fit_log_linear(xs: &[f64], ys: &[f64]) -> Result<LogLinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "log-linear fit needs at least 3 samples, got {}",
            xs.len()
        )));
    }
    check_finite(xs)?;
    for (index, &y) in ys.iter().enumerate() {
        if !y.is_finite() || y <= 0.0 {
            return Err(Error::NonpositiveSample { index, value: y });
        }
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(Error::DegenerateXs);
    }

    let n = xs.len() as f64;
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_l = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxl = 0.0;
    for (&x, &l) in xs.iter().zip(&logs) {
        sxx += (x - mean_x) * (x - mean_x);
        sxl += (x - mean_x) * (l - mean_l);
    }
    let slope = sxl / sxx;
    let intercept = mean_l - slope * mean_x;

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&x, &l) in xs.iter().zip(&logs) {
        let fitted = intercept + slope * x;
        ss_res += (l - fitted) * (l - fitted);
        ss_tot += (l - mean_l) * (l - mean_l);
    }
    // Constant data: zero total variance. The constant line is then an exact
    // fit, so report r^2 = 1 unless the residual is somehow nonzero.
    let r_squared = if ss_tot <= f64::MIN_POSITIVE {
        if ss_res <= 1e-28 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };

    Ok(LogLinearFit {
        rate: -slope,
        amplitude: intercept.exp(),
        r_squared,
    })
}
