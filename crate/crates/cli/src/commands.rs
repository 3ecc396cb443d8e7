//! The five laboratory commands: tabulating the equilibrium, marching a
//! configured run into records and certificates, running the epsilon
//! ladder, checking compatibility and Hardy inequalities, and refitting
//! decay rates from archived records.
//!
//! Commands return a process exit code: 0 for success, 2 when the solve
//! finished but a certificate or convergence verdict failed, and errors
//! (mapped to 1 by `main`) for configuration, input, or solver failures.

use std::path::Path;
use std::sync::Arc;

use hartmann_core::diagnostics::{self, DiagnosticsRecord};
use hartmann_core::equilibrium::{hartmann_b, hartmann_psi_of_y, hartmann_u};
use hartmann_core::numerics::{fit_log_linear, make_graded_grid, trapezoid_integral, Grid1D};
use hartmann_core::profiles::Profile;
use hartmann_core::solver_eps::{march_eps, run_ladder, uniform_bound_check, EpsRunConfig};
use hartmann_core::solver_vm::{
    march_phi, march_w, EquilibriumTables, PhiState, VmForm, VmStepConfig,
};
use hartmann_core::transforms::{to_von_mises, PhysState, VmState};
use hartmann_core::Error as CoreError;

use crate::artifacts;
use crate::config::{Family, RunConfig, SolverKind};
use crate::CliError;

/// Column order of the records table; must match [`record_row`].
const RECORD_COLUMNS: [&str; 16] = [
    "x",
    "phi_l2",
    "phi_over_sqrt_u",
    "phi_over_u32",
    "phi_psi_l2",
    "phi_x_l2",
    "phi_x_psi_l2",
    "phi_x_over_sqrt_u",
    "phi_x_over_u32",
    "f_sup",
    "alpha_sup",
    "energy_inst",
    "energy_sup",
    "u_minus_ubar_h2y",
    "u_y_minus_ubar_y_linf",
    "b_y_h2y_diff",
];

fn record_row(r: &DiagnosticsRecord) -> Vec<f64> {
    vec![
        r.x,
        r.phi_l2,
        r.phi_over_sqrt_u,
        r.phi_over_u32,
        r.phi_psi_l2,
        r.phi_x_l2,
        r.phi_x_psi_l2,
        r.phi_x_over_sqrt_u,
        r.phi_x_over_u32,
        r.f_sup,
        r.alpha_sup,
        r.energy_inst,
        r.energy_sup,
        r.u_minus_ubar_h2y,
        r.u_y_minus_ubar_y_linf,
        r.b_y_h2y_diff,
    ]
}

/// One pass/fail verdict with its margin (positive = slack, negative = by
/// how much the bound failed).
#[derive(Debug, Clone)]
struct Certificate {
    name: &'static str,
    pass: bool,
    margin: f64,
}

impl Certificate {
    fn from_margin(name: &'static str, margin: f64) -> Self {
        Self {
            name,
            pass: margin >= 0.0,
            margin,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "pass": self.pass,
            "margin": self.margin,
        })
    }
}

/// A fitted decay series for the summary.
#[derive(Debug, Clone)]
struct FitEntry {
    series: String,
    rate: f64,
    amplitude: f64,
    r2: f64,
}

impl FitEntry {
    fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "series": self.series,
            "rate": self.rate,
            "amplitude": self.amplitude,
            "r2": self.r2,
        })
    }
}

fn psi_grid(cfg: &RunConfig) -> Result<Arc<Grid1D>, CliError> {
    Ok(Arc::new(make_graded_grid(
        cfg.resolved_psi_max(),
        cfg.grid_count,
        cfg.grading_exponent,
    )?))
}

fn y_grid(cfg: &RunConfig) -> Result<Arc<Grid1D>, CliError> {
    Ok(Arc::new(make_graded_grid(
        cfg.y_max,
        cfg.grid_count,
        cfg.grading_exponent,
    )?))
}

/// Builds the configured initial-data profile, loading sample files on
/// demand.
fn build_profile(cfg: &RunConfig) -> Result<Profile, CliError> {
    match cfg.family {
        Family::Hartmann => Ok(Profile::Hartmann),
        Family::PerturbedQuartic => Ok(Profile::perturbed_quartic(cfg.amplitude)?),
        Family::PerturbedQuadratic => Ok(Profile::perturbed_quadratic(cfg.amplitude)?),
        Family::CustomSamples => {
            let path = cfg
                .custom_path
                .as_ref()
                .expect("validated: custom_samples requires a path");
            load_samples(path)
        }
    }
}

/// Reads a two-column `y,u` sample file (`#` comments and an optional
/// non-numeric header line are skipped) into a tabulated profile.
fn load_samples(path: &Path) -> Result<Profile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut ys = Vec::new();
    let mut us = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cells = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (cells.next(), cells.next(), cells.next()) else {
            return Err(CliError::Input(format!(
                "{}: line {} must have exactly two columns",
                path.display(),
                lineno + 1
            )));
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(y), Ok(u)) => {
                ys.push(y);
                us.push(u);
            }
            // Tolerate one header line such as `y,u`.
            _ if ys.is_empty() => continue,
            _ => {
                return Err(CliError::Input(format!(
                    "{}: line {} is not a numeric row",
                    path.display(),
                    lineno + 1
                )));
            }
        }
    }
    let grid = Arc::new(Grid1D::from_nodes(ys, 1.0).map_err(|e| {
        CliError::Input(format!("{}: bad sample heights: {e}", path.display()))
    })?);
    Ok(Profile::from_samples(grid, us)?)
}

fn ensure_output_dir(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.directory).map_err(|e| CliError::Io {
        path: cfg.directory.display().to_string(),
        source: e,
    })
}

// ---------------------------------------------------------------------------
// steady
// ---------------------------------------------------------------------------

/// Tabulates the closed-form equilibrium on the configured physical grid.
pub fn cmd_steady(cfg: &RunConfig) -> Result<i32, CliError> {
    ensure_output_dir(cfg)?;
    let grid = y_grid(cfg)?;
    let mut rows = Vec::with_capacity(grid.count());
    for &y in grid.nodes() {
        rows.push(vec![
            y,
            hartmann_u(y)?,
            hartmann_b(y)?,
            hartmann_psi_of_y(y)?,
        ]);
    }
    let columns = ["y", "u_bar", "b_bar", "psi_bar"];
    if cfg.formats.wants_csv() {
        artifacts::write_csv(
            &cfg.directory.join("steady_profile.csv"),
            cfg,
            &columns,
            &rows,
        )?;
    }
    if cfg.formats.wants_json() {
        let doc = serde_json::json!({
            "columns": columns,
            "rows": rows,
        });
        artifacts::write_json(&cfg.directory.join("steady_profile.json"), cfg, doc)?;
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// march
// ---------------------------------------------------------------------------

/// Everything a march produces besides the records themselves.
struct MarchOutput {
    records: Vec<DiagnosticsRecord>,
    /// `max |u - ubar|` at the final station, against the (possibly
    /// shifted) sampled equilibrium.
    final_drift_u: f64,
    /// Solver-specific certificates (the record-based ones are appended
    /// later).
    certificates: Vec<Certificate>,
    /// Supplementary weighted perturbation norm at the final station, when
    /// a weight power is configured.
    weighted_final: Option<f64>,
}

/// Marches the configured initial data and writes records + summary.
pub fn cmd_march(cfg: &RunConfig) -> Result<i32, CliError> {
    if cfg.solver == SolverKind::Ladder {
        return Err(CliError::Config(
            "solver = ladder pairs with the `ladder` subcommand; \
             `march` drives a single solve"
                .into(),
        ));
    }
    ensure_output_dir(cfg)?;
    let mut output = match cfg.solver {
        SolverKind::VmW => march_von_mises(cfg, VmForm::WForm)?,
        SolverKind::VmPhi => march_von_mises(cfg, VmForm::PhiForm)?,
        SolverKind::EpsPhysical => march_physical(cfg)?,
        SolverKind::Ladder => unreachable!("rejected above"),
    };
    output
        .certificates
        .extend(record_certificates(&output.records, cfg.eta0));
    let fits = fit_series(&output.records, cfg.x_end);

    if cfg.formats.wants_csv() {
        let last = output.records.len() - 1;
        let rows: Vec<Vec<f64>> = output
            .records
            .iter()
            .enumerate()
            .filter(|(i, _)| i % cfg.record_every == 0 || *i == last)
            .map(|(_, r)| record_row(r))
            .collect();
        artifacts::write_csv(
            &cfg.directory.join("march_records.csv"),
            cfg,
            &RECORD_COLUMNS,
            &rows,
        )?;
    }
    if cfg.formats.wants_json() {
        let mut doc = serde_json::json!({
            "stations_count": output.records.len(),
            "final_x": output.records.last().expect("nonempty records").x,
            "final_drift_u": output.final_drift_u,
            "certificates": output.certificates.iter().map(Certificate::to_json).collect::<Vec<_>>(),
            "fits": fits.iter().map(FitEntry::to_json).collect::<Vec<_>>(),
        });
        let object = doc.as_object_mut().expect("object literal");
        if let Ok(constant) = diagnostics::alpha_bound_constant(&output.records) {
            object.insert("alpha_bound_constant".into(), serde_json::json!(constant));
        }
        if let Some(weighted) = output.weighted_final {
            object.insert("weighted_phi_l2_final".into(), serde_json::json!(weighted));
        }
        artifacts::write_json(&cfg.directory.join("march_summary.json"), cfg, doc)?;
    }
    Ok(if output.certificates.iter().all(|c| c.pass) {
        0
    } else {
        2
    })
}

/// Shared tail of both von-Mises marches: records, drift, and the optional
/// weighted norm, measured against `tables`.
fn finish_vm_march(
    cfg: &RunConfig,
    history: &[VmState],
    tables: &EquilibriumTables,
) -> Result<MarchOutput, CliError> {
    let records = diagnostics::make_records(history, tables)?;
    let last = history.last().expect("nonempty history");
    let mut final_drift_u = 0.0_f64;
    for (w, ub) in last.w.iter().zip(&tables.ubar) {
        final_drift_u = final_drift_u.max((w.max(0.0).sqrt() - ub).abs());
    }
    let weighted_final = if cfg.weight_power > 0 {
        let phi: Vec<f64> = last.w.iter().zip(&tables.wbar).map(|(&w, &wb)| w - wb).collect();
        Some(diagnostics::weighted_norm(
            &tables.grid,
            &phi,
            cfg.weight_power,
        )?)
    } else {
        None
    };
    Ok(MarchOutput {
        records,
        final_drift_u,
        certificates: Vec::new(),
        weighted_final,
    })
}

fn march_von_mises(cfg: &RunConfig, form: VmForm) -> Result<MarchOutput, CliError> {
    let grid = psi_grid(cfg)?;
    let tables = EquilibriumTables::new(Arc::clone(&grid))?;
    let profile = build_profile(cfg)?;
    let initial = profile.initial_vm_state(&grid)?;
    let mut vm_cfg = VmStepConfig::new(cfg.dx, form);
    vm_cfg.picard_tol = cfg.picard_tol;
    vm_cfg.picard_max = cfg.picard_max;
    let history = match form {
        VmForm::WForm => march_w(&initial, cfg.x_end, &vm_cfg, &tables, |_| {})?,
        VmForm::PhiForm => {
            let phi0: Vec<f64> = initial
                .w
                .iter()
                .zip(&tables.wbar)
                .map(|(&w, &wb)| w - wb)
                .collect();
            let start = PhiState::new(0.0, Arc::clone(&grid), phi0)?;
            let phi_history = march_phi(&start, cfg.x_end, &vm_cfg, &tables, |_| {})?;
            // Rebuild w-states so the records funnel sees one shape; the
            // far value is the equilibrium tail the phi form pins to.
            let far = *tables.wbar.last().expect("nonempty tables");
            phi_history
                .iter()
                .map(|s| {
                    let w: Vec<f64> = s
                        .phi
                        .iter()
                        .zip(&tables.wbar)
                        .map(|(&p, &wb)| p + wb)
                        .collect();
                    VmState::new(s.x, Arc::clone(&grid), w, far)
                })
                .collect::<Result<Vec<_>, CoreError>>()?
        }
    };
    finish_vm_march(cfg, &history, &tables)
}

fn march_physical(cfg: &RunConfig) -> Result<MarchOutput, CliError> {
    let eps = cfg.eps_ladder[0];
    let grid_y = y_grid(cfg)?;
    let profile = build_profile(cfg)?;
    let base = profile.sample(&grid_y)?;
    let u0: Vec<f64> = base.iter().map(|&u| u + eps).collect();
    let initial = PhysState::new(0.0, Arc::clone(&grid_y), u0, eps)?;
    let mut eps_cfg = EpsRunConfig::new(vec![eps], cfg.dx, Arc::clone(&grid_y))?;
    eps_cfg.picard_tol = cfg.picard_tol;
    eps_cfg.picard_max = cfg.picard_max;
    let history = march_eps(&initial, cfg.x_end, &eps_cfg, |_| {})?;

    // Nodewise wall/bulk bounds, reported as one certificate with the worst
    // margin across all stations.
    let mut bound_margin = f64::INFINITY;
    for state in &history {
        let report = uniform_bound_check(state, cfg.delta0)?;
        bound_margin = bound_margin
            .min(report.wall_lower.margin)
            .min(report.wall_upper.margin)
            .min(report.bulk_lower.margin);
    }

    // Records live in streamfunction coordinates; the grid must stay inside
    // every station's streamfunction budget for the conversion to be
    // interpolation, never extrapolation.
    let mut budget = f64::INFINITY;
    for state in &history {
        budget = budget.min(trapezoid_integral(&grid_y, &state.u)?);
    }
    let grid_psi = Arc::new(make_graded_grid(
        budget * (1.0 - 1e-9),
        cfg.grid_count,
        cfg.grading_exponent,
    )?);
    let tables = EquilibriumTables::shifted(Arc::clone(&grid_psi), eps)?;
    let vm_history: Vec<VmState> = history
        .iter()
        .map(|state| to_von_mises(state, &grid_psi))
        .collect::<Result<Vec<_>, CoreError>>()?;
    let mut output = finish_vm_march(cfg, &vm_history, &tables)?;
    output
        .certificates
        .push(Certificate::from_margin("uniform_bounds", bound_margin));
    Ok(output)
}

/// Decay certificates measured on the records: the exponentially weighted
/// perturbation energies must stay within 5% of their initial value, and
/// the relative oscillation must stay below the configured threshold.
fn record_certificates(records: &[DiagnosticsRecord], eta0: f64) -> Vec<Certificate> {
    /// Margin of `e^x s(x)^2 <= 1.05 s(0)^2` over the whole run.
    fn decay_margin(records: &[DiagnosticsRecord], series: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
        let initial = series(&records[0]).powi(2);
        // An equilibrium start has no energy to decay; the certificate is
        // vacuously satisfied with full slack.
        if initial <= 1e-24 {
            return 1.05;
        }
        let mut worst = 0.0_f64;
        for r in records {
            worst = worst.max(r.x.exp() * series(r).powi(2) / initial);
        }
        1.05 - worst
    }

    let alpha_max = records.iter().fold(0.0_f64, |m, r| m.max(r.alpha_sup));
    vec![
        Certificate::from_margin("decay_l2", decay_margin(records, |r| r.phi_l2)),
        Certificate::from_margin(
            "decay_weighted",
            decay_margin(records, |r| r.phi_over_sqrt_u),
        ),
        Certificate::from_margin("alpha_smallness", eta0 - alpha_max),
    ]
}

/// Log-linear fits of the decaying series over the settled window
/// `x >= min(0.5, x_end/2)`; series that cannot be fitted (zero samples,
/// too few stations) are omitted rather than reported as garbage.
fn fit_series(records: &[DiagnosticsRecord], x_end: f64) -> Vec<FitEntry> {
    let lower = 0.5_f64.min(0.5 * x_end);
    let tail: Vec<&DiagnosticsRecord> = records
        .iter()
        .filter(|r| r.x >= lower - 1e-12)
        .collect();
    if tail.len() < 3 {
        return Vec::new();
    }
    let xs: Vec<f64> = tail.iter().map(|r| r.x).collect();
    let series: [(&str, Vec<f64>); 5] = [
        ("phi_l2_sq", tail.iter().map(|r| r.phi_l2 * r.phi_l2).collect()),
        (
            "phi_over_sqrt_u_sq",
            tail.iter()
                .map(|r| r.phi_over_sqrt_u * r.phi_over_sqrt_u)
                .collect(),
        ),
        (
            "u_minus_ubar_h2y",
            tail.iter().map(|r| r.u_minus_ubar_h2y).collect(),
        ),
        (
            "u_y_minus_ubar_y_linf",
            tail.iter().map(|r| r.u_y_minus_ubar_y_linf).collect(),
        ),
        (
            "b_y_h2y_diff",
            tail.iter().map(|r| r.b_y_h2y_diff).collect(),
        ),
    ];
    let mut fits = Vec::new();
    for (name, ys) in series {
        if let Ok(fit) = fit_log_linear(&xs, &ys) {
            fits.push(FitEntry {
                series: name.to_string(),
                rate: fit.rate,
                amplitude: fit.amplitude,
                r2: fit.r_squared,
            });
        }
    }
    fits
}

// ---------------------------------------------------------------------------
// ladder
// ---------------------------------------------------------------------------

/// Runs the epsilon ladder and reports convergence toward the von-Mises
/// solution of the degenerate problem.
pub fn cmd_ladder(cfg: &RunConfig) -> Result<i32, CliError> {
    ensure_output_dir(cfg)?;
    let grid_y = y_grid(cfg)?;
    let profile = build_profile(cfg)?;
    let mut eps_cfg = EpsRunConfig::new(cfg.eps_ladder.clone(), cfg.dx, Arc::clone(&grid_y))?;
    eps_cfg.picard_tol = cfg.picard_tol;
    eps_cfg.picard_max = cfg.picard_max;
    let tables = EquilibriumTables::new(psi_grid(cfg)?)?;
    let path = cfg.directory.join("ladder_report.json");

    match run_ladder(&profile, &eps_cfg, cfg.x_end, &tables) {
        Ok(outcome) => {
            let mut doc = serde_json::json!({
                "eps": cfg.eps_ladder,
                "stations_count": outcome.histories[0].len(),
            });
            if let Some(report) = &outcome.report {
                let object = doc.as_object_mut().expect("object literal");
                object.insert(
                    "pairwise_diffs".into(),
                    serde_json::json!(report.pairwise_diffs),
                );
                object.insert(
                    "oracle_diffs".into(),
                    serde_json::json!(report.oracle_diffs),
                );
                if let Some(order) = report.observed_order {
                    object.insert("observed_order".into(), serde_json::json!(order));
                }
            }
            artifacts::write_json(&path, cfg, doc)?;
            Ok(0)
        }
        Err(CoreError::LadderNonconvergence { diffs }) => {
            let doc = serde_json::json!({
                "eps": cfg.eps_ladder,
                "oracle_diffs": diffs,
                "error": "oracle differences are not strictly decreasing",
            });
            artifacts::write_json(&path, cfg, doc)?;
            Ok(2)
        }
        Err(other) => Err(other.into()),
    }
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

/// Wall-compatibility residual tolerance for families with derivative
/// closures (the residuals are evaluated exactly).
const CHECK_TOL_CLOSURE: f64 = 1e-10;
/// Tolerance for tabulated profiles, where one-sided wall stencils limit
/// the achievable accuracy.
const CHECK_TOL_SAMPLED: f64 = 1e-6;

/// Runs the compatibility check on the configured initial data plus the
/// randomized Hardy-inequality suite.
pub fn cmd_check(cfg: &RunConfig) -> Result<i32, CliError> {
    ensure_output_dir(cfg)?;
    let profile = build_profile(cfg)?;
    let sampled = matches!(profile, Profile::Samples { .. });
    let tol = if sampled {
        CHECK_TOL_SAMPLED
    } else {
        CHECK_TOL_CLOSURE
    };
    let basic = diagnostics::check_compatibility(&profile, tol, false)?;
    let passes = basic.passes(tol);
    // Orders 3-4 exist only for closure families and only once orders 0-2
    // hold; they are informational either way.
    let report = if passes && !sampled {
        diagnostics::check_compatibility(&profile, tol, true)?
    } else {
        basic
    };
    let hardy = diagnostics::hardy_random_suite(cfg.hardy_draws, cfg.hardy_seed)?;

    let mut compat = serde_json::json!({
        "residual_order0": report.residual_order0,
        "slope": report.slope,
        "residual_order1": report.residual_order1,
        "residual_order2": report.residual_order2,
        "tolerance": tol,
        "passes": passes,
    });
    let object = compat.as_object_mut().expect("object literal");
    if let Some(r3) = report.residual_order3 {
        object.insert("residual_order3".into(), serde_json::json!(r3));
    }
    if let Some(r4) = report.residual_order4 {
        object.insert("residual_order4".into(), serde_json::json!(r4));
    }

    let hardy_clean = hardy.failures == 0;
    let doc = serde_json::json!({
        "compatibility": compat,
        "hardy": {
            "draws": hardy.draws,
            "checks": hardy.checks,
            "failures": hardy.failures,
            "worst_ratio": hardy.worst_ratio,
            "all_pass": hardy_clean,
        },
    });
    artifacts::write_json(&cfg.directory.join("check_report.json"), cfg, doc)?;
    Ok(if passes && hardy_clean { 0 } else { 2 })
}

// ---------------------------------------------------------------------------
// decay-fit
// ---------------------------------------------------------------------------

/// Refits decay rates from an archived records table.
pub fn cmd_decay_fit(cfg: &RunConfig, input: &Path) -> Result<i32, CliError> {
    ensure_output_dir(cfg)?;
    let table = artifacts::read_records_csv(input)?;
    let x_col = table
        .column("x")
        .ok_or_else(|| CliError::Input(format!("{}: no `x` column", input.display())))?;
    let x_last = table.rows.last().expect("nonempty table")[x_col];
    let lower = 0.5_f64.min(0.5 * x_last);
    let keep: Vec<&Vec<f64>> = table
        .rows
        .iter()
        .filter(|row| row[x_col] >= lower - 1e-12)
        .collect();
    if keep.len() < 3 {
        return Err(CliError::Input(format!(
            "{}: only {} stations beyond x = {lower} — too few to fit",
            input.display(),
            keep.len()
        )));
    }
    let xs: Vec<f64> = keep.iter().map(|row| row[x_col]).collect();
    let mut fits = Vec::new();
    for (col, name) in table.columns.iter().enumerate() {
        if col == x_col {
            continue;
        }
        let ys: Vec<f64> = keep.iter().map(|row| row[col]).collect();
        if let Ok(fit) = fit_log_linear(&xs, &ys) {
            fits.push(FitEntry {
                series: name.clone(),
                rate: fit.rate,
                amplitude: fit.amplitude,
                r2: fit.r_squared,
            });
        }
    }
    let doc = serde_json::json!({
        "input": input.display().to_string(),
        "stations_used": keep.len(),
        "fits": fits.iter().map(FitEntry::to_json).collect::<Vec<_>>(),
    });
    artifacts::write_json(&cfg.directory.join("decay_fit.json"), cfg, doc)?;
    Ok(0)
}
