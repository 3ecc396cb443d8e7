//! Behavior tests for the `hartmann-lab` binary: exit codes, artifact
//! shapes, configuration handling, and the workflows that chain
//! subcommands together (march then refit, samples then check).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use hartmann_core::numerics::make_graded_grid;
use hartmann_core::profiles::Profile;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hartmann-lab"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("terminated by exit, not signal")
}

fn stderr_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Writes `text` as a config file inside `dir` and returns its path.
fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("run.conf");
    std::fs::write(&path, text).expect("config written");
    path
}

fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).expect("artifact readable");
    serde_json::from_str(&text).expect("artifact parses as JSON")
}

/// `steady` tabulates the closed-form equilibrium with the schema line
/// first, the effective configuration embedded, and exact wall values.
#[test]
fn steady_tabulates_the_closed_form_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "grid.count = 101\n");
    let out = dir.path().join("out");
    let output = run(&[
        "steady",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "both",
    ]);
    assert_eq!(exit_code(&output), 0, "steady fails: {}", stderr_text(&output));

    let csv = std::fs::read_to_string(out.join("steady_profile.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("# schema_version = 1"),
        "the schema version must lead every CSV artifact"
    );
    assert!(
        csv.contains("# grid.count = 101"),
        "the effective configuration must be embedded in the CSV header"
    );
    let mut body = csv.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(
        body.next(),
        Some("y,u_bar,b_bar,psi_bar"),
        "column header follows the configuration block"
    );
    let rows: Vec<Vec<f64>> = body
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 101, "one row per grid node");
    assert!(
        rows[0].iter().all(|&v| v == 0.0),
        "every tabulated quantity vanishes exactly at the wall, got {:?}",
        rows[0]
    );
    for row in &rows {
        let (y, u, b, psi) = (row[0], row[1], row[2], row[3]);
        let u_exact = -(-y).exp_m1();
        let psi_exact = y + (-y).exp_m1();
        assert!((u - u_exact).abs() <= 1e-12, "u({y}) = {u} vs {u_exact}");
        assert!((b - u_exact).abs() <= 1e-12, "b({y}) = {b} vs {u_exact}");
        assert!(
            (psi - psi_exact).abs() <= 1e-12,
            "psi({y}) = {psi} vs {psi_exact}"
        );
    }

    let doc = read_json(&out.join("steady_profile.json"));
    assert_eq!(doc["schema_version"], 1, "JSON artifacts carry the schema");
    assert_eq!(
        doc["config"]["grid.count"], 101,
        "JSON artifacts embed the effective configuration"
    );
    assert_eq!(doc["rows"].as_array().unwrap().len(), 101);
}

/// A steady-start march succeeds, reports negligible drift, and stamps the
/// station bookkeeping into the summary.
#[test]
fn march_holds_the_equilibrium_and_reports_drift() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "grid.count = 1001\nmarch.x_end = 0.5\n");
    let out = dir.path().join("out");
    let output = run(&[
        "march",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(exit_code(&output), 0, "march fails: {}", stderr_text(&output));

    let doc = read_json(&out.join("march_summary.json"));
    assert_eq!(doc["stations_count"], 51, "50 steps plus the initial station");
    assert_eq!(doc["final_x"].as_f64(), Some(0.5));
    let drift = doc["final_drift_u"].as_f64().unwrap();
    assert!(drift <= 1e-6, "steady-start drift {drift:.3e} exceeds 1e-6");
    let certificates = doc["certificates"].as_array().unwrap();
    assert_eq!(certificates.len(), 3, "decay x2 plus oscillation smallness");
    for cert in certificates {
        assert_eq!(
            cert["pass"], true,
            "certificate {} must pass on a steady start",
            cert["name"]
        );
    }
    assert_eq!(doc["config"]["initial_data.family"], "hartmann");
}

/// The phi-formulation solver is reachable through the same subcommand.
#[test]
fn march_runs_the_phi_formulation() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        &dir,
        "solver = vm_phi\n\
         initial_data.family = perturbed_quartic\n\
         initial_data.amplitude = 0.05\n\
         grid.count = 501\n\
         march.x_end = 0.3\n",
    );
    let out = dir.path().join("out");
    let output = run(&[
        "march",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(exit_code(&output), 0, "march fails: {}", stderr_text(&output));
    let doc = read_json(&out.join("march_summary.json"));
    assert_eq!(doc["config"]["solver"], "vm_phi");
    assert!(doc["final_drift_u"].as_f64().unwrap() < 0.2);
}

/// The regularized physical solver is reachable too and certifies its
/// uniform bounds.
#[test]
fn march_runs_the_regularized_solver() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        &dir,
        "solver = eps_physical\n\
         initial_data.family = perturbed_quartic\n\
         initial_data.amplitude = 0.05\n\
         grid.count = 501\n\
         march.x_end = 0.3\n",
    );
    let out = dir.path().join("out");
    let output = run(&[
        "march",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(exit_code(&output), 0, "march fails: {}", stderr_text(&output));
    let doc = read_json(&out.join("march_summary.json"));
    let bounds = doc["certificates"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "uniform_bounds")
        .expect("regularized marches certify the uniform bounds");
    assert_eq!(bounds["pass"], true, "uniform bounds hold at eps = 0.1");
    assert!(bounds["margin"].as_f64().unwrap() > 0.0);
}

/// A certificate violation is an exit-2 condition, not an error: the
/// artifacts are still written, with the failing certificate flagged.
#[test]
fn march_exits_2_when_a_certificate_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        &dir,
        "initial_data.family = perturbed_quartic\n\
         initial_data.amplitude = 0.05\n\
         grid.count = 1001\n\
         march.x_end = 0.2\n\
         diagnostics.eta0 = 0.01\n",
    );
    let out = dir.path().join("out");
    let output = run(&[
        "march",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(
        exit_code(&output),
        2,
        "an uncertified run must exit with 2: {}",
        stderr_text(&output)
    );

    let doc = read_json(&out.join("march_summary.json"));
    let certs = doc["certificates"].as_array().unwrap();
    let alpha = certs
        .iter()
        .find(|c| c["name"] == "alpha_smallness")
        .expect("oscillation certificate present");
    assert_eq!(alpha["pass"], false, "the 0.187 oscillation exceeds 0.01");
    assert!(alpha["margin"].as_f64().unwrap() < 0.0);
    let decay = certs
        .iter()
        .find(|c| c["name"] == "decay_l2")
        .expect("decay certificate present");
    assert_eq!(decay["pass"], true, "the energy still decays");
}

/// `march` drives a single solve; the ladder solver belongs to `ladder`.
#[test]
fn march_rejects_the_ladder_solver() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "solver = ladder\n");
    let out = dir.path().join("out");
    let output = run(&[
        "march",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1, "mismatched solver is a usage error");
    assert!(
        stderr_text(&output).contains("ladder"),
        "the error must name the offending solver: {}",
        stderr_text(&output)
    );
}

/// A three-rung ladder reports strictly decreasing oracle differences and
/// a first-order convergence rate.
#[test]
fn ladder_reports_the_convergence_order() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        &dir,
        "initial_data.family = perturbed_quartic\n\
         initial_data.amplitude = 0.05\n\
         grid.count = 301\n\
         march.dx = 0.05\n\
         march.x_end = 0.5\n",
    );
    let out = dir.path().join("out");
    let output = run(&[
        "ladder",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "ladder fails: {}", stderr_text(&output));

    let doc = read_json(&out.join("ladder_report.json"));
    assert_eq!(doc["eps"].as_array().unwrap().len(), 3);
    assert_eq!(doc["stations_count"], 11);
    let diffs: Vec<f64> = doc["oracle_diffs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(diffs.len(), 3);
    assert!(
        diffs.windows(2).all(|p| p[1] < p[0]),
        "oracle differences must decrease rung by rung: {diffs:?}"
    );
    assert_eq!(doc["pairwise_diffs"].as_array().unwrap().len(), 2);
    let order = doc["observed_order"].as_f64().unwrap();
    assert!(
        (0.6..=1.4).contains(&order),
        "the regularization error is first order in eps, got {order}"
    );
}

/// A single-rung ladder degenerates to a plain march: no convergence
/// measurements are reported.
#[test]
fn single_rung_ladder_degenerates_to_a_march() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        &dir,
        "initial_data.family = perturbed_quartic\n\
         initial_data.amplitude = 0.05\n\
         grid.count = 301\n\
         march.dx = 0.05\n\
         march.x_end = 0.5\n\
         eps_ladder = 0.1\n",
    );
    let out = dir.path().join("out");
    let output = run(&[
        "ladder",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "ladder fails: {}", stderr_text(&output));

    let doc = read_json(&out.join("ladder_report.json"));
    assert_eq!(doc["eps"].as_array().unwrap().len(), 1);
    assert_eq!(doc["stations_count"], 11);
    assert!(
        doc.get("observed_order").is_none() && doc.get("pairwise_diffs").is_none(),
        "one rung cannot measure convergence"
    );
}

/// When the oracle differences fail to decrease — here forced by a domain
/// truncated so hard that the truncation error dominates the tiny
/// regularization levels — the ladder exits with 2 and records why.
#[test]
fn ladder_exits_2_when_convergence_stalls() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        &dir,
        "domain.y_max = 3\n\
         grid.count = 301\n\
         march.dx = 0.05\n\
         march.x_end = 0.5\n\
         eps_ladder = 0.001, 0.0005, 0.00025\n",
    );
    let out = dir.path().join("out");
    let output = run(&[
        "ladder",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&output),
        2,
        "a stalled ladder must exit with 2: {}",
        stderr_text(&output)
    );

    let doc = read_json(&out.join("ladder_report.json"));
    assert!(
        doc["error"]
            .as_str()
            .unwrap()
            .contains("not strictly decreasing"),
        "the report must say what went wrong"
    );
    assert_eq!(doc["oracle_diffs"].as_array().unwrap().len(), 3);
}

/// `check` certifies the steady profile: compatibility at the closure
/// tolerance with the higher-order residuals included, plus a clean
/// randomized Hardy suite.
#[test]
fn check_certifies_the_steady_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let output = run(&["check", "--out", out.to_str().unwrap(), "--seed", "42"]);
    assert_eq!(exit_code(&output), 0, "check fails: {}", stderr_text(&output));

    let doc = read_json(&out.join("check_report.json"));
    let compat = &doc["compatibility"];
    assert_eq!(compat["passes"], true);
    assert_eq!(compat["tolerance"].as_f64(), Some(1e-10));
    assert!(
        compat.get("residual_order3").is_some() && compat.get("residual_order4").is_some(),
        "closure families report the informational higher orders"
    );
    let hardy = &doc["hardy"];
    assert_eq!(hardy["checks"], 300, "100 draws x 3 exponents");
    assert_eq!(hardy["failures"], 0);
    assert_eq!(hardy["all_pass"], true);
    assert_eq!(doc["config"]["diagnostics.hardy_seed"], 42);
}

/// The quadratic-bump family violates wall compatibility at first order
/// with the predicted residual -2a; `check` reports it and exits with 2.
#[test]
fn check_exits_2_for_incompatible_initial_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        &dir,
        "initial_data.family = perturbed_quadratic\n\
         initial_data.amplitude = 0.03\n",
    );
    let out = dir.path().join("out");
    let output = run(&[
        "check",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2, "incompatible data must exit with 2");

    let doc = read_json(&out.join("check_report.json"));
    let compat = &doc["compatibility"];
    assert_eq!(compat["passes"], false);
    let r1 = compat["residual_order1"].as_f64().unwrap();
    assert!(
        (r1 - (-0.06)).abs() <= 1e-9,
        "first-order residual must equal -2a = -0.06, got {r1}"
    );
    assert!(
        compat.get("residual_order3").is_none(),
        "failing families skip the informational higher orders"
    );
}

/// An empty configuration file is rejected as a usage error.
#[test]
fn empty_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "");
    let out = dir.path().join("out");
    let output = run(&[
        "check",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1, "empty configs are errors");
    assert!(
        stderr_text(&output).starts_with("error:"),
        "errors go to stderr: {}",
        stderr_text(&output)
    );
}

/// Unknown and duplicate configuration keys are rejected rather than
/// silently ignored.
#[test]
fn unknown_and_duplicate_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let unknown = write_config(&dir, "grid.cuont = 100\n");
    let output = run(&[
        "steady",
        "--config",
        unknown.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1, "typo'd keys must not be ignored");
    assert!(stderr_text(&output).contains("grid.cuont"));

    let duplicate = write_config(&dir, "grid.count = 100\ngrid.count = 200\n");
    let output = run(&[
        "steady",
        "--config",
        duplicate.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1, "duplicate keys are ambiguous");
}

/// `decay-fit` refits an archived records table and recovers the decay
/// rate the march measured online.
#[test]
fn decay_fit_refits_archived_records() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        &dir,
        "initial_data.family = perturbed_quartic\n\
         initial_data.amplitude = 0.05\n\
         grid.count = 1001\n\
         march.x_end = 2\n",
    );
    let out = dir.path().join("out");
    let output = run(&[
        "march",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(exit_code(&output), 0, "march fails: {}", stderr_text(&output));
    let records = out.join("march_records.csv");
    let csv = std::fs::read_to_string(&records).unwrap();
    assert!(
        csv.contains("# march.x_end = 2") && csv.contains("# initial_data.family = perturbed_quartic"),
        "records must carry the configuration that produced them"
    );

    let fit_out = dir.path().join("fit_out");
    let output = run(&[
        "decay-fit",
        "--input",
        records.to_str().unwrap(),
        "--out",
        fit_out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&output),
        0,
        "decay-fit fails: {}",
        stderr_text(&output)
    );
    let doc = read_json(&fit_out.join("decay_fit.json"));
    assert_eq!(doc["stations_used"], 151, "window x >= 0.5 of 201 stations");
    let fits = doc["fits"].as_array().unwrap();
    let phi = fits
        .iter()
        .find(|f| f["series"] == "phi_l2")
        .expect("the perturbation norm is refitted");
    let rate = phi["rate"].as_f64().unwrap();
    assert!(
        (0.8..=1.3).contains(&rate),
        "phi_l2 decays at the spectral rate, got {rate}"
    );
}

/// A missing input table is an I/O usage error, not a crash.
#[test]
fn decay_fit_requires_a_readable_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("no_such_records.csv");
    let output = run(&[
        "decay-fit",
        "--input",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
    assert!(stderr_text(&output).starts_with("error:"));
}

/// `--format` selects exactly the requested artifact families.
#[test]
fn format_flag_selects_artifact_families() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "grid.count = 101\n");

    for (format, expected) in [("csv", "steady_profile.csv"), ("json", "steady_profile.json")] {
        let out = dir.path().join(format);
        let output = run(&[
            "steady",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--format",
            format,
        ]);
        assert_eq!(exit_code(&output), 0, "steady fails: {}", stderr_text(&output));
        let names: Vec<String> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            vec![expected.to_string()],
            "--format {format} must write exactly the {format} artifact"
        );
    }
}

/// Tabulated initial data round-trips: samples written by the library feed
/// a march and a compatibility check through the `custom_samples` family.
#[test]
fn custom_samples_feed_march_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Arc::new(make_graded_grid(15.0, 2001, 2.0).unwrap());
    let values = Profile::perturbed_quartic(0.05)
        .unwrap()
        .sample(&grid)
        .unwrap();
    let mut text = String::from("y,u\n");
    for (&y, &u) in grid.nodes().iter().zip(&values) {
        text.push_str(&format!("{y:.16e},{u:.16e}\n"));
    }
    let samples = dir.path().join("samples.csv");
    std::fs::write(&samples, text).unwrap();

    let config = write_config(
        &dir,
        &format!(
            "initial_data.family = custom_samples\n\
             initial_data.custom_path = {}\n\
             grid.count = 501\n\
             march.x_end = 0.5\n",
            samples.display()
        ),
    );

    let march_out = dir.path().join("march_out");
    let output = run(&[
        "march",
        "--config",
        config.to_str().unwrap(),
        "--out",
        march_out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(
        exit_code(&output),
        0,
        "march on samples fails: {}",
        stderr_text(&output)
    );
    let doc = read_json(&march_out.join("march_summary.json"));
    for cert in doc["certificates"].as_array().unwrap() {
        assert_eq!(
            cert["pass"], true,
            "certificate {} must pass for the sampled quartic bump",
            cert["name"]
        );
    }

    let check_out = dir.path().join("check_out");
    let output = run(&[
        "check",
        "--config",
        config.to_str().unwrap(),
        "--out",
        check_out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&output),
        0,
        "check on samples fails: {}",
        stderr_text(&output)
    );
    let doc = read_json(&check_out.join("check_report.json"));
    assert_eq!(
        doc["compatibility"]["tolerance"].as_f64(),
        Some(1e-6),
        "sampled profiles are held to the stencil tolerance"
    );
    assert_eq!(doc["compatibility"]["passes"], true);
    assert_eq!(
        doc["config"]["initial_data.custom_path"],
        samples.to_str().unwrap()
    );
}

/// `--seed` overrides the Hardy seed: different seeds draw different
/// profiles (visible in the worst ratio) and are echoed in the artifact.
#[test]
fn seed_flag_overrides_the_hardy_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "diagnostics.hardy_draws = 25\n");
    let mut ratios = Vec::new();
    for seed in ["7", "8"] {
        let out = dir.path().join(seed);
        let output = run(&[
            "check",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(exit_code(&output), 0, "check fails: {}", stderr_text(&output));
        let doc = read_json(&out.join("check_report.json"));
        assert_eq!(doc["hardy"]["checks"], 75, "25 draws x 3 exponents");
        assert_eq!(doc["hardy"]["failures"], 0);
        assert_eq!(
            doc["config"]["diagnostics.hardy_seed"],
            seed.parse::<u64>().unwrap()
        );
        ratios.push(doc["hardy"]["worst_ratio"].as_f64().unwrap());
    }
    assert_ne!(
        ratios[0], ratios[1],
        "different seeds must draw different profiles"
    );
}
