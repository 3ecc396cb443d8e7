//! Run configuration: defaults, the flat `key = value` file format, and the
//! canonical echo that every artifact embeds.
//!
//! The file format is deliberately minimal — one dotted key per line, `#`
//! comments, no sections — so that a configuration can be concatenated into
//! a CSV header or a JSON object without translation. Parsing is strict:
//! unknown keys, duplicate keys, and files with no settings at all are
//! errors, because a silently ignored typo in an experiment configuration
//! invalidates the run it was supposed to describe.

use std::fmt;
use std::path::PathBuf;

use hartmann_core::equilibrium::hartmann_psi_of_y;

use crate::CliError;

/// Which marching route drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// von-Mises marching of `w = u^2`.
    VmW,
    /// von-Mises marching of the perturbation `phi = w - wbar`.
    VmPhi,
    /// Physical-variable marching of the regularized system at the first
    /// ladder level.
    EpsPhysical,
    /// The full epsilon ladder.
    Ladder,
}

impl SolverKind {
    fn parse(value: &str) -> Result<Self, String> {
        match value {
            "vm_w" => Ok(Self::VmW),
            "vm_phi" => Ok(Self::VmPhi),
            "eps_physical" => Ok(Self::EpsPhysical),
            "ladder" => Ok(Self::Ladder),
            other => Err(format!(
                "unknown solver `{other}` (expected vm_w, vm_phi, eps_physical, or ladder)"
            )),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::VmW => "vm_w",
            Self::VmPhi => "vm_phi",
            Self::EpsPhysical => "eps_physical",
            Self::Ladder => "ladder",
        }
    }
}

/// Initial-data family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Hartmann,
    PerturbedQuartic,
    PerturbedQuadratic,
    CustomSamples,
}

impl Family {
    fn parse(value: &str) -> Result<Self, String> {
        match value {
            "hartmann" => Ok(Self::Hartmann),
            "perturbed_quartic" => Ok(Self::PerturbedQuartic),
            "perturbed_quadratic" => Ok(Self::PerturbedQuadratic),
            "custom_samples" => Ok(Self::CustomSamples),
            other => Err(format!(
                "unknown family `{other}` (expected hartmann, perturbed_quartic, \
                 perturbed_quadratic, or custom_samples)"
            )),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Hartmann => "hartmann",
            Self::PerturbedQuartic => "perturbed_quartic",
            Self::PerturbedQuadratic => "perturbed_quadratic",
            Self::CustomSamples => "custom_samples",
        }
    }
}

/// Which artifact representations to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formats {
    Csv,
    Json,
    Both,
}

impl Formats {
    pub fn parse(value: &str) -> Result<Self, String> {
        match value {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "both" => Ok(Self::Both),
            other => Err(format!(
                "unknown format `{other}` (expected csv, json, or both)"
            )),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Both => "both",
        }
    }

    /// Whether tabular CSV artifacts should be written.
    pub fn wants_csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }

    /// Whether JSON artifacts should be written.
    pub fn wants_json(self) -> bool {
        matches!(self, Self::Json | Self::Both)
    }
}

/// Complete effective configuration of a run.
///
/// Every field has a default, so an absent configuration file is a valid
/// (if boring) experiment; the echo embedded in artifacts always shows the
/// resolved values, never the raw file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub solver: SolverKind,
    /// Domain height of the physical grid.
    pub y_max: f64,
    /// Length of the von-Mises grid; `None` resolves to the equilibrium
    /// streamfunction budget `psi_bar(y_max)`.
    pub psi_max: Option<f64>,
    /// Node count of both grids.
    pub grid_count: usize,
    /// Grading exponent (1 = uniform, 2 = quadratic wall clustering).
    pub grading_exponent: f64,
    pub dx: f64,
    pub x_end: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub family: Family,
    pub amplitude: f64,
    /// Sample file for [`Family::CustomSamples`].
    pub custom_path: Option<PathBuf>,
    /// Strictly decreasing regularization levels.
    pub eps_ladder: Vec<f64>,
    /// Extra weight power for the supplementary weighted norm in summaries.
    pub weight_power: u32,
    /// Keep every k-th station in the records table (the final station is
    /// always kept).
    pub record_every: usize,
    /// Smallness threshold the oscillation functional is certified against.
    pub eta0: f64,
    /// Wall/bulk split height for the uniform-bound certificate.
    pub delta0: f64,
    /// Number of random draws in the Hardy suite.
    pub hardy_draws: usize,
    /// Seed of the Hardy suite.
    pub hardy_seed: u64,
    pub directory: PathBuf,
    pub formats: Formats,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::VmW,
            // e^{-15} = 3.1e-7: the truncated tail is below every tolerance
            // used by the laboratory's gates.
            y_max: 15.0,
            psi_max: None,
            grid_count: 2001,
            grading_exponent: 2.0,
            dx: 0.01,
            x_end: 2.0,
            picard_tol: 1e-10,
            picard_max: 50,
            family: Family::Hartmann,
            amplitude: 0.05,
            custom_path: None,
            eps_ladder: vec![0.1, 0.05, 0.025],
            weight_power: 0,
            record_every: 1,
            // A quarter keeps the certified oscillation well inside the
            // contraction regime of the ratio functionals.
            eta0: 0.25,
            delta0: 0.5,
            hardy_draws: 100,
            hardy_seed: 42,
            directory: PathBuf::from("out"),
            formats: Formats::Both,
        }
    }
}

impl RunConfig {
    /// Parses the flat `key = value` text, starting from the defaults.
    ///
    /// A file with no assignments at all is rejected: it is almost always a
    /// wrong `--config` path or an accidentally truncated file.
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        let mut assignments = 0_usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
            seen.push(key.to_string());
            cfg.apply(key, value)
                .map_err(|msg| CliError::Config(format!("line {}: {msg}", lineno + 1)))?;
            assignments += 1;
        }
        if assignments == 0 {
            return Err(CliError::Config(
                "configuration contains no settings".into(),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "solver" => self.solver = SolverKind::parse(value)?,
            "domain.y_max" => self.y_max = parse_f64(key, value)?,
            "domain.psi_max" => self.psi_max = Some(parse_f64(key, value)?),
            "grid.count" => self.grid_count = parse_usize(key, value)?,
            "grid.grading_exponent" => self.grading_exponent = parse_f64(key, value)?,
            "march.dx" => self.dx = parse_f64(key, value)?,
            "march.x_end" => self.x_end = parse_f64(key, value)?,
            "march.picard_tol" => self.picard_tol = parse_f64(key, value)?,
            "march.picard_max" => self.picard_max = parse_usize(key, value)?,
            "initial_data.family" => self.family = Family::parse(value)?,
            "initial_data.amplitude" => self.amplitude = parse_f64(key, value)?,
            "initial_data.custom_path" => self.custom_path = Some(PathBuf::from(value)),
            "eps_ladder" => self.eps_ladder = parse_f64_list(key, value)?,
            "diagnostics.weight_power" => {
                self.weight_power = parse_usize(key, value)? as u32;
            }
            "diagnostics.record_every" => self.record_every = parse_usize(key, value)?,
            "diagnostics.eta0" => self.eta0 = parse_f64(key, value)?,
            "diagnostics.delta0" => self.delta0 = parse_f64(key, value)?,
            "diagnostics.hardy_draws" => self.hardy_draws = parse_usize(key, value)?,
            "diagnostics.hardy_seed" => {
                self.hardy_seed = value
                    .parse::<u64>()
                    .map_err(|_| format!("{key}: expected an unsigned integer, got `{value}`"))?;
            }
            "output.directory" => self.directory = PathBuf::from(value),
            "output.formats" => self.formats = Formats::parse(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Cross-field validation; called after parsing and again by commands
    /// that mutate the config from CLI flags.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if !(self.y_max.is_finite() && self.y_max > 0.0) {
            return fail(format!("domain.y_max must be positive, got {}", self.y_max));
        }
        if let Some(psi_max) = self.psi_max {
            if !(psi_max.is_finite() && psi_max > 0.0) {
                return fail(format!("domain.psi_max must be positive, got {psi_max}"));
            }
        }
        if self.grid_count < 8 {
            return fail(format!("grid.count must be at least 8, got {}", self.grid_count));
        }
        if !(self.grading_exponent.is_finite() && self.grading_exponent >= 1.0) {
            return fail(format!(
                "grid.grading_exponent must be >= 1, got {}",
                self.grading_exponent
            ));
        }
        if !(self.dx.is_finite() && self.dx > 0.0) {
            return fail(format!("march.dx must be positive, got {}", self.dx));
        }
        if !(self.x_end.is_finite() && self.x_end > 0.0) {
            return fail(format!("march.x_end must be positive, got {}", self.x_end));
        }
        if !(self.picard_tol.is_finite() && self.picard_tol > 0.0) {
            return fail(format!(
                "march.picard_tol must be positive, got {}",
                self.picard_tol
            ));
        }
        if self.picard_max == 0 {
            return fail("march.picard_max must be at least 1".into());
        }
        if !self.amplitude.is_finite() {
            return fail(format!(
                "initial_data.amplitude must be finite, got {}",
                self.amplitude
            ));
        }
        if self.family == Family::CustomSamples && self.custom_path.is_none() {
            return fail("initial_data.custom_path is required for custom_samples".into());
        }
        if self.eps_ladder.is_empty() {
            return fail("eps_ladder must contain at least one level".into());
        }
        for pair in self.eps_ladder.windows(2) {
            if !(pair[1] < pair[0]) {
                return fail(format!(
                    "eps_ladder must be strictly decreasing, got {} then {}",
                    pair[0], pair[1]
                ));
            }
        }
        let last = *self.eps_ladder.last().expect("nonempty ladder");
        if !(last.is_finite() && last > 0.0) {
            return fail(format!("eps_ladder levels must be positive, got {last}"));
        }
        if self.record_every == 0 {
            return fail("diagnostics.record_every must be at least 1".into());
        }
        if !(self.eta0 > 0.0 && self.eta0 < 1.0) {
            return fail(format!(
                "diagnostics.eta0 must lie in (0, 1), got {}",
                self.eta0
            ));
        }
        if !(self.delta0 > 0.0 && self.delta0 < self.y_max) {
            return fail(format!(
                "diagnostics.delta0 must lie in (0, y_max), got {}",
                self.delta0
            ));
        }
        if self.hardy_draws == 0 {
            return fail("diagnostics.hardy_draws must be at least 1".into());
        }
        Ok(())
    }

    /// The von-Mises grid length: configured, or the equilibrium budget.
    pub fn resolved_psi_max(&self) -> f64 {
        self.psi_max
            .unwrap_or_else(|| hartmann_psi_of_y(self.y_max).expect("y_max validated positive"))
    }

    /// Canonical `(key, value)` echo of the effective configuration, sorted
    /// by key. CSV artifacts embed these as `# key = value` comment lines;
    /// JSON artifacts embed them as an object.
    pub fn echo_entries(&self) -> Vec<(String, EchoValue)> {
        let mut entries: Vec<(String, EchoValue)> = vec![
            ("diagnostics.delta0".into(), EchoValue::Float(self.delta0)),
            ("diagnostics.eta0".into(), EchoValue::Float(self.eta0)),
            (
                "diagnostics.hardy_draws".into(),
                EchoValue::Integer(self.hardy_draws as u64),
            ),
            (
                "diagnostics.hardy_seed".into(),
                EchoValue::Integer(self.hardy_seed),
            ),
            (
                "diagnostics.record_every".into(),
                EchoValue::Integer(self.record_every as u64),
            ),
            (
                "diagnostics.weight_power".into(),
                EchoValue::Integer(u64::from(self.weight_power)),
            ),
            (
                "domain.psi_max".into(),
                EchoValue::Float(self.resolved_psi_max()),
            ),
            ("domain.y_max".into(), EchoValue::Float(self.y_max)),
            (
                "eps_ladder".into(),
                EchoValue::FloatList(self.eps_ladder.clone()),
            ),
            (
                "grid.count".into(),
                EchoValue::Integer(self.grid_count as u64),
            ),
            (
                "grid.grading_exponent".into(),
                EchoValue::Float(self.grading_exponent),
            ),
            (
                "initial_data.amplitude".into(),
                EchoValue::Float(self.amplitude),
            ),
            (
                "initial_data.family".into(),
                EchoValue::Text(self.family.as_str().into()),
            ),
            ("march.dx".into(), EchoValue::Float(self.dx)),
            (
                "march.picard_max".into(),
                EchoValue::Integer(self.picard_max as u64),
            ),
            ("march.picard_tol".into(), EchoValue::Float(self.picard_tol)),
            ("march.x_end".into(), EchoValue::Float(self.x_end)),
            (
                "output.directory".into(),
                EchoValue::Text(self.directory.display().to_string()),
            ),
            (
                "output.formats".into(),
                EchoValue::Text(self.formats.as_str().into()),
            ),
            ("solver".into(), EchoValue::Text(self.solver.as_str().into())),
        ];
        if let Some(path) = &self.custom_path {
            entries.push((
                "initial_data.custom_path".into(),
                EchoValue::Text(path.display().to_string()),
            ));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        entries
    }
}

/// A typed configuration value for artifact embedding: rendered as text in
/// CSV comments and as a native value in JSON.
#[derive(Debug, Clone)]
pub enum EchoValue {
    Float(f64),
    Integer(u64),
    Text(String),
    FloatList(Vec<f64>),
}

impl fmt::Display for EchoValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Float(v) => write!(f, "{v}"),
            Self::Integer(v) => write!(f, "{v}"),
            Self::Text(v) => write!(f, "{v}"),
            Self::FloatList(vs) => {
                write!(f, "[")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
        }
    }
}

impl EchoValue {
    /// JSON form of the value (numbers stay numbers).
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Self::Float(v) => serde_json::json!(v),
            Self::Integer(v) => serde_json::json!(v),
            Self::Text(v) => serde_json::json!(v),
            Self::FloatList(vs) => serde_json::json!(vs),
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("{key}: expected a number, got `{value}`"))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, String> {
    value
        .parse::<usize>()
        .map_err(|_| format!("{key}: expected a nonnegative integer, got `{value}`"))
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, String> {
    let inner = value
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .trim();
    if inner.is_empty() {
        return Err(format!("{key}: expected a list of numbers, got `{value}`"));
    }
    inner
        .split(',')
        .map(|piece| parse_f64(key, piece.trim()))
        .collect()
}
