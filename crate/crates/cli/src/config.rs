//! Experiment configuration: a flat TOML table, optionally patched with
//! `key=value` overrides from the command line.

use std::fmt;

use serde::{Deserialize, Serialize};
use wgent_core::{Case, SimParams};

/// Named experiments understood by `wgent run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    IntensityProfile,
    IntensityVsZ,
    EntangleMap,
    StationarySweep,
    SurvivalDistance,
    NoiseEvolution,
    OracleCheck,
    KernelCheck,
    ThresholdScan,
    PurityCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::IntensityProfile,
        Experiment::IntensityVsZ,
        Experiment::EntangleMap,
        Experiment::StationarySweep,
        Experiment::SurvivalDistance,
        Experiment::NoiseEvolution,
        Experiment::OracleCheck,
        Experiment::KernelCheck,
        Experiment::ThresholdScan,
        Experiment::PurityCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::IntensityProfile => "intensity-profile",
            Experiment::IntensityVsZ => "intensity-vs-z",
            Experiment::EntangleMap => "entangle-map",
            Experiment::StationarySweep => "stationary-sweep",
            Experiment::SurvivalDistance => "survival-distance",
            Experiment::NoiseEvolution => "noise-evolution",
            Experiment::OracleCheck => "oracle-check",
            Experiment::KernelCheck => "kernel-check",
            Experiment::ThresholdScan => "threshold-scan",
            Experiment::PurityCheck => "purity-check",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Experiment::IntensityProfile => "photon number in every guide at each of z_points, per g in g_grid",
            Experiment::IntensityVsZ => "central-guide photon number every sample_every up to z_max, per g in g_grid",
            Experiment::EntangleMap => "pairwise log-negativity map at each of z_points",
            Experiment::StationarySweep => "plateau value of E_N(pair) for each g in g_grid (gamma = 0)",
            Experiment::SurvivalDistance => "distance at which E_N(pair) falls below eps, over gamma_list x g_grid",
            Experiment::NoiseEvolution => "E_N(pair) and central photon number versus z, maps at z_points",
            Experiment::OracleCheck => "Monte-Carlo ensemble versus the moment equations at z_max",
            Experiment::KernelCheck => "unpumped lattice against J_0 and the memory-kernel identity (g forced to 0)",
            Experiment::ThresholdScan => "threshold bracket in g for the lattice and the reduced model",
            Experiment::PurityCheck => "largest deviation of the global symplectic spectrum from 1/2 versus z",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseSelection {
    Degenerate,
    General,
    Both,
}

impl CaseSelection {
    pub fn cases(self) -> Vec<Case> {
        match self {
            CaseSelection::Degenerate => vec![Case::Degenerate],
            CaseSelection::General => vec![Case::General],
            CaseSelection::Both => vec![Case::Degenerate, Case::General],
        }
    }
}

/// Every configurable key with its default. Serialising a loaded config
/// gives the fully resolved form written next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub experiment: Option<Experiment>,
    pub n_sites: usize,
    pub c_s: f64,
    pub g: f64,
    pub gamma: f64,
    pub dz: f64,
    pub case: CaseSelection,
    /// Pump values swept by sweep experiments; empty means `[g]`.
    pub g_grid: Vec<f64>,
    /// Noise rates swept by noise experiments; empty means `[gamma]`.
    pub gamma_list: Vec<f64>,
    /// Sample positions; empty means `[z_max]`.
    pub z_points: Vec<f64>,
    pub z_max: f64,
    pub sample_every: f64,
    pub pair: [i64; 2],
    pub paths: usize,
    pub seed: u64,
    pub eps: f64,
    pub plateau_window: f64,
    pub plateau_rel_tol: f64,
    pub confirm_window: f64,
    pub g_below: f64,
    pub g_above: f64,
    pub resolution: f64,
    pub out_dir: String,
    pub json: bool,
    /// Seconds between progress lines on stderr.
    pub progress_interval: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            experiment: None,
            n_sites: 257,
            c_s: 1.0,
            g: 1.0,
            gamma: 0.0,
            dz: 0.01,
            case: CaseSelection::Degenerate,
            g_grid: Vec::new(),
            gamma_list: Vec::new(),
            z_points: Vec::new(),
            z_max: 10.0,
            sample_every: 0.1,
            pair: [1, -1],
            paths: 10_000,
            seed: 0,
            eps: 1e-4,
            plateau_window: 1.0,
            plateau_rel_tol: 1e-4,
            confirm_window: 10.0,
            g_below: 1.5,
            g_above: 2.5,
            resolution: 0.05,
            out_dir: "out".into(),
            json: false,
            progress_interval: 2.0,
        }
    }
}

impl Config {
    pub fn experiment(&self) -> Experiment {
        self.experiment.expect("validated configs name an experiment")
    }

    pub fn g_values(&self) -> Vec<f64> {
        if self.g_grid.is_empty() {
            vec![self.g]
        } else {
            self.g_grid.clone()
        }
    }

    pub fn gamma_values(&self) -> Vec<f64> {
        if self.gamma_list.is_empty() {
            vec![self.gamma]
        } else {
            self.gamma_list.clone()
        }
    }

    /// Sorted sample positions.
    pub fn z_values(&self) -> Vec<f64> {
        let mut z = if self.z_points.is_empty() { vec![self.z_max] } else { self.z_points.clone() };
        z.sort_by(f64::total_cmp);
        z
    }

    pub fn params(&self, case: Case, g: f64, gamma: f64) -> SimParams {
        SimParams { n_sites: self.n_sites, c_s: self.c_s, g, gamma, dz: self.dz, case }
    }
}

/// Where a configuration problem was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    File { name: String, line: usize, column: usize },
    Override(String),
    Unknown,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::File { name, line, column } => write!(f, "{name}:{line}:{column}"),
            Location::Override(s) => write!(f, "--set {s}"),
            Location::Unknown => f.write_str("config"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub location: Location,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn toml_error(name: &str, text: &str, err: &toml::de::Error) -> ConfigError {
    let location = match err.span() {
        Some(span) => {
            let (line, column) = line_column(text, span.start);
            Location::File { name: name.to_string(), line, column }
        }
        None => Location::Unknown,
    };
    ConfigError { location, message: err.message().trim().to_string() }
}

// Line of the first `key = ...` assignment in the file.
fn key_location(name: &str, text: &str, key: &str) -> Option<Location> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                let (line, column) = line_column(text, offset + (line.len() - trimmed.len()));
                return Some(Location::File { name: name.to_string(), line, column });
            }
        }
        offset += line.len();
    }
    None
}

/// Parses the configuration text alone.
pub fn parse_config(name: &str, text: &str) -> Result<Config, ConfigError> {
    toml::from_str(text).map_err(|e| toml_error(name, text, &e))
}

/// Splits a `key=value` override. The value is read as a TOML value and
/// falls back to a bare string.
pub fn parse_override(item: &str) -> Result<(String, toml::Value), ConfigError> {
    let bad = |message: String| ConfigError { location: Location::Override(item.to_string()), message };
    let (key, raw) = item.split_once('=').ok_or_else(|| bad("expected key=value".into()))?;
    let key = key.trim();
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(bad(format!("invalid key `{key}`")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) if t.len() == 1 => t.remove("v").expect("single key"),
        _ => toml::Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

/// Loads `text`, applies `overrides` in order (later ones win) and
/// validates the result.
pub fn load(name: &str, text: &str, overrides: &[String]) -> Result<Config, ConfigError> {
    let base = parse_config(name, text)?;
    let mut overridden: Vec<(String, String)> = Vec::new();
    let config = if overrides.is_empty() {
        base
    } else {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(name, text, &e))?;
        for item in overrides {
            let (key, value) = parse_override(item)?;
            let single: toml::Table = [(key.clone(), value.clone())].into_iter().collect();
            toml::Value::Table(single).try_into::<Config>().map_err(|e| ConfigError {
                location: Location::Override(item.clone()),
                message: e.message().trim().to_string(),
            })?;
            table.insert(key.clone(), value);
            overridden.retain(|(k, _)| *k != key);
            overridden.push((key, item.clone()));
        }
        toml::Value::Table(table)
            .try_into::<Config>()
            .map_err(|e| ConfigError { location: Location::Unknown, message: e.message().trim().to_string() })?
    };
    validate(&config).map_err(|(key, message)| {
        let location = overridden
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, item)| Location::Override(item.clone()))
            .or_else(|| key_location(name, text, key))
            .unwrap_or(Location::Unknown);
        ConfigError { location, message }
    })?;
    Ok(config)
}

type Issue = (&'static str, String);

fn check(ok: bool, key: &'static str, message: impl FnOnce() -> String) -> Result<(), Issue> {
    if ok {
        Ok(())
    } else {
        Err((key, message()))
    }
}

/// Range checks; the error names the offending key.
pub fn validate(c: &Config) -> Result<(), Issue> {
    let experiment = c.experiment.ok_or(("experiment", "missing required key `experiment`".to_string()))?;
    let base = c.params(Case::Degenerate, c.g, c.gamma);
    base.validate().map_err(|e| {
        let key = if c.n_sites.is_multiple_of(2) || c.n_sites < 3 {
            "n_sites"
        } else if !(c.c_s.is_finite() && c.c_s >= 0.0) {
            "c_s"
        } else if !(c.g.is_finite() && c.g >= 0.0) {
            "g"
        } else if !(c.gamma.is_finite() && c.gamma >= 0.0) {
            "gamma"
        } else {
            "dz"
        };
        (key, e.to_string())
    })?;
    for &g in &c.g_grid {
        check(g.is_finite() && g >= 0.0, "g_grid", || format!("pump values must be finite and >= 0, got {g}"))?;
    }
    for &gamma in &c.gamma_list {
        check(gamma.is_finite() && gamma >= 0.0, "gamma_list", || {
            format!("noise rates must be finite and >= 0, got {gamma}")
        })?;
    }
    for &z in &c.z_points {
        check(z.is_finite() && z >= 0.0, "z_points", || format!("positions must be finite and >= 0, got {z}"))?;
    }
    check(c.z_max.is_finite() && c.z_max > 0.0, "z_max", || format!("must be finite and > 0, got {}", c.z_max))?;
    check(c.sample_every.is_finite() && c.sample_every > 0.0, "sample_every", || {
        format!("must be finite and > 0, got {}", c.sample_every)
    })?;
    let half = (c.n_sites / 2) as i64;
    check(c.pair.iter().all(|s| s.abs() <= half), "pair", || {
        format!("sites must lie in [-{half}, {half}], got {:?}", c.pair)
    })?;
    check(c.pair[0] != c.pair[1] || c.case == CaseSelection::General, "pair", || {
        "a degenerate pair needs two distinct guides".to_string()
    })?;
    check(c.eps.is_finite() && c.eps > 0.0, "eps", || format!("must be finite and > 0, got {}", c.eps))?;
    check(c.plateau_window.is_finite() && c.plateau_window > 0.0, "plateau_window", || {
        format!("must be finite and > 0, got {}", c.plateau_window)
    })?;
    check(c.plateau_rel_tol.is_finite() && c.plateau_rel_tol > 0.0, "plateau_rel_tol", || {
        format!("must be finite and > 0, got {}", c.plateau_rel_tol)
    })?;
    check(c.confirm_window.is_finite() && c.confirm_window >= 0.0, "confirm_window", || {
        format!("must be finite and >= 0, got {}", c.confirm_window)
    })?;
    check(c.progress_interval.is_finite() && c.progress_interval >= 0.0, "progress_interval", || {
        format!("must be finite and >= 0, got {}", c.progress_interval)
    })?;
    check(!c.out_dir.is_empty(), "out_dir", || "must not be empty".to_string())?;

    match experiment {
        Experiment::OracleCheck => {
            check(c.n_sites <= wgent_core::oracle::MAX_ORACLE_SITES, "n_sites", || {
                format!("oracle-check supports at most {} sites", wgent_core::oracle::MAX_ORACLE_SITES)
            })?;
            check(c.paths >= 2, "paths", || format!("an ensemble needs at least 2 paths, got {}", c.paths))?;
        }
        Experiment::PurityCheck => {
            check(c.n_sites <= 65, "n_sites", || "purity-check supports at most 65 sites".to_string())?;
        }
        Experiment::ThresholdScan => {
            check(c.g_below.is_finite() && c.g_below >= 0.0 && c.g_below < c.g_above, "g_below", || {
                format!("need 0 <= g_below < g_above, got {} and {}", c.g_below, c.g_above)
            })?;
            check(c.g_above.is_finite(), "g_above", || format!("must be finite, got {}", c.g_above))?;
            check(c.resolution.is_finite() && c.resolution > 0.0, "resolution", || {
                format!("must be finite and > 0, got {}", c.resolution)
            })?;
            check(c.c_s > 0.0, "c_s", || "threshold-scan needs c_s > 0".to_string())?;
        }
        Experiment::KernelCheck => {
            check(c.c_s > 0.0, "c_s", || "kernel-check needs c_s > 0".to_string())?;
        }
        Experiment::StationarySweep => {
            check(c.gamma == 0.0, "gamma", || "stationary-sweep needs a coherent pump (gamma = 0)".to_string())?;
        }
        _ => {}
    }
    for g in c.g_values() {
        for gamma in c.gamma_values() {
            c.params(Case::Degenerate, g, gamma).validate().map_err(|e| ("g_grid", e.to_string()))?;
        }
    }
    Ok(())
}
