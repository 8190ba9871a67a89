//! Scenario files: a flat key = value text format with dotted section keys.
//!
//! ```text
//! model.name = billiard
//! model.m = 1.0
//! model.c = 0.005
//! model.wall = exp          # exp | linear | const
//! model.wall_a = 2.0
//! model.wall_b = 1.0
//! model.wall_tau = 10.0
//! init.chart = polar        # polar | cartesian
//! init.q = 0.5590, 1.1071
//! init.v = 2.8621, -3.0400
//! t_end = 6.0
//! mode = both               # full | reduced | both | classify | symcheck
//! out = out/billiard
//! seed = 42
//! numerics.rel_tol = 1e-9
//! ```
//!
//! Unknown keys are rejected with their line number. Disk models use
//! model.radius, model.k, model.e, model.alpha, model.c and, for
//! disk_moving, the wall keys; model.rolling_band switches the disk guard
//! to strict rolling admissibility.

use hybrid_mech::models::{
    build_by_name, BilliardParams, DiskParams, ModelBundle, WallMotion, MODEL_NAMES,
};
use hybrid_mech::NumericsConfig;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum ScenarioError {
    Io(std::io::Error),
    Parse { line: usize, message: String },
    Validation { field: String, message: String },
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Io(e) => write!(f, "cannot read scenario: {e}"),
            ScenarioError::Parse { line, message } => {
                write!(f, "parse error at line {line}: {message}")
            }
            ScenarioError::Validation { field, message } => {
                write!(f, "invalid scenario field '{field}': {message}")
            }
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    Reduced,
    Both,
    Classify,
    Symcheck,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "full" => Some(Mode::Full),
            "reduced" => Some(Mode::Reduced),
            "both" => Some(Mode::Both),
            "classify" => Some(Mode::Classify),
            "symcheck" => Some(Mode::Symcheck),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Reduced => "reduced",
            Mode::Both => "both",
            Mode::Classify => "classify",
            Mode::Symcheck => "symcheck",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    Cartesian,
    Polar,
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model_name: String,
    pub disk: DiskParams,
    pub billiard: BilliardParams,
    pub init_chart: Chart,
    pub init_q: Vec<f64>,
    pub init_v: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
    pub mode: Mode,
    pub out_prefix: PathBuf,
    pub seed: u64,
    pub numerics: NumericsConfig,
}

impl Scenario {
    pub fn build_model(&self) -> Result<ModelBundle, hybrid_mech::Error> {
        build_by_name(&self.model_name, &self.disk, &self.billiard)
    }
}

fn validation(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    message: format!("expected 'key = value', got '{line}'"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    message: "empty key or value".into(),
                });
            }
            if entries.insert(key.clone(), (line_no, value)).is_some() {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>, ScenarioError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<f64>().map(Some).map_err(|_| ScenarioError::Parse {
                line,
                message: format!("'{key}' is not a number: '{v}'"),
            }),
        }
    }

    fn take_u64(&mut self, key: &str) -> Result<Option<u64>, ScenarioError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<u64>().map(Some).map_err(|_| ScenarioError::Parse {
                line,
                message: format!("'{key}' is not a non-negative integer: '{v}'"),
            }),
        }
    }

    fn take_vec(&mut self, key: &str) -> Result<Option<Vec<f64>>, ScenarioError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    let part = part.trim();
                    out.push(part.parse::<f64>().map_err(|_| ScenarioError::Parse {
                        line,
                        message: format!("'{key}' has a non-numeric entry: '{part}'"),
                    })?);
                }
                Ok(Some(out))
            }
        }
    }

    fn reject_unknown(self) -> Result<(), ScenarioError> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(ScenarioError::Parse {
                line,
                message: format!("unknown key '{key}'"),
            });
        }
        Ok(())
    }
}

/// Loads and fully validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(ScenarioError::Io)?;
    parse_scenario(&text)
}

/// Parses a scenario from text; see the module docs for the format.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut raw = RawConfig::parse(text)?;

    let model_name = raw
        .take("model.name")
        .ok_or_else(|| validation("model.name", "missing"))?;
    if !MODEL_NAMES.contains(&model_name.as_str()) {
        return Err(validation(
            "model.name",
            format!(
                "unknown model '{model_name}'; registered models: {}",
                MODEL_NAMES.join(", ")
            ),
        ));
    }

    // Wall profile shared by the billiard and the moving-wall disk.
    let wall_kind = raw.take("model.wall");
    let wall_a = raw.take_f64("model.wall_a")?;
    let wall_b = raw.take_f64("model.wall_b")?;
    let wall_tau = raw.take_f64("model.wall_tau")?;
    let wall = match wall_kind.as_deref() {
        None => None,
        Some("exp") => Some(WallMotion::exponential(
            wall_a.unwrap_or(2.0),
            wall_b.unwrap_or(1.0),
            wall_tau.unwrap_or(10.0),
        )),
        Some("linear") => Some(WallMotion::linear(
            wall_a.unwrap_or(2.0),
            wall_b.unwrap_or(0.0),
        )),
        Some("const") => Some(WallMotion::constant(wall_a.unwrap_or(2.0))),
        Some(other) => {
            return Err(validation(
                "model.wall",
                format!("unknown wall profile '{other}' (exp, linear, const)"),
            ))
        }
    };

    let mut disk = DiskParams::default();
    let mut billiard = BilliardParams::default();
    if let Some(m) = raw.take_f64("model.m")? {
        disk.m = m;
        billiard.m = m;
    }
    if let Some(c) = raw.take_f64("model.c")? {
        disk.dissipation = c;
        billiard.dissipation = c;
    }
    if let Some(r) = raw.take_f64("model.radius")? {
        disk.radius = r;
    }
    if let Some(k) = raw.take_f64("model.k")? {
        disk.gyration = k;
    }
    if let Some(e) = raw.take_f64("model.e")? {
        disk.restitution = e;
    }
    if let Some(a) = raw.take_f64("model.alpha")? {
        disk.alpha = a;
    }
    if let Some(b) = raw.take_f64("model.rolling_band")? {
        disk.rolling_band = Some(b);
    }
    match model_name.as_str() {
        "billiard" => {
            if let Some(w) = wall.clone() {
                billiard.wall = w;
            }
        }
        "disk_moving" => {
            disk.wall_motion = Some(wall.clone().ok_or_else(|| {
                validation("model.wall", "disk_moving requires a wall profile")
            })?);
        }
        _ => {
            if wall.is_some() {
                return Err(validation(
                    "model.wall",
                    "wall profiles apply to billiard and disk_moving only",
                ));
            }
        }
    }

    let init_chart = match raw.take("init.chart").as_deref() {
        None | Some("cartesian") => Chart::Cartesian,
        Some("polar") => Chart::Polar,
        Some(other) => {
            return Err(validation(
                "init.chart",
                format!("unknown chart '{other}' (cartesian, polar)"),
            ))
        }
    };
    let init_q = raw
        .take_vec("init.q")?
        .ok_or_else(|| validation("init.q", "missing"))?;
    let init_v = raw
        .take_vec("init.v")?
        .ok_or_else(|| validation("init.v", "missing"))?;
    let dim = if model_name == "billiard" { 2 } else { 3 };
    if init_q.len() != dim || init_v.len() != dim {
        return Err(validation(
            "init.q",
            format!(
                "model '{model_name}' has {dim} coordinates, got q: {}, v: {}",
                init_q.len(),
                init_v.len()
            ),
        ));
    }

    let t0 = raw.take_f64("t0")?.unwrap_or(0.0);
    let t_end = raw
        .take_f64("t_end")?
        .ok_or_else(|| validation("t_end", "missing"))?;
    if !(t_end > t0) {
        return Err(validation(
            "t_end",
            format!("t_end = {t_end} must exceed t0 = {t0}"),
        ));
    }

    let mode = match raw.take("mode") {
        None => Mode::Full,
        Some(s) => Mode::parse(&s).ok_or_else(|| {
            validation(
                "mode",
                format!("unknown mode '{s}' (full, reduced, both, classify, symcheck)"),
            )
        })?,
    };

    let out_prefix = PathBuf::from(raw.take("out").unwrap_or_else(|| "out/scenario".into()));
    let seed = raw.take_u64("seed")?.unwrap_or(0);

    let mut numerics = NumericsConfig {
        seed,
        ..NumericsConfig::default()
    };
    if let Some(v) = raw.take_f64("numerics.rel_tol")? {
        numerics.rel_tol = v;
    }
    if let Some(v) = raw.take_f64("numerics.abs_tol")? {
        numerics.abs_tol = v;
    }
    if let Some(v) = raw.take_f64("numerics.event_tol")? {
        numerics.event_tol = v;
    }
    if let Some(v) = raw.take_f64("numerics.zeno_gap")? {
        numerics.zeno_gap = v;
    }
    if let Some(v) = raw.take_u64("numerics.max_impacts")? {
        numerics.max_impacts = v as usize;
    }
    if let Some(v) = raw.take_f64("numerics.fd_step")? {
        numerics.fd_step = v;
    }
    numerics
        .validate()
        .map_err(|e| validation("numerics", e.to_string()))?;

    raw.reject_unknown()?;

    let scenario = Scenario {
        model_name,
        disk,
        billiard,
        init_chart,
        init_q,
        init_v,
        t0,
        t_end,
        mode,
        out_prefix,
        seed,
        numerics,
    };
    // Surface model parameter problems at load time.
    scenario
        .build_model()
        .map_err(|e| validation("model", e.to_string()))?;
    Ok(scenario)
}
