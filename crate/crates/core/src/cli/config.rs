//! Run configuration: built-in profiles, deep merge of user overrides, and
//! sweep axes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::dynamics::log_grid;
use crate::protocols::{InitialState, ScenarioConfig};

/// Storage-time grids default to this many points per decade.
pub const DEFAULT_PER_DECADE: usize = 25;

pub const PROFILES: &[(&str, &str)] = &[
    ("default", include_str!("../../profiles/default.toml")),
    ("single_timeline", include_str!("../../profiles/single_timeline.toml")),
    ("superposition_storage", include_str!("../../profiles/superposition_storage.toml")),
    ("entangled_storage", include_str!("../../profiles/entangled_storage.toml")),
    ("fock_wigner", include_str!("../../profiles/fock_wigner.toml")),
    ("winding_scan", include_str!("../../profiles/winding_scan.toml")),
    ("oam_index_scan", include_str!("../../profiles/oam_index_scan.toml")),
    ("switch_off_scan", include_str!("../../profiles/switch_off_scan.toml")),
];

pub fn profile_text(name: &str) -> Option<&'static str> {
    PROFILES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Values along one sweep dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Log {
        log_start: f64,
        log_end: f64,
        per_decade: Option<usize>,
    },
    Linear {
        start: f64,
        end: f64,
        points: usize,
    },
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match self {
            Axis::Values(v) if !v.is_empty() => Ok(v.clone()),
            Axis::Values(_) => Err(CliError::Config("empty sweep axis".into())),
            Axis::Log {
                log_start,
                log_end,
                per_decade,
            } => {
                if !(*log_start > 0.0) || !(log_end > log_start) {
                    return Err(CliError::Config(format!(
                        "log axis needs 0 < start < end, got [{log_start}, {log_end}]"
                    )));
                }
                Ok(log_grid(*log_start, *log_end, per_decade.unwrap_or(DEFAULT_PER_DECADE)))
            }
            Axis::Linear { start, end, points } => {
                if *points < 2 || !(end > start) {
                    return Err(CliError::Config(format!(
                        "linear axis needs start < end and >= 2 points, got [{start}, {end}] x {points}"
                    )));
                }
                Ok((0..*points)
                    .map(|i| start + (end - start) * i as f64 / (*points - 1) as f64)
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedState {
    pub name: String,
    pub state: InitialState,
}

/// Cartesian product of the listed axes; unlisted axes keep the scenario
/// value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub initial_state: Option<Vec<NamedState>>,
    pub interactions_enabled: Option<Vec<bool>>,
    pub winding_number: Option<Vec<i64>>,
    pub oam_index: Option<Vec<i64>>,
    pub coupling_ratio: Option<Axis>,
    pub switch_off_shift: Option<Axis>,
    pub storage_time: Option<Axis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AxisValue {
    Number(f64),
    Integer(i64),
    Flag(bool),
    Label(String),
}

impl AxisValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AxisValue::Number(v) => Some(*v),
            AxisValue::Integer(v) => Some(*v as f64),
            AxisValue::Flag(b) => Some(*b as u8 as f64),
            AxisValue::Label(_) => None,
        }
    }
}

/// One run of the sweep: the axis coordinates and the resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub coordinates: Vec<(String, AxisValue)>,
    pub scenario: ScenarioConfig,
}

impl SweepSpec {
    fn axes(&self) -> Result<Vec<(String, Vec<AxisValue>)>, CliError> {
        let mut out: Vec<(String, Vec<AxisValue>)> = Vec::new();
        if let Some(states) = &self.initial_state {
            out.push((
                "initial_state".into(),
                states.iter().map(|s| AxisValue::Label(s.name.clone())).collect(),
            ));
        }
        if let Some(v) = &self.interactions_enabled {
            out.push(("interactions_enabled".into(), v.iter().map(|b| AxisValue::Flag(*b)).collect()));
        }
        if let Some(v) = &self.winding_number {
            out.push(("winding_number".into(), v.iter().map(|x| AxisValue::Integer(*x)).collect()));
        }
        if let Some(v) = &self.oam_index {
            out.push(("oam_index".into(), v.iter().map(|x| AxisValue::Integer(*x)).collect()));
        }
        let numeric = [
            ("coupling_ratio", &self.coupling_ratio),
            ("switch_off_shift", &self.switch_off_shift),
            ("storage_time", &self.storage_time),
        ];
        for (name, axis) in numeric {
            if let Some(a) = axis {
                out.push((name.into(), a.values()?.into_iter().map(AxisValue::Number).collect()));
            }
        }
        if out.iter().any(|(_, v)| v.is_empty()) {
            return Err(CliError::Config("empty sweep axis".into()));
        }
        Ok(out)
    }

    pub fn axis_names(&self) -> Result<Vec<String>, CliError> {
        Ok(self.axes()?.into_iter().map(|(n, _)| n).collect())
    }

    /// Expands the grid; the last axis varies fastest.
    pub fn points(&self, base: &ScenarioConfig) -> Result<Vec<SweepPoint>, CliError> {
        let axes = self.axes()?;
        let total: usize = axes.iter().map(|(_, v)| v.len()).product();
        let mut points = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut coords = vec![];
            for (name, values) in axes.iter().rev() {
                coords.push((name.clone(), values[rem % values.len()].clone()));
                rem /= values.len();
            }
            coords.reverse();
            let mut scenario = base.clone();
            for (name, value) in &coords {
                self.apply(&mut scenario, name, value)?;
            }
            scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
            points.push(SweepPoint {
                coordinates: coords,
                scenario,
            });
        }
        Ok(points)
    }

    fn apply(&self, s: &mut ScenarioConfig, name: &str, value: &AxisValue) -> Result<(), CliError> {
        match (name, value) {
            ("initial_state", AxisValue::Label(label)) => {
                let states = self.initial_state.as_deref().unwrap_or_default();
                let found = states.iter().find(|n| &n.name == label);
                s.initial_state = found.expect("label drawn from the list").state.clone();
            }
            ("interactions_enabled", AxisValue::Flag(b)) => s.interactions_enabled = *b,
            ("winding_number", AxisValue::Integer(v)) => s.physical.winding_number = *v,
            ("oam_index", AxisValue::Integer(v)) => s.physical.oam_index = *v,
            ("coupling_ratio", AxisValue::Number(v)) => s.coupling_ratio = Some(*v),
            ("switch_off_shift", AxisValue::Number(v)) => s.switch_off_shift = *v,
            ("storage_time", AxisValue::Number(v)) => s.storage_time = *v,
            _ => return Err(CliError::Config(format!("cannot sweep `{name}`"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    /// Sweep axis on the horizontal axis.
    pub x: String,
    /// Result columns to draw.
    pub y: Vec<String>,
    /// Sweep axis that splits the data into separate curves.
    #[serde(default)]
    pub series: Option<String>,
    #[serde(default)]
    pub log_x: bool,
    #[serde(default)]
    pub title: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Per-point observable time series and a timeline plot.
    pub trajectories: bool,
    /// Initial and retrieved density matrices per point.
    pub density_matrices: bool,
    pub plot: Option<PlotSpec>,
}

/// Fully resolved configuration of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: String,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>, CliError> {
        self.sweep.points(&self.scenario)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.scenario
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let names = self.sweep.axis_names()?;
        if let Some(plot) = &self.output.plot {
            if !names.contains(&plot.x) {
                return Err(CliError::Config(format!("plot axis `{}` is not swept", plot.x)));
            }
            if let Some(series) = &plot.series {
                if !names.contains(series) {
                    return Err(CliError::Config(format!("plot series `{series}` is not swept")));
                }
            }
        }
        self.points().map(|_| ())
    }
}

/// Recursively overlays `over` onto `base`; tables merge, everything else
/// replaces.
pub fn deep_merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(existing) => deep_merge(existing, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse(text: &str, origin: &str) -> Result<toml::Value, CliError> {
    text.parse::<toml::Table>()
        .map(toml::Value::Table)
        .map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

/// Resolves `text` over its base profile. `profile_override` wins over a
/// `profile` key in the text.
pub fn load_config_str(text: &str, profile_override: Option<&str>) -> Result<RunConfig, CliError> {
    let user = parse(text, "config")?;
    let named = user.get("profile").and_then(|v| v.as_str()).map(str::to_owned);
    let name = profile_override
        .map(str::to_owned)
        .or(named)
        .unwrap_or_else(|| "default".into());
    let base_text = profile_text(&name)
        .ok_or_else(|| CliError::Config(format!("unknown profile `{name}`")))?;
    let mut merged = parse(base_text, &name)?;
    deep_merge(&mut merged, user);
    if let toml::Value::Table(t) = &mut merged {
        t.insert("profile".into(), toml::Value::String(name));
    }
    let config: RunConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path, profile_override: Option<&str>) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    load_config_str(&text, profile_override)
}
