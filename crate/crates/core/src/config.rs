//! Run configuration: TOML ingestion, validation and sweep parameter paths.
//!
//! Times are in µs. Rates are read in the config's `units` and converted to
//! rad/µs before anything is simulated.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dynamics::Method;
use crate::error::{Error, Result};
use crate::measurement::{NormalizationMode, SynodyneObjective};
use crate::network::NetworkScenario;
use crate::pipeline::SynthesisKind;
use crate::signal::{TimeGrid, TrialPulse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Units {
    /// Angular rates, used as given.
    #[default]
    #[serde(rename = "rad_per_us")]
    RadPerUs,
    /// Linear frequencies in MHz; multiplied by 2π.
    #[serde(rename = "MHz_linear")]
    MhzLinear,
}

impl Units {
    pub fn to_angular(self) -> f64 {
        match self {
            Units::RadPerUs => 1.0,
            Units::MhzLinear => 2.0 * PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseShape {
    SinePower { power: u32 },
    /// Centred Gaussian with `σ = duration / sigma_divisor`.
    Gaussian { sigma_divisor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub shape: PulseShape,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub t_start: f64,
    pub duration: f64,
    /// Samples of the pulse window grid (used for spectra of the trial pulse).
    #[serde(default = "default_window_samples")]
    pub samples: usize,
}

fn one() -> f64 {
    1.0
}

fn default_window_samples() -> usize {
    1001
}

impl PulseSpec {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }

    pub fn build(&self) -> Result<TrialPulse> {
        let window = TimeGrid::new(self.t_start, self.t_end(), self.samples)?;
        match self.shape {
            PulseShape::SinePower { power } => TrialPulse::sine_power(power, self.amplitude, window),
            PulseShape::Gaussian { sigma_divisor } => {
                TrialPulse::centered_gaussian(sigma_divisor, self.amplitude, window)
            }
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::config(format!("{path}.duration"), "must be positive"));
        }
        if !self.t_start.is_finite() {
            return Err(Error::config(format!("{path}.t_start"), "must be finite"));
        }
        if self.samples < 2 {
            return Err(Error::config(format!("{path}.samples"), "need at least 2"));
        }
        if !(self.amplitude.is_finite() && self.amplitude != 0.0) {
            return Err(Error::config(format!("{path}.amplitude"), "must be finite and nonzero"));
        }
        match self.shape {
            PulseShape::SinePower { power: 0 } => Err(Error::config(
                format!("{path}.shape.power"),
                "must be at least 1",
            )),
            PulseShape::Gaussian { sigma_divisor } if !(sigma_divisor > 0.0) => Err(
                Error::config(format!("{path}.shape.sigma_divisor"), "must be positive"),
            ),
            _ => Ok(()),
        }
    }
}

/// Extra run compared against the primary one (e.g. the uncorrected pulse).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub synthesis: SynthesisKind,
    /// Defaults to the primary pulse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    /// End of the simulated interval; defaults to the pulse end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Upper bound on the time step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Homodyne,
    Synodyne,
    #[default]
    Both,
}

impl Protocol {
    pub fn homodyne(self) -> bool {
        matches!(self, Protocol::Homodyne | Protocol::Both)
    }

    pub fn synodyne(self) -> bool {
        matches!(self, Protocol::Synodyne | Protocol::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSpec {
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub objective: SynodyneObjective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path into the scenario, e.g. `kappa` or `cavity1.chi.0`.
    pub path: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.start];
        }
        (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.start + f * (self.stop - self.start),
                    Spacing::Log => self.start * (self.stop / self.start).powf(f),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
}

fn default_normalization() -> NormalizationMode {
    NormalizationMode::MaxIntracavity { cap: 1.0 }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_name() -> String {
    "run".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub units: Units,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub synthesis: SynthesisKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compare: Vec<Variant>,
    pub scenario: NetworkScenario,
    pub pulse: PulseSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default = "default_normalization")]
    pub normalization: NormalizationMode,
    #[serde(default)]
    pub detection: DetectionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    /// Parse and validate.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].lines().count().max(1);
                    format!("line {line}")
                })
                .unwrap_or_else(|| "<document>".into());
            Error::config(at, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { path: p, message } => Error::Config {
                path: format!("{}: {p}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<serialize>", e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config is always serializable");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Scenario with rates converted to rad/µs.
    pub fn angular_scenario(&self) -> NetworkScenario {
        self.scenario.with_rates_scaled(self.units.to_angular())
    }

    pub fn validate(&self) -> Result<()> {
        self.pulse.validate("pulse")?;
        for (i, v) in self.compare.iter().enumerate() {
            if v.name.is_empty() || v.name.contains(['/', '\\']) {
                return Err(Error::config(
                    format!("compare[{i}].name"),
                    "must be a nonempty file-name-safe string",
                ));
            }
            if let Some(p) = &v.pulse {
                p.validate(&format!("compare[{i}].pulse"))?;
            }
        }
        self.scenario
            .validate()
            .map_err(|e| Error::config("scenario", e.to_string()))?;
        let cascade = matches!(self.scenario, NetworkScenario::Cascade(_));
        let kinds = std::iter::once(("synthesis".to_string(), self.synthesis)).chain(
            self.compare
                .iter()
                .enumerate()
                .map(|(i, v)| (format!("compare[{i}].synthesis"), v.synthesis)),
        );
        for (path, kind) in kinds {
            let needs_cascade = matches!(
                kind,
                SynthesisKind::CascadeCompensated | SynthesisKind::LegacyCompensated
            );
            if needs_cascade && !cascade {
                return Err(Error::config(path, "only valid for a cascade scenario"));
            }
        }
        let cap = match self.normalization {
            NormalizationMode::MaxIntracavity { cap } | NormalizationMode::InputPower { cap } => cap,
        };
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::config("normalization.cap", "must be positive"));
        }
        if let Some(dt) = self.simulation.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config("simulation.dt", "must be positive"));
            }
        }
        if let Some(t) = self.simulation.t_end {
            if !(t >= self.pulse.t_end()) {
                return Err(Error::config(
                    "simulation.t_end",
                    format!("must not end before the pulse ({})", self.pulse.t_end()),
                ));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.axes.is_empty() {
                return Err(Error::config("sweep.axes", "must list at least one axis"));
            }
            for (i, axis) in sweep.axes.iter().enumerate() {
                let at = format!("sweep.axes[{i}]");
                if axis.points == 0 {
                    return Err(Error::config(format!("{at}.points"), "must be at least 1"));
                }
                if !(axis.start.is_finite() && axis.stop.is_finite()) {
                    return Err(Error::config(at, "range must be finite"));
                }
                if axis.spacing == Spacing::Log && !(axis.start > 0.0 && axis.stop > 0.0) {
                    return Err(Error::config(at, "log spacing needs a positive range"));
                }
                set_scenario_parameter(&self.scenario, &axis.path, axis.start)
                    .map_err(|e| Error::config(format!("{at}.path"), e))?;
            }
        }
        Ok(())
    }

    /// Config for one sweep point: axis values substituted, sweep removed.
    pub fn at_point(&self, values: &[f64]) -> Result<RunConfig> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::config("sweep", "config has no sweep section"))?;
        if values.len() != sweep.axes.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for {} sweep axes",
                values.len(),
                sweep.axes.len()
            )));
        }
        let mut scenario = self.scenario.clone();
        for (axis, v) in sweep.axes.iter().zip(values) {
            scenario = set_scenario_parameter(&scenario, &axis.path, *v)
                .map_err(|e| Error::config(axis.path.clone(), e))?;
        }
        Ok(RunConfig {
            scenario,
            sweep: None,
            ..self.clone()
        })
    }
}

/// Replace the number at dotted `path` (array indices as path segments).
pub fn set_scenario_parameter(
    scenario: &NetworkScenario,
    path: &str,
    value: f64,
) -> std::result::Result<NetworkScenario, String> {
    let mut root = serde_json::to_value(scenario).map_err(|e| e.to_string())?;
    let mut node = &mut root;
    for segment in path.split('.') {
        node = match node {
            Value::Object(map) if segment != "topology" => map
                .get_mut(segment)
                .ok_or_else(|| format!("no field `{segment}` in `{path}`"))?,
            Value::Array(items) => {
                let i: usize = segment
                    .parse()
                    .map_err(|_| format!("`{segment}` is not an index in `{path}`"))?;
                items
                    .get_mut(i)
                    .ok_or_else(|| format!("index {i} out of range in `{path}`"))?
            }
            _ => return Err(format!("`{path}` does not name a numeric parameter")),
        };
    }
    if !node.is_number() {
        return Err(format!("`{path}` does not name a numeric parameter"));
    }
    *node = serde_json::Number::from_f64(value)
        .map(Value::Number)
        .ok_or_else(|| format!("value {value} is not finite"))?;
    serde_json::from_value(root).map_err(|e| e.to_string())
}
