//! Experiment configuration: JSON with four sections, every field optional
//! except the master seed.
//!
//! ```json
//! {
//!   "spectrum":   {"dimension": 2, "K": 8, "sigma0": 1.0, "decay_p": 14.0,
//!                  "projection": "incompressible", "gamma_K0": 1.0,
//!                  "gamma_exp": 2.0, "m": 3, "alpha": 0.5},
//!   "simulation": {"dt": 0.001, "T": 10.0, "ensemble": 1, "record_every": 1,
//!                  "seed": 1, "x0": null},
//!   "probe":      {...},
//!   "output":     {"format": "csv", "path": null}
//! }
//! ```
//!
//! `dimension`, `K` and `seed` may also be given at the top level.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use tracerflow_core::spectrum::{PowerLawParams, Projection};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionName {
    Full,
    Incompressible,
    Potential,
}

impl From<ProjectionName> for Projection {
    fn from(p: ProjectionName) -> Self {
        match p {
            ProjectionName::Full => Projection::Full,
            ProjectionName::Incompressible => Projection::Incompressible,
            ProjectionName::Potential => Projection::Potential,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub dimension: usize,
    #[serde(rename = "K")]
    pub truncation: u32,
    pub sigma0: f64,
    pub decay_p: f64,
    pub projection: ProjectionName,
    #[serde(rename = "gamma_K0")]
    pub gamma_k0: f64,
    pub gamma_exp: f64,
    pub m: u32,
    pub alpha: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            dimension: 2,
            truncation: 8,
            sigma0: 1.0,
            decay_p: 14.0,
            projection: ProjectionName::Incompressible,
            gamma_k0: 1.0,
            gamma_exp: 2.0,
            m: 3,
            alpha: 0.5,
        }
    }
}

impl SpectrumConfig {
    pub fn params(&self) -> PowerLawParams {
        PowerLawParams {
            dimension: self.dimension,
            truncation: self.truncation,
            sigma0: self.sigma0,
            decay_p: self.decay_p,
            projection: self.projection.into(),
            gamma_k0: self.gamma_k0,
            gamma_exp: self.gamma_exp,
            m: self.m,
            alpha: self.alpha,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub ensemble: usize,
    pub record_every: usize,
    pub seed: Option<u64>,
    pub x0: Option<Vec<f64>>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 10.0,
            ensemble: 1,
            record_every: 1,
            seed: None,
            x0: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableName {
    TanhNormSq,
    VelocityAtOrigin,
    IndicatorBall,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Report,
    Moment,
    Stability,
    EProperty,
    Lln,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub observable: ObservableName,
    /// Velocity component for `velocity_at_origin`.
    pub component: usize,
    /// Value of the `constant` observable.
    pub value: f64,
    /// Ball radius for occupation and `indicator_ball`; twice the
    /// stationary rms norm when absent.
    pub delta: Option<f64>,
    /// Stability radius; three times the stationary rms norm when absent.
    pub eps: Option<f64>,
    pub offsets: Vec<f64>,
    pub horizons: Vec<f64>,
    #[serde(rename = "R")]
    pub radii: Vec<f64>,
    pub n: Vec<u32>,
    pub probes: Vec<ProbeKind>,
    /// Lags of the `field` correlation check.
    pub lags: Vec<f64>,
    pub top_modes: usize,
    /// Grid spacing and length of the `field` correlation paths.
    pub lag_grid: f64,
    pub lag_steps: usize,
    /// Relative tolerance of the `field` and `decay` checks.
    pub tolerance: f64,
    /// Norm of the random starts used by `decay`.
    pub decay_radius: f64,
    pub chain_x: Vec<f64>,
    pub chain_n: usize,
    pub chain_paths: usize,
    pub chain_radius: f64,
    pub chain_escape_steps: usize,
    pub chain_offsets: Vec<f64>,
    pub poisson_t: Vec<f64>,
    pub poisson_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            observable: ObservableName::TanhNormSq,
            component: 0,
            value: 1.0,
            delta: None,
            eps: None,
            offsets: vec![1.0, 0.5, 0.25, 0.125],
            horizons: vec![50.0, 200.0],
            radii: vec![1.0, 10.0],
            n: vec![1, 2],
            probes: vec![
                ProbeKind::Report,
                ProbeKind::Moment,
                ProbeKind::Stability,
                ProbeKind::EProperty,
                ProbeKind::Lln,
            ],
            lags: vec![0.1, 0.5, 1.0],
            top_modes: 10,
            lag_grid: 0.1,
            lag_steps: 600,
            tolerance: 0.05,
            decay_radius: 5.0,
            chain_x: vec![1.0, 1.5, 2.0],
            chain_n: 40,
            chain_paths: 100_000,
            chain_radius: 10.0,
            chain_escape_steps: 100,
            chain_offsets: vec![0.1, 0.01, 0.001],
            poisson_t: vec![1.0, 10.0],
            poisson_tol: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: OutputFormat,
    pub path: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            format: OutputFormat::Csv,
            path: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spectrum: SpectrumConfig,
    pub simulation: SimulationConfig,
    pub probe: ProbeConfig,
    pub output: OutputConfig,
}

const SHORTHAND: [(&str, &str); 3] = [("dimension", "spectrum"), ("K", "spectrum"), ("seed", "simulation")];

/// Moves top-level shorthand keys into their sections.
fn expand_shorthand(mut root: Map<String, Value>) -> Result<Map<String, Value>, ConfigError> {
    for (key, section) in SHORTHAND {
        if let Some(v) = root.remove(key) {
            let entry = root
                .entry(section.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            let Value::Object(obj) = entry else {
                return Err(invalid(section, "must be an object"));
            };
            if obj.contains_key(key) {
                return Err(invalid(&format!("{section}.{key}"), "given both at top level and in the section"));
            }
            obj.insert(key.to_string(), v);
        }
    }
    Ok(root)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let Value::Object(root) = value else {
            return Err(ConfigError::Parse("top level must be an object".into()));
        };
        let root = Value::Object(expand_shorthand(root)?);
        let cfg: Self = serde_path_to_error::deserialize(root).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Master seed; present after validation.
    pub fn seed(&self) -> u64 {
        self.simulation.seed.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.spectrum;
        if s.dimension < 1 {
            return Err(invalid("spectrum.dimension", "must be at least 1"));
        }
        if s.truncation < 1 {
            return Err(invalid("spectrum.K", "must be at least 1"));
        }
        for (name, v) in [("sigma0", s.sigma0), ("gamma_K0", s.gamma_k0), ("decay_p", s.decay_p)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(&format!("spectrum.{name}"), "must be positive"));
            }
        }
        if !(s.gamma_exp >= 1.0 && s.gamma_exp.is_finite()) {
            return Err(invalid("spectrum.gamma_exp", "must be at least 1"));
        }
        if !(s.alpha > 0.0 && s.alpha < 1.0) {
            return Err(invalid("spectrum.alpha", "must lie in (0, 1)"));
        }

        let sim = &self.simulation;
        if !(sim.dt > 0.0 && sim.dt.is_finite()) {
            return Err(invalid("simulation.dt", "must be positive"));
        }
        if !(sim.horizon >= sim.dt && sim.horizon.is_finite()) {
            return Err(invalid("simulation.T", "must be at least dt"));
        }
        if sim.ensemble < 1 {
            return Err(invalid("simulation.ensemble", "must be at least 1"));
        }
        if sim.record_every < 1 {
            return Err(invalid("simulation.record_every", "must be at least 1"));
        }
        if sim.seed.is_none() {
            return Err(invalid("simulation.seed", "is required"));
        }
        if let Some(x0) = &sim.x0 {
            if x0.len() != s.dimension || x0.iter().any(|x| !x.is_finite()) {
                return Err(invalid("simulation.x0", format!("must be {} finite numbers", s.dimension)));
            }
        }

        let p = &self.probe;
        let positive = |path: &str, v: Option<f64>| match v {
            Some(v) if !(v > 0.0 && v.is_finite()) => Err(invalid(path, "must be positive")),
            _ => Ok(()),
        };
        positive("probe.delta", p.delta)?;
        positive("probe.eps", p.eps)?;
        positive("probe.lag_grid", Some(p.lag_grid))?;
        positive("probe.tolerance", Some(p.tolerance))?;
        positive("probe.decay_radius", Some(p.decay_radius))?;
        positive("probe.poisson_tol", Some(p.poisson_tol))?;
        if p.observable == ObservableName::VelocityAtOrigin && p.component >= s.dimension {
            return Err(invalid("probe.component", format!("must be below {}", s.dimension)));
        }
        if p.offsets.iter().any(|h| !(*h >= 0.0)) || p.offsets.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("probe.offsets", "must be nonnegative and decreasing"));
        }
        if p.horizons.iter().any(|t| !(*t > 0.0)) || p.horizons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("probe.horizons", "must be positive and increasing"));
        }
        if p.radii.iter().any(|r| !(*r >= 0.0)) {
            return Err(invalid("probe.R", "must be nonnegative"));
        }
        if p.n.iter().any(|&n| n < 1) {
            return Err(invalid("probe.n", "must be at least 1"));
        }
        if p.lags.iter().any(|h| !(*h > 0.0)) {
            return Err(invalid("probe.lags", "must be positive"));
        }
        if p.chain_x.iter().any(|&x| x == 0.0 || !x.is_finite()) {
            return Err(invalid("probe.chain_x", "must be finite and nonzero"));
        }
        if p.chain_n > tracerflow_core::chain::MAX_EXACT_DEPTH {
            return Err(invalid(
                "probe.chain_n",
                format!("must not exceed {}", tracerflow_core::chain::MAX_EXACT_DEPTH),
            ));
        }
        if p.chain_paths < 2 {
            return Err(invalid("probe.chain_paths", "must be at least 2"));
        }
        if p.poisson_t.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(invalid("probe.poisson_t", "must be nonnegative"));
        }
        Ok(())
    }

    /// First 64 bits of the SHA-256 of the compact JSON serialization, hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        format!("{:016x}", u64::from_be_bytes(word))
    }
}
