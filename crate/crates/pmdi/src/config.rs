//! Flat `key = value` run configuration with detector presets.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored. Unknown keys and
//! repeated keys are errors so typos do not silently fall back to defaults.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use pmdi_core::channel::ChannelParams;
use pmdi_core::keyrate::{ActiveIntensities, OptimizeOptions, ProtocolConfig, UNIFORM_KEY_SETTING};
use pmdi_core::quadrature::QuadratureSpec;
use pmdi_core::regions::RegionParams;
use pmdi_core::source::SourceParams;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("bad value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("invalid configuration: {0}")]
    Model(#[from] pmdi_core::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Snspd,
    Spad,
    Custom,
}

impl Preset {
    /// (η_D, p_d) of the detector scenario.
    pub fn detector(self) -> Option<(f64, f64)> {
        match self {
            Preset::Snspd => Some((0.70, 1e-8)),
            Preset::Spad => Some((0.30, 1e-6)),
            Preset::Custom => None,
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "snspd" => Ok(Preset::Snspd),
            "spad" => Ok(Preset::Spad),
            "custom" => Ok(Preset::Custom),
            _ => Err(format!("unknown preset `{s}` (snspd, spad, custom)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Snspd => "snspd",
            Preset::Spad => "spad",
            Preset::Custom => "custom",
        })
    }
}

/// Everything a command needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub protocol: ProtocolConfig,
    /// Total Alice–Bob lengths in km, relay in the middle.
    pub distances: Vec<f64>,
    /// Fixed active levels, used unless the run optimizes.
    pub active: ActiveIntensities,
    pub trials: u64,
    pub seed: u64,
    pub optimize: OptimizeOptions,
    /// Relative shift applied to every analytic gain before the Monte Carlo comparison.
    /// Only useful to check that the comparison catches a wrong model.
    pub perturb_analytic: f64,
    pub z_threshold: f64,
}

const KEYS: &[&str] = &[
    "preset",
    "mu_max",
    "delta_z",
    "delta_x",
    "delta_phi",
    "t1",
    "t2",
    "eta_d",
    "p_d",
    "alpha",
    "e_d",
    "f_e",
    "cut",
    "shaping_loss",
    "distances",
    "active_signal",
    "active_decoy",
    "active_weak",
    "active_key_setting",
    "trials",
    "seed",
    "restarts",
    "max_evals",
    "nodes_radial",
    "nodes_angular",
    "nodes_phase",
    "check_convergence",
    "quad_tolerance",
    "perturb_analytic",
    "z_threshold",
];

/// Parsed but not yet validated `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: HashMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = HashMap::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: k + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: k + 1, message: "empty key".into() });
            }
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey(key.into()));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Duplicate(key.into()));
            }
        }
        Ok(Self { values })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Set or replace a key (command-line overrides).
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.into()));
        }
        self.values.insert(key.into(), value.into());
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| ConfigError::Value { key: key.into(), message: e.to_string() }),
        }
    }

    pub fn build(&self) -> Result<RunConfig, ConfigError> {
        let preset: Preset = self.get("preset", Preset::Snspd)?;
        let (eta_default, p_d_default) = preset.detector().unwrap_or((0.70, 1e-8));
        if preset != Preset::Custom {
            for key in ["eta_d", "p_d"] {
                if self.values.contains_key(key) {
                    return Err(ConfigError::Value {
                        key: key.into(),
                        message: format!("fixed by preset `{preset}`; use preset = custom"),
                    });
                }
            }
        }
        let source = SourceParams::from_mu_max(self.get("mu_max", 0.2)?)?;
        let regions = RegionParams::new(
            self.get("delta_z", 0.03)?,
            self.get("delta_x", 0.3)?,
            self.get("delta_phi", 0.3)?,
            self.get("t1", 0.6)?,
            self.get("t2", 0.2)?,
        )?;
        let distances = match self.values.get("distances") {
            None => vec![0.0],
            Some(v) => parse_distances(v).map_err(|message| ConfigError::Value { key: "distances".into(), message })?,
        };
        let first = distances.first().copied().unwrap_or(0.0);
        let channel = ChannelParams::symmetric(
            self.get("eta_d", eta_default)?,
            self.get("alpha", 0.2)?,
            first,
            self.get("p_d", p_d_default)?,
            self.get("e_d", 0.01)?,
        )?;
        let defaults = QuadratureSpec::default();
        let quad = QuadratureSpec {
            nodes_radial: self.get("nodes_radial", defaults.nodes_radial)?,
            nodes_angular: self.get("nodes_angular", defaults.nodes_angular)?,
            nodes_phase: self.get("nodes_phase", defaults.nodes_phase)?,
            check_convergence: self.get("check_convergence", defaults.check_convergence)?,
            tolerance: self.get("quad_tolerance", defaults.tolerance)?,
        };
        let protocol = ProtocolConfig {
            source,
            regions,
            channel,
            f_e: self.get("f_e", 1.16)?,
            cut: self.get("cut", 6)?,
            include_shaping_loss: self.get("shaping_loss", false)?,
            quad,
            active_key_setting: self.get("active_key_setting", UNIFORM_KEY_SETTING)?,
        };
        protocol.validate()?;
        let active = ActiveIntensities::new(
            self.get("active_signal", 0.4)?,
            self.get("active_decoy", 0.1)?,
            self.get("active_weak", 0.0)?,
        )?;
        let optimize = OptimizeOptions {
            seed: self.get("seed", 1)?,
            restarts: self.get("restarts", OptimizeOptions::default().restarts)?,
            max_evals: self.get("max_evals", OptimizeOptions::default().max_evals)?,
            ..OptimizeOptions::default()
        };
        let trials = self.get("trials", 1_000_000)?;
        if trials == 0 {
            return Err(ConfigError::Value { key: "trials".into(), message: "must be at least 1".into() });
        }
        Ok(RunConfig {
            preset,
            protocol,
            distances,
            active,
            trials,
            seed: optimize.seed,
            optimize,
            perturb_analytic: self.get("perturb_analytic", 0.0)?,
            z_threshold: self.get("z_threshold", 4.0)?,
        })
    }
}

/// `a:b:step` (inclusive of b up to rounding), a comma list, or a single value. An empty
/// string gives no distances.
pub fn parse_distances(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let number = |t: &str| -> Result<f64, String> {
        let v: f64 = t.trim().parse().map_err(|_| format!("`{t}` is not a number"))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("distance {v} must be finite and non-negative"));
        }
        Ok(v)
    };
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(format!("expected start:stop:step, found `{s}`"));
        };
        let (a, b, step) = (number(a)?, number(b)?, number(step)?);
        if step <= 0.0 {
            return Err("step must be positive".into());
        }
        if b < a {
            return Err(format!("stop {b} is below start {a}"));
        }
        // Count steps once so rounding cannot drop or duplicate the end point.
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| a + k as f64 * step).collect());
    }
    s.split(',').map(number).collect()
}

impl RunConfig {
    /// The protocol at one distance, keeping every other channel setting.
    pub fn at_distance(&self, distance: f64) -> Result<ProtocolConfig, pmdi_core::Error> {
        let ch = &self.protocol.channel;
        let mut cfg = self.protocol;
        cfg.channel = ChannelParams::symmetric(ch.eta_d, ch.alpha, distance, ch.p_d, ch.e_d)?;
        Ok(cfg)
    }
}
