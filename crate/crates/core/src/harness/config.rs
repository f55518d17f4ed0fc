use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::learning::BoundScaling;
use crate::privacy::AllocationMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Nominal,
    Uncorrelated,
    Correlated,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Nominal, Scheme::Uncorrelated, Scheme::Correlated];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Nominal => "nominal",
            Scheme::Uncorrelated => "uncorrelated",
            Scheme::Correlated => "correlated",
        }
    }

    pub fn is_perturbed(self) -> bool {
        self != Scheme::Nominal
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(Scheme::Nominal),
            "uncorrelated" => Ok(Scheme::Uncorrelated),
            "correlated" => Ok(Scheme::Correlated),
            other => Err(Error::ConfigError(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Flat experiment configuration. Missing keys take the defaults below;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub users: usize,
    pub samples_per_user: usize,
    pub model_dim: usize,
    pub zeta: f64,
    pub rounds: usize,
    pub power: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub snr_db: f64,
    pub kappa_server: f64,
    pub kappa_adversary: f64,
    pub theta: f64,
    pub w_bound: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub allocation: AllocationMode,
    /// Adversary noise power as a multiple of the server noise power.
    pub adversary_noise_ratio: f64,
    pub bound_scaling: BoundScaling,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            users: 10,
            samples_per_user: 1000,
            model_dim: 10,
            zeta: 0.5e-4,
            rounds: 30,
            power: 1.0,
            epsilon: 5.0,
            delta: 0.01,
            snr_db: 10.0,
            kappa_server: 5.0,
            kappa_adversary: 0.0,
            theta: 0.0,
            w_bound: 10.0,
            repetitions: 100,
            seed: 1,
            schemes: Scheme::ALL.to_vec(),
            allocation: AllocationMode::Uniform,
            adversary_noise_ratio: 1.0,
            bound_scaling: BoundScaling::Consistent,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Sets one key from its textual value, as given on a command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut map = match serde_json::to_value(&*self)? {
            serde_json::Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        if !map.contains_key(key) {
            return Err(Error::ConfigError(format!("unknown config key '{key}'")));
        }
        let parsed = match key {
            "schemes" => serde_json::Value::Array(
                value
                    .split(',')
                    .map(|s| serde_json::Value::String(s.trim().to_string()))
                    .collect(),
            ),
            "allocation" | "bound_scaling" => serde_json::Value::String(value.to_string()),
            _ => serde_json::from_str(value)
                .map_err(|_| Error::ConfigError(format!("cannot parse '{value}' for '{key}'")))?,
        };
        map.insert(key.to_string(), parsed);
        let next: Self = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::ConfigError(format!("{key}: {e}")))?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigError(msg));
        if self.users == 0 || self.samples_per_user == 0 {
            return bad("users and samples_per_user must be positive".into());
        }
        if self.model_dim < 5 {
            return Err(Error::DimensionTooSmall(self.model_dim));
        }
        if self.rounds == 0 || self.repetitions == 0 {
            return bad("rounds and repetitions must be positive".into());
        }
        if !(self.zeta > 0.0) || !(self.power > 0.0) || !(self.w_bound > 0.0) {
            return bad("zeta, power and w_bound must be positive".into());
        }
        if !(self.epsilon > 0.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("need epsilon > 0 and delta in (0, 1), got ({}, {})", self.epsilon, self.delta));
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite".into());
        }
        if !(self.adversary_noise_ratio > 0.0) {
            return bad("adversary_noise_ratio must be positive".into());
        }
        if self.schemes.is_empty() {
            return bad("at least one scheme is required".into());
        }
        let mut sorted = self.schemes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.schemes.len() {
            return bad("schemes listed twice".into());
        }
        self.channel().validate()
    }

    pub fn channel(&self) -> ChannelConfig {
        ChannelConfig {
            num_users: self.users,
            rician_factor_server: self.kappa_server,
            rician_factor_adversary: self.kappa_adversary,
            ar_coefficient: self.theta,
            los_component: Complex64::new(1.0, 0.0),
        }
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Complex symbols per transmission.
    pub fn symbols(&self) -> usize {
        crate::airlink::complex_dim(self.model_dim)
    }
}
