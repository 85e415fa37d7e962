//! Scenario configuration: `key = value` lines grouped under `[section]`
//! headers, plus `section.key=value` overrides.
//!
//! ```text
//! [scenario]
//! name = fig2
//! seed = 20240601
//! reps = 500
//! n = 5000
//!
//! [model]
//! beta = 1, 1, 1
//! sigma = 0.5
//! sigma_tau = 0.3
//! lambda_nu = 0.02
//! sigma_z = 0.2
//! rho = 0.4
//! exp_param_is_mean = true
//!
//! [predictions]
//! sigma_pred = 0, 0.2, 0.4
//! lambda_pred = 0
//!
//! [propensity]
//! mode = estimated_correct
//!
//! [estimation]
//! covariance_path = jackknife
//! meat_mode = ipw
//! level = 0.95
//! ```
//!
//! Every key is required; list-valued keys take comma-separated values.

use std::collections::BTreeMap;
use std::str::FromStr;

use psppi_core::simulation::{PropensityMode, SimConfig};
use psppi_core::{CovariancePath, MeatMode};

use crate::CliError;

/// Every recognised key, in echo order.
pub const KEYS: [&str; 17] = [
    "scenario.name",
    "scenario.seed",
    "scenario.reps",
    "scenario.n",
    "model.beta",
    "model.sigma",
    "model.sigma_tau",
    "model.lambda_nu",
    "model.sigma_z",
    "model.rho",
    "model.exp_param_is_mean",
    "predictions.sigma_pred",
    "predictions.lambda_pred",
    "propensity.mode",
    "estimation.covariance_path",
    "estimation.meat_mode",
    "estimation.level",
];

/// Raw `section.key → value` entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", ln + 1)))?;
            let section = section
                .as_deref()
                .ok_or_else(|| CliError::Config(format!("line {}: key outside a [section]", ln + 1)))?;
            let full = format!("{section}.{}", key.trim());
            if !KEYS.contains(&full.as_str()) {
                return Err(CliError::Config(format!("unknown key `{full}`")));
            }
            if entries.insert(full.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("duplicate key `{full}`")));
            }
        }
        Ok(Self { entries })
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not `section.key=value`")))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&str, CliError> {
        self.entries.get(key).map(String::as_str).ok_or_else(|| CliError::Config(format!("missing key `{key}`")))
    }

    fn parse_value<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.get(key)?;
        raw.parse().map_err(|_| CliError::Config(format!("key `{key}`: cannot parse `{raw}`")))
    }

    fn parse_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        let raw = self.get(key)?;
        let items: Vec<T> = raw
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| CliError::Config(format!("key `{key}`: cannot parse `{}`", s.trim())))
            })
            .collect::<Result<_, _>>()?;
        if items.is_empty() {
            return Err(CliError::Config(format!("key `{key}` is empty")));
        }
        Ok(items)
    }

    /// Resolved entries in key order, for the manifest.
    pub fn echo(&self) -> Vec<(String, String)> {
        KEYS.iter().filter_map(|k| self.entries.get(*k).map(|v| (k.to_string(), v.clone()))).collect()
    }
}

/// A fully resolved simulation scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub base: SimConfig,
    pub sigma_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub modes: Vec<PropensityMode>,
}

impl Scenario {
    pub fn from_config(cfg: &ConfigFile) -> Result<Self, CliError> {
        for key in KEYS {
            cfg.get(key)?;
        }
        let beta: Vec<f64> = cfg.parse_list("model.beta")?;
        let beta: [f64; 3] =
            beta.try_into().map_err(|_| CliError::Config("key `model.beta` needs exactly 3 values".into()))?;
        let bool_key = |key: &str| -> Result<bool, CliError> {
            match cfg.get(key)? {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                other => Err(CliError::Config(format!("key `{key}`: cannot parse `{other}`"))),
            }
        };
        let path: CovariancePath = cfg.get("estimation.covariance_path")?.parse().map_err(|_| {
            CliError::Config("key `estimation.covariance_path`: expected jackknife or closed_form".into())
        })?;
        let meat_mode: MeatMode = cfg
            .get("estimation.meat_mode")?
            .parse()
            .map_err(|_| CliError::Config("key `estimation.meat_mode`: expected ipw or paper".into()))?;
        let base = SimConfig {
            beta,
            sigma: cfg.parse_value("model.sigma")?,
            sigma_tau: cfg.parse_value("model.sigma_tau")?,
            lambda_nu: cfg.parse_value("model.lambda_nu")?,
            sigma_z: cfg.parse_value("model.sigma_z")?,
            rho: cfg.parse_value("model.rho")?,
            n: cfg.parse_value("scenario.n")?,
            reps: cfg.parse_value("scenario.reps")?,
            exp_param_is_mean: bool_key("model.exp_param_is_mean")?,
            seed: cfg.parse_value("scenario.seed")?,
            path,
            meat_mode,
            level: cfg.parse_value("estimation.level")?,
            ..SimConfig::default()
        };
        let sigma_grid: Vec<f64> = cfg.parse_list("predictions.sigma_pred")?;
        let lambda_grid: Vec<f64> = cfg.parse_list("predictions.lambda_pred")?;
        let modes: Vec<PropensityMode> = cfg
            .get("propensity.mode")?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("key `propensity.mode`: unknown mode `{}`", s.trim())))
            })
            .collect::<Result<_, _>>()?;
        let scenario = Self { name: cfg.get("scenario.name")?.to_string(), base, sigma_grid, lambda_grid, modes };
        for s in scenario.configs() {
            s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(scenario)
    }

    /// `(σ_pred, λ_pred)` settings in row-major grid order.
    pub fn settings(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &s in &self.sigma_grid {
            for &l in &self.lambda_grid {
                out.push((s, l));
            }
        }
        out
    }

    /// One config per propensity mode and setting.
    pub fn configs(&self) -> Vec<SimConfig> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for (s, l) in self.settings() {
                out.push(SimConfig { propensity_mode: mode, sigma_pred: s, lambda_pred: l, ..self.base.clone() });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
[scenario]
name = t
seed = 7
reps = 3
n = 200
[model]
beta = 1, 1, 1
sigma = 0.5
sigma_tau = 0.3
lambda_nu = 0.02
sigma_z = 0.2
rho = 0.4
exp_param_is_mean = true
[predictions]
sigma_pred = 0, 1
lambda_pred = 0
[propensity]
mode = known, estimated_correct
[estimation]
covariance_path = jackknife
meat_mode = ipw
level = 0.95
";

    #[test]
    fn full_config_resolves_grid() {
        let s = Scenario::from_config(&ConfigFile::parse(FULL).unwrap()).unwrap();
        assert_eq!(s.settings(), vec![(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(s.configs().len(), 4);
        assert_eq!(s.base.seed, 7);
    }

    #[test]
    fn missing_key_is_named() {
        let text = FULL.replace("rho = 0.4\n", "");
        let err = Scenario::from_config(&ConfigFile::parse(&text).unwrap()).unwrap_err();
        assert!(matches!(&err, CliError::Config(m) if m.contains("model.rho")), "{err}");
    }

    #[test]
    fn overrides_replace_values() {
        let mut c = ConfigFile::parse(FULL).unwrap();
        c.set("scenario.reps=9").unwrap();
        assert_eq!(c.get("scenario.reps").unwrap(), "9");
        assert!(c.set("scenario.bogus=1").is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ConfigFile::parse("[model]\ngamma = 1\n").is_err());
        assert!(ConfigFile::parse("sigma = 1\n").is_err());
    }
}
