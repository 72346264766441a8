use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use thermo_battery::channels::Tolerances;
use thermo_battery::experiments::RunParams;

/// Flat TOML run configuration. Command-line flags win over file values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub k_min: Option<usize>,
    pub band_buffer: Option<usize>,
    pub eps: Option<f64>,
    pub gamma: Option<f64>,
    pub output_path: Option<PathBuf>,
    pub stochastic_tol: Option<f64>,
    pub gibbs_tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self> {
        path.map(Self::load).transpose().map(Option::unwrap_or_default)
    }

    /// Overlays `other` (usually the flags) on top of `self`.
    pub fn merge(self, other: Self) -> Self {
        Self {
            experiment: other.experiment.or(self.experiment),
            beta: other.beta.or(self.beta),
            seed: other.seed.or(self.seed),
            trials: other.trials.or(self.trials),
            n: other.n.or(self.n),
            k_min: other.k_min.or(self.k_min),
            band_buffer: other.band_buffer.or(self.band_buffer),
            eps: other.eps.or(self.eps),
            gamma: other.gamma.or(self.gamma),
            output_path: other.output_path.or(self.output_path),
            stochastic_tol: other.stochastic_tol.or(self.stochastic_tol),
            gibbs_tol: other.gibbs_tol.or(self.gibbs_tol),
        }
    }

    pub fn run_params(&self) -> RunParams {
        let d = RunParams::default();
        RunParams {
            beta: self.beta.unwrap_or(d.beta),
            seed: self.seed.unwrap_or(d.seed),
            trials: self.trials.unwrap_or(d.trials),
            n: self.n,
            k_min: self.k_min.unwrap_or(d.k_min),
            band_buffer: self.band_buffer.unwrap_or(d.band_buffer),
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances { stochastic: self.stochastic_tol.unwrap_or(d.stochastic), gibbs: self.gibbs_tol.unwrap_or(d.gibbs) }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output_path.clone().unwrap_or_else(|| PathBuf::from("results"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = ExperimentConfig::parse("beta = 2.0\nseed = 3\nN = 50\n").unwrap();
        let flags = ExperimentConfig { seed: Some(9), ..Default::default() };
        let m = file.merge(flags);
        assert_eq!((m.beta, m.seed, m.n), (Some(2.0), Some(9), Some(50)));
        let p = m.run_params();
        assert_eq!(p.trials, 200);
        assert_eq!(p.n, Some(50));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::parse("betta = 1.0\n").is_err());
        assert!(ExperimentConfig::parse("[section]\nbeta = 1.0\n").is_err());
    }
}
