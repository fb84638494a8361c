//! Experiment configuration: a single JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use tensor_deflation::{PowerIterOptions, SolverOptions, SpikeParams};

use crate::CliError;

/// Weight entry: a fixed value, or (first position only) a sweep grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Fixed(f64),
    Sweep { start: f64, stop: f64, steps: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub d: usize,
    pub beta: Vec<BetaSpec>,
    pub gram: Vec<Vec<f64>>,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
}

fn default_noise_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerIterConfig {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_pi_tol")]
    pub tol: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_max_iters() -> usize {
    1000
}
fn default_pi_tol() -> f64 {
    1e-10
}
fn default_restarts() -> usize {
    10
}

impl Default for PowerIterConfig {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            tol: default_pi_tol(),
            restarts: default_restarts(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_solver_tol")]
    pub tol: f64,
    #[serde(default = "default_solver_iters")]
    pub max_iters: usize,
}

fn default_solver_tol() -> f64 {
    1e-10
}
fn default_solver_iters() -> usize {
    200
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_solver_tol(),
            max_iters: default_solver_iters(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub power_iter: PowerIterConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub outputs: OutputConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let r = self.model.beta.len();
        if r == 0 {
            return Err(CliError::Config("beta must be non-empty".into()));
        }
        if self.model.d < 2 {
            return Err(CliError::Config("order d must be at least 2".into()));
        }
        if r > self.model.n {
            return Err(CliError::Config(format!(
                "rank {r} exceeds dimension {}",
                self.model.n
            )));
        }
        for (i, spec) in self.model.beta.iter().enumerate() {
            match spec {
                BetaSpec::Fixed(v) if *v > 0.0 => {}
                BetaSpec::Fixed(v) => {
                    return Err(CliError::Config(format!(
                        "beta[{i}] must be positive, got {v}"
                    )))
                }
                BetaSpec::Sweep { start, stop, steps } => {
                    if i != 0 {
                        return Err(CliError::Config(
                            "only beta[0] may be a sweep grid".into(),
                        ));
                    }
                    if !(*start > 0.0) {
                        return Err(CliError::Config("sweep start must be positive".into()));
                    }
                    if *steps == 0 {
                        return Err(CliError::Config("sweep needs at least one step".into()));
                    }
                    if *steps > 1 && !(stop > start) {
                        return Err(CliError::Config(
                            "sweep grid must be strictly increasing".into(),
                        ));
                    }
                }
            }
        }
        if self.model.gram.len() != r || self.model.gram.iter().any(|row| row.len() != r) {
            return Err(CliError::Config(format!("gram must be {r}x{r}")));
        }
        for i in 0..r {
            if (self.model.gram[i][i] - 1.0).abs() > 1e-12 {
                return Err(CliError::Config("gram diagonal must be 1".into()));
            }
            for j in 0..i {
                if (self.model.gram[i][j] - self.model.gram[j][i]).abs() > 1e-12 {
                    return Err(CliError::Config("gram must be symmetric".into()));
                }
            }
        }
        if !(self.model.noise_scale >= 0.0) {
            return Err(CliError::Config("noise_scale must be nonnegative".into()));
        }
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        Ok(())
    }

    /// The β₁ grid (a single point when beta[0] is fixed).
    pub fn beta_grid(&self) -> Vec<f64> {
        match &self.model.beta[0] {
            BetaSpec::Fixed(v) => vec![*v],
            BetaSpec::Sweep { start, stop, steps } => {
                if *steps == 1 {
                    vec![*start]
                } else {
                    (0..*steps)
                        .map(|k| start + (stop - start) * k as f64 / (*steps - 1) as f64)
                        .collect()
                }
            }
        }
    }

    pub fn rank(&self) -> usize {
        self.model.beta.len()
    }

    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let r = self.rank();
        DMatrix::from_fn(r, r, |i, j| self.model.gram[i][j])
    }

    /// Concrete weights at a given first-position value.
    pub fn beta_at(&self, beta1: f64) -> Vec<f64> {
        self.model
            .beta
            .iter()
            .enumerate()
            .map(|(i, spec)| match spec {
                _ if i == 0 => beta1,
                BetaSpec::Fixed(v) => *v,
                BetaSpec::Sweep { start, .. } => *start,
            })
            .collect()
    }

    /// Spike parameters for one trial.
    pub fn spike_params(&self, beta1: f64, seed: u64) -> Result<SpikeParams, CliError> {
        Ok(SpikeParams::new(
            self.model.n,
            self.model.d,
            self.beta_at(beta1),
            self.gram_matrix(),
            self.model.noise_scale,
            seed,
        )?)
    }

    pub fn power_options(&self, seed: u64) -> PowerIterOptions {
        PowerIterOptions {
            max_iters: self.power_iter.max_iters,
            tol: self.power_iter.tol,
            restarts: self.power_iter.restarts,
            seed,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iters: self.solver.max_iters,
        }
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.outputs.formats.contains(&format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "model": {
                "n": 40, "d": 3,
                "beta": [{"start": 1.0, "stop": 10.0, "steps": 10}, 5.0],
                "gram": [[1.0, 0.4], [0.4, 1.0]]
            },
            "trials": 2,
            "base_seed": 7,
            "outputs": {"dir": "out", "formats": ["csv"]}
        })
    }

    #[test]
    fn parses_and_validates_base_config() {
        let config: ExperimentConfig = serde_json::from_value(base_json()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.beta_grid().len(), 10);
        assert_eq!(config.beta_grid()[0], 1.0);
        assert_eq!(config.beta_grid()[9], 10.0);
        assert_eq!(config.beta_at(3.0), vec![3.0, 5.0]);
        assert_eq!(config.power_iter.restarts, 10);
    }

    #[test]
    fn rejects_unknown_keys() {
        let mut v = base_json();
        v["model"]["typo_field"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
        let mut v = base_json();
        v["unknown_top"] = serde_json::json!(true);
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
    }

    #[test]
    fn rejects_decreasing_grid() {
        let mut v = base_json();
        v["model"]["beta"][0] = serde_json::json!({"start": 5.0, "stop": 1.0, "steps": 4});
        let config: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn rejects_sweep_outside_first_position() {
        let mut v = base_json();
        v["model"]["beta"] = serde_json::json!([5.0, {"start": 1.0, "stop": 2.0, "steps": 2}]);
        let config: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn rejects_zero_trials_and_bad_gram() {
        let mut v = base_json();
        v["trials"] = serde_json::json!(0);
        let config: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert!(config.validate().is_err());

        let mut v = base_json();
        v["model"]["gram"] = serde_json::json!([[1.0, 0.4], [0.3, 1.0]]);
        let config: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert!(config.validate().is_err());
    }
}
