//! Experiment configuration: one TOML document per run, schema-validated
//! with unknown keys rejected, seeds mandatory wherever probes are
//! randomized.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ExtendSymplectic,
    ExtendVolume,
    Distortion,
    CentralizerCheck,
    Lagrangian,
    VerifyAll,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::ExtendSymplectic => "extend-symplectic",
            ExperimentKind::ExtendVolume => "extend-volume",
            ExperimentKind::Distortion => "distortion",
            ExperimentKind::CentralizerCheck => "centralizer-check",
            ExperimentKind::Lagrangian => "lagrangian",
            ExperimentKind::VerifyAll => "verify-all",
        }
    }
}

/// The on-disk configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "empty_table")]
    pub parameters: toml::Value,
}

fn empty_table() -> toml::Value {
    toml::Value::Table(toml::map::Map::new())
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let config: ConfigFile =
            toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    /// Deserialize the parameter table into the experiment's schema,
    /// rejecting unknown keys and reporting the offending field.
    pub fn typed_parameters<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        self.parameters
            .clone()
            .try_into()
            .map_err(|e| anyhow::anyhow!("invalid parameters: {e}"))
    }
}

fn default_epsilon() -> f64 {
    0.5
}
fn default_probes() -> usize {
    1000
}
fn default_amplitude() -> f64 {
    0.01
}
fn default_symplectic_tol() -> f64 {
    1e-7
}
fn default_det_tol() -> f64 {
    1e-6
}
fn default_disk_tol() -> f64 {
    1e-6
}
fn default_half_dim() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendSymplecticParams {
    pub seed: u64,
    #[serde(default = "default_half_dim")]
    pub n: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_symplectic_tol")]
    pub symplectic_tol: f64,
    #[serde(default = "default_disk_tol")]
    pub disk_tol: f64,
}

impl ExtendSymplecticParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            bail!("parameters.n must be at least 1");
        }
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("epsilon", self.epsilon),
            ("symplectic_tol", self.symplectic_tol),
            ("disk_tol", self.disk_tol),
        ] {
            if v <= 0.0 {
                bail!("parameters.{name} must be positive, got {v}");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendVolumeParams {
    pub seed: u64,
    pub k: usize,
    pub m: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_det_tol")]
    pub det_tol: f64,
}

impl ExtendVolumeParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m <= self.k {
            bail!("parameters require 1 <= k < m");
        }
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("epsilon", self.epsilon),
            ("det_tol", self.det_tol),
        ] {
            if v <= 0.0 {
                bail!("parameters.{name} must be positive, got {v}");
            }
        }
        Ok(())
    }
}

fn default_dim() -> usize {
    1
}
fn default_rate() -> f64 {
    0.5
}
fn default_graft_jacobian() -> f64 {
    0.6
}
fn default_big_n() -> f64 {
    10.0
}
fn default_slope_window() -> (usize, usize) {
    (20, 100)
}
fn default_slope_rel_tol() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionParams {
    pub seed: u64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_rate")]
    pub contraction_rate: f64,
    /// Target Jacobian of the graft model at 0.
    #[serde(default = "default_graft_jacobian")]
    pub graft_jacobian: f64,
    #[serde(default = "default_big_n")]
    pub big_n: f64,
    #[serde(default = "default_slope_window")]
    pub slope_window: (usize, usize),
    #[serde(default = "default_slope_rel_tol")]
    pub slope_rel_tol: f64,
}

impl DistortionParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            bail!("parameters.dim must be at least 1");
        }
        if !(0.0 < self.contraction_rate && self.contraction_rate < 1.0) {
            bail!("parameters.contraction_rate must lie in (0, 1)");
        }
        let base_jac = self.contraction_rate.powi(self.dim as i32);
        if self.graft_jacobian <= base_jac {
            bail!(
                "parameters.graft_jacobian must exceed the base Jacobian {base_jac} \
                 (got {})",
                self.graft_jacobian
            );
        }
        if self.big_n <= 0.0 {
            bail!("parameters.big_n must be positive");
        }
        if self.slope_rel_tol <= 0.0 {
            bail!("parameters.slope_rel_tol must be positive");
        }
        if self.slope_window.0 == 0 || self.slope_window.0 >= self.slope_window.1 {
            bail!("parameters.slope_window must be an increasing pair of positive integers");
        }
        Ok(())
    }

    pub fn jac_gap(&self) -> f64 {
        (self.graft_jacobian / self.contraction_rate.powi(self.dim as i32)).ln()
    }
}

fn default_powers() -> Vec<i64> {
    vec![-3, -1, 1, 2, 4]
}
fn default_contractions() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentralizerParams {
    pub seed: u64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Planted powers to recover.
    #[serde(default = "default_powers")]
    pub powers: Vec<i64>,
    /// Number of randomized contractions per power.
    #[serde(default = "default_contractions")]
    pub contractions: usize,
}

impl CentralizerParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            bail!("parameters.dim must be at least 1");
        }
        if self.powers.is_empty() {
            bail!("parameters.powers must not be empty");
        }
        if self.contractions == 0 {
            bail!("parameters.contractions must be at least 1");
        }
        Ok(())
    }
}

fn default_half_dims() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_count() -> usize {
    100
}
fn default_omega_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianParams {
    pub seed: u64,
    #[serde(default = "default_half_dims")]
    pub half_dims: Vec<usize>,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_omega_tol")]
    pub tol: f64,
}

impl LagrangianParams {
    pub fn validate(&self) -> Result<()> {
        if self.half_dims.is_empty() || self.half_dims.contains(&0) {
            bail!("parameters.half_dims must be nonzero");
        }
        if self.count == 0 {
            bail!("parameters.count must be at least 1");
        }
        if self.tol <= 0.0 {
            bail!("parameters.tol must be positive");
        }
        Ok(())
    }
}

fn default_fast() -> bool {
    false
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyAllParams {
    pub seed: u64,
    #[serde(default = "default_fast")]
    pub fast: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_distortion_config() {
        let text = r#"
experiment = "distortion"

[parameters]
seed = 7
dim = 1
graft_jacobian = 0.6
big_n = 10.0
"#;
        let config = ConfigFile::parse(text).unwrap();
        assert_eq!(config.experiment, ExperimentKind::Distortion);
        let params: DistortionParams = config.typed_parameters().unwrap();
        params.validate().unwrap();
        assert_eq!(params.seed, 7);
        assert!((params.jac_gap() - 1.2_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"
experiment = "distortion"
unknown_top_level = 1

[parameters]
seed = 7
"#;
        assert!(ConfigFile::parse(text).is_err());

        let text = r#"
experiment = "distortion"

[parameters]
seed = 7
not_a_field = true
"#;
        let config = ConfigFile::parse(text).unwrap();
        let params: Result<DistortionParams> = config.typed_parameters();
        assert!(params.is_err());
    }

    #[test]
    fn rejects_missing_seed_and_negative_tolerances() {
        let text = r#"
experiment = "lagrangian"

[parameters]
count = 5
"#;
        let config = ConfigFile::parse(text).unwrap();
        let params: Result<LagrangianParams> = config.typed_parameters();
        assert!(params.is_err(), "seed must be mandatory");

        let text = r#"
experiment = "lagrangian"

[parameters]
seed = 7
tol = -1.0
"#;
        let config = ConfigFile::parse(text).unwrap();
        let params: LagrangianParams = config.typed_parameters().unwrap();
        let err = params.validate().unwrap_err().to_string();
        assert!(err.contains("tol"), "error should name the field: {err}");
    }
}
