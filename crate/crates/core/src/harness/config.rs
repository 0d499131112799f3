use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble, triangulate, AssemblyOptions, Geometry};
use crate::fom::{FomModel, ParameterBox, SolverOptions, TimeGrid};
use crate::ml_kernel::KernelSettings;
use crate::rb::RbOptions;
use crate::tr_opt::{Problem, TrConfig};

/// Problem size presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// 64×32 grid, 200 steps: minutes on a laptop.
    Desk,
    /// 256×128 grid, 10 000 steps.
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::Config(format!("unknown scale '{s}' (expected desk or paper)"))),
        }
    }
}

/// PDE, discretization and objective.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    /// Layout file, or `"default"` for the shipped building.
    pub geometry: String,
    pub nx: usize,
    pub ny: usize,
    pub steps: usize,
    pub dt: f64,
    /// Target parameter; the reference trajectory is the solution there.
    pub mu_hat: Vec<f64>,
    pub lambda: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Weight of the L² tracking product.
    pub output_weight: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            geometry: "default".into(),
            nx: 64,
            ny: 32,
            steps: 200,
            dt: 0.1,
            mu_hat: vec![0.05, 0.05],
            lambda: 0.5e-3,
            lower: vec![0.01, 0.01],
            upper: vec![0.1, 0.1],
            output_weight: 5000.0,
        }
    }
}

/// Multi-start settings.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub starts: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Concurrent runs. Wall-clock comparisons are only meaningful with 1.
    pub jobs: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings { starts: 10, seed: 20240501, out_dir: PathBuf::from("results"), jobs: 1 }
    }
}

/// Sample sizes of the validation suite.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSettings {
    /// Random parameters for gradient, reproduction and ML checks.
    pub points: usize,
    /// `(μ, truncated basis)` pairs for the estimator checks.
    pub estimator_pairs: usize,
    /// Random reduced trajectories for the offline/online residual check.
    pub residual_samples: usize,
    /// Central-difference step relative to the box width.
    pub fd_step: f64,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        ValidationSettings { points: 3, estimator_pairs: 24, residual_samples: 10, fd_step: 1e-5 }
    }
}

/// Everything a harness command needs, read from a sectioned TOML file.
#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub solver: SolverOptions,
    pub rb: RbOptions,
    pub kernel: KernelSettings,
    pub optimizer: TrConfig,
    pub experiment: RunSettings,
    pub validation: ValidationSettings,
}

impl ExperimentConfig {
    pub fn preset(scale: Scale) -> Self {
        let mut config = ExperimentConfig::default();
        if scale == Scale::Paper {
            config.problem.nx = 256;
            config.problem.ny = 128;
            config.problem.steps = 10_000;
        }
        config
    }

    /// Preset values overridden by whatever `text` sets.
    pub fn from_toml(text: &str, scale: Scale) -> Result<Self> {
        let overrides: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(Self::preset(scale)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, overrides);
        let config: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path, scale: Scale) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, scale)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.nx < 2 || p.ny < 2 {
            return Err(Error::Config("mesh needs nx, ny ≥ 2".into()));
        }
        if p.steps == 0 || !(p.dt > 0.0) {
            return Err(Error::Config("time grid needs steps ≥ 1 and dt > 0".into()));
        }
        if !(p.lambda >= 0.0) || !(p.output_weight > 0.0) {
            return Err(Error::Config("lambda must be ≥ 0 and output_weight > 0".into()));
        }
        if p.mu_hat.len() != p.lower.len() || p.lower.len() != p.upper.len() {
            return Err(Error::Config("mu_hat, lower and upper must have equal length".into()));
        }
        if self.experiment.starts == 0 || self.experiment.jobs == 0 {
            return Err(Error::Config("starts and jobs must be positive".into()));
        }
        let v = &self.validation;
        if v.points == 0 || v.residual_samples == 0 || !(v.fd_step > 0.0) {
            return Err(Error::Config("validation sample sizes and fd_step must be positive".into()));
        }
        self.optimizer.validate()
    }

    pub fn bounds(&self) -> Result<ParameterBox> {
        ParameterBox::new(self.problem.lower.clone(), self.problem.upper.clone())
    }

    pub fn geometry(&self) -> Result<Geometry> {
        match self.problem.geometry.as_str() {
            "default" => Ok(Geometry::default_layout()),
            path => Geometry::from_file(Path::new(path)),
        }
    }

    /// Assembles the high-fidelity model, including the reference trajectory.
    pub fn build_fom(&self) -> Result<FomModel> {
        let p = &self.problem;
        let geometry = self.geometry()?;
        if geometry.num_parameters() != p.mu_hat.len() {
            return Err(Error::Config(format!(
                "layout has {} parameter groups, config has {}",
                geometry.num_parameters(),
                p.mu_hat.len()
            )));
        }
        let mesh = triangulate(p.nx, p.ny, geometry.width, geometry.height);
        let options = AssemblyOptions { reference_parameter: p.mu_hat.clone(), output_weight: p.output_weight };
        let forms = assemble(&geometry, &mesh, &options)?;
        FomModel::new(forms, TimeGrid::new(p.steps, p.dt)?, p.mu_hat.clone(), p.lambda, self.bounds()?, self.solver)
    }

    pub fn build_problem(&self) -> Result<Problem> {
        Problem::new(Arc::new(self.build_fom()?), self.rb.clone(), self.kernel)
    }
}

fn merge(base: &mut toml::Table, overrides: toml::Table) {
    for (key, value) in overrides {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
