//! Flat experiment configuration.
//!
//! ```toml
//! n = 20
//! d = 25
//! samples = 100
//! topology = "fixed_cycle"   # or "gossip", "matrix_file"
//! noise = "quantizer"        # or "none", "gaussian"
//! levels = 4
//! alpha0 = 0.1
//! nu = 0.25
//! beta0 = 0.7
//! mu = 0.75
//! horizon = 5000
//! seed = 1
//! num_runs = 20
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dimix::{Experiment, StepSchedule};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::objective::{partition, LocalObjective, RegressionProblem, DEFAULT_NOISE_WIDTH};
use crate::rng::{stream, Purpose};
use crate::topology::{MixingSchedule, WeightVector};

use super::matrix_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    FixedCycle,
    Gossip,
    MatrixFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindConfig {
    None,
    Gaussian,
    Quantizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsKind {
    /// `r = p/‖p‖₁` with `p_i ~ U(weight_low, weight_high)`.
    Random,
    Uniform,
}

fn default_samples() -> usize {
    100
}
fn default_levels() -> u32 {
    4
}
fn default_sigma() -> f64 {
    0.1
}
fn default_noise_width() -> f64 {
    DEFAULT_NOISE_WIDTH
}
fn default_weights() -> WeightsKind {
    WeightsKind::Random
}
fn default_weight_low() -> f64 {
    0.01
}
fn default_weight_high() -> f64 {
    0.09
}
fn default_runs() -> usize {
    20
}
fn default_output() -> PathBuf {
    PathBuf::from("dimix_out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    /// Total sample count `N`.
    #[serde(default = "default_samples", alias = "N")]
    pub samples: usize,
    pub topology: TopologyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_file: Option<PathBuf>,
    /// Overrides the declared connectivity window `B`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    pub noise: NoiseKindConfig,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_levels")]
    pub levels: u32,
    pub alpha0: f64,
    pub nu: f64,
    pub beta0: f64,
    pub mu: f64,
    /// Iterations `T`.
    #[serde(alias = "T")]
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub num_runs: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_weights")]
    pub weights: WeightsKind,
    #[serde(default = "default_weight_low")]
    pub weight_low: f64,
    #[serde(default = "default_weight_high")]
    pub weight_high: f64,
    /// Width of the uniform target noise.
    #[serde(default = "default_noise_width")]
    pub noise_width: f64,
}

fn field(name: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: name.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// The tuned linear-regression setting with the given topology.
    pub fn reference(topology: TopologyKind) -> Self {
        Self {
            n: 20,
            d: 25,
            samples: 100,
            topology,
            matrix_file: None,
            window: None,
            noise: NoiseKindConfig::Quantizer,
            sigma: default_sigma(),
            levels: 4,
            alpha0: 0.1,
            nu: 0.25,
            beta0: 0.7,
            mu: 0.75,
            horizon: 5000,
            seed: 1,
            num_runs: 20,
            output_dir: default_output(),
            weights: WeightsKind::Random,
            weight_low: 0.01,
            weight_high: 0.09,
            noise_width: DEFAULT_NOISE_WIDTH,
        }
    }

    /// Reads a config file, or the `[config]` table of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::parse(&text)?;
        if let (Some(file), Some(parent)) = (&config.matrix_file, path.parent()) {
            if file.is_relative() {
                config.matrix_file = Some(parent.join(file));
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text)?;
        let config: Self = match table.get("config") {
            Some(toml::Value::Table(inner)) => inner.clone().try_into()?,
            _ => table.try_into()?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n", self.n),
            ("d", self.d),
            ("samples", self.samples),
            ("num_runs", self.num_runs),
        ] {
            if v == 0 {
                return Err(field(name, "must be >= 1"));
            }
        }
        if self.horizon == 0 {
            return Err(field("horizon", "must be >= 1"));
        }
        if self.samples < self.n {
            return Err(field(
                "samples",
                format!("{} samples cannot cover {} agents", self.samples, self.n),
            ));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(field("nu", format!("must lie in (0,1), got {}", self.nu)));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(field("mu", format!("must lie in (0,1), got {}", self.mu)));
        }
        if !(self.beta0 > 0.0 && self.beta0 <= 1.0) {
            return Err(field(
                "beta0",
                format!("must lie in (0,1], got {}", self.beta0),
            ));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(field(
                "alpha0",
                format!("must be positive, got {}", self.alpha0),
            ));
        }
        match self.topology {
            TopologyKind::FixedCycle | TopologyKind::Gossip if self.n < 3 => {
                return Err(field("topology", "cycle topologies need n >= 3"));
            }
            TopologyKind::MatrixFile if self.matrix_file.is_none() => {
                return Err(field(
                    "matrix_file",
                    "required when topology = \"matrix_file\"",
                ));
            }
            _ => {}
        }
        if self.window == Some(0) {
            return Err(field("window", "must be >= 1"));
        }
        match self.noise {
            NoiseKindConfig::Gaussian if !(self.sigma >= 0.0 && self.sigma.is_finite()) => {
                return Err(field("sigma", format!("must be >= 0, got {}", self.sigma)));
            }
            NoiseKindConfig::Quantizer if self.levels == 0 => {
                return Err(field("levels", "must be >= 1"));
            }
            _ => {}
        }
        if self.weights == WeightsKind::Random
            && !(0.0 < self.weight_low && self.weight_low <= self.weight_high)
        {
            return Err(field("weight_low", "need 0 < weight_low <= weight_high"));
        }
        if !(self.noise_width >= 0.0 && self.noise_width.is_finite()) {
            return Err(field("noise_width", "must be >= 0"));
        }
        Ok(())
    }

    pub fn steps(&self) -> Result<StepSchedule> {
        StepSchedule::new(self.alpha0, self.nu, self.beta0, self.mu)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        match self.noise {
            NoiseKindConfig::None => Ok(NoiseModel::noiseless()),
            NoiseKindConfig::Gaussian => NoiseModel::gaussian(self.sigma),
            NoiseKindConfig::Quantizer => NoiseModel::quantizer(self.levels),
        }
    }

    pub fn weight_vector(&self) -> Result<WeightVector> {
        match self.weights {
            WeightsKind::Uniform => WeightVector::uniform(self.n),
            WeightsKind::Random => WeightVector::random(
                self.n,
                self.weight_low,
                self.weight_high,
                &mut stream(self.seed, Purpose::Weights),
            ),
        }
    }

    pub fn schedule(&self) -> Result<MixingSchedule> {
        let r = self.weight_vector()?;
        let schedule = match self.topology {
            TopologyKind::FixedCycle => MixingSchedule::fixed_cycle(r)?,
            TopologyKind::Gossip => MixingSchedule::gossip(r)?,
            TopologyKind::MatrixFile => {
                let path = self.matrix_file.as_ref().expect("validated");
                let mats = matrix_file::read(path)?;
                let window = self.window.unwrap_or(mats.len());
                MixingSchedule::from_sequence(mats, r, window)?
            }
        };
        Ok(match self.window {
            Some(b) => schedule.with_window(b),
            None => schedule,
        })
    }

    pub fn problem(&self) -> Result<RegressionProblem> {
        RegressionProblem::synthesize_with_noise(self.samples, self.d, self.seed, self.noise_width)
    }

    pub fn build(&self) -> Result<Setup> {
        self.validate()?;
        let schedule = self.schedule()?;
        let problem = self.problem()?;
        let part = partition(&problem, schedule.weights(), self.seed)?;
        let pooled = LocalObjective::pooled(&problem)?;
        let experiment = Experiment::new(
            schedule,
            self.noise_model()?,
            part.objectives,
            self.steps()?,
            pooled,
        )?;
        Ok(Setup {
            experiment,
            problem,
            adjusted_agents: part.adjusted,
        })
    }
}

/// A config turned into runnable objects.
#[derive(Debug, Clone)]
pub struct Setup {
    pub experiment: Experiment,
    pub problem: RegressionProblem,
    pub adjusted_agents: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
n = 5
d = 3
samples = 20
topology = "gossip"
noise = "quantizer"
alpha0 = 0.1
nu = 0.25
beta0 = 0.7
mu = 0.75
horizon = 100
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.levels, 4);
        assert_eq!(c.num_runs, 20);
        assert_eq!(c.weights, WeightsKind::Random);
        assert_eq!(c.seed, 0);
        assert!(c.build().is_ok());
    }

    #[test]
    fn round_trips_through_toml_and_manifest_table() {
        let c = ExperimentConfig::reference(TopologyKind::Gossip);
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
        let wrapped = format!("version = \"x\"\n\n[config]\n{text}\n[derived]\nlambda = 1.0\n");
        assert_eq!(ExperimentConfig::parse(&wrapped).unwrap(), c);
    }

    #[test]
    fn named_field_diagnostics() {
        let cases = [
            ("nu = 0.25", "nu = 1.5", "nu"),
            ("beta0 = 0.7", "beta0 = 1.2", "beta0"),
            ("n = 5", "n = 0", "n"),
            ("n = 5", "n = 2", "topology"),
            ("horizon = 100", "horizon = 0", "horizon"),
        ];
        for (from, to, name) in cases {
            match ExperimentConfig::parse(&MINIMAL.replace(from, to)) {
                Err(Error::Config { field, .. }) => assert_eq!(field, name),
                other => panic!("{to}: {other:?}"),
            }
        }
        assert!(ExperimentConfig::parse(&format!("{MINIMAL}bogus = 1\n")).is_err());
        let file = MINIMAL.replace("\"gossip\"", "\"matrix_file\"");
        assert!(matches!(
            ExperimentConfig::parse(&file),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn uppercase_aliases() {
        let text = MINIMAL
            .replace("samples = 20", "N = 20")
            .replace("horizon = 100", "T = 100");
        let c = ExperimentConfig::parse(&text).unwrap();
        assert_eq!((c.samples, c.horizon), (20, 100));
    }
}
