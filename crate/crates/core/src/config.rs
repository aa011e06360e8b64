//! Experiment configuration (TOML).
//!
//! Every field is required and unknown fields are rejected. The `[custom]`
//! table is required exactly when `example = "custom"`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::barrier::{Barrier, BarrierCandidate, ExactValue, Wrapper};
use crate::error::{Error, Result};
use crate::instances::{ExampleKind, StrategyParams};
use crate::model::GameModel;
use crate::net::{Activation, MlpConfig, SurrogateValue};
use crate::optim::LbfgsConfig;
use crate::ptp::PredefinedTimeParams;
use crate::simulator::SimConfig;
use crate::trainer::{IndicatorMode, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleId {
    Bounded,
    Unbounded,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredefinedTimeSection {
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub settling_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    pub wrapper: Wrapper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    pub mu0: f64,
    pub growth: f64,
    pub outer_iterations: usize,
    pub collocation_points: usize,
    pub margin: f64,
    pub memory: usize,
    pub max_inner_iterations: usize,
    pub gradient_tolerance: f64,
    pub indicator: IndicatorMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub step: f64,
    pub horizon: f64,
    pub stop_norm: f64,
    pub boundary_guard: f64,
}

/// Built-in dynamics and cost structure with user-chosen weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSection {
    pub base: ExampleKind,
    /// Row-major `R_u`.
    pub control_weight: Vec<Vec<f64>>,
    /// Row-major `R_a`.
    pub adversary_weight: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub example: ExampleId,
    pub gamma1: f64,
    pub gamma2: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub predefined_time: PredefinedTimeSection,
    pub network: NetworkSection,
    pub trainer: TrainerSection,
    pub simulation: SimulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomSection>,
}

fn to_config(e: Error) -> Error {
    match e {
        Error::Domain(m) | Error::Numeric(m) => Error::Config(m),
        other => other,
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n != 2 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::config(format!("{name} must be a 2x2 matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Cross-field checks; each error names the violated constraint.
    pub fn validate(&self) -> Result<()> {
        StrategyParams::new(self.gamma1, self.gamma2)?;
        self.predefined_time()?;
        self.train_config()?.validate()?;
        self.sim_config().validate()?;
        MlpConfig::validate(&self.mlp_config())?;
        match (self.example, &self.custom) {
            (ExampleId::Custom, None) => {
                return Err(Error::config("example = \"custom\" requires a [custom] table"))
            }
            (ExampleId::Custom, Some(_)) => {}
            (_, Some(_)) => return Err(Error::config("[custom] is only allowed with example = \"custom\"")),
            (_, None) => {}
        }
        self.model()?;
        Ok(())
    }

    pub fn base_kind(&self) -> ExampleKind {
        match self.example {
            ExampleId::Bounded => ExampleKind::Bounded,
            ExampleId::Unbounded => ExampleKind::Unbounded,
            ExampleId::Custom => self.custom.as_ref().map_or(ExampleKind::Bounded, |c| c.base),
        }
    }

    pub fn strategy_params(&self) -> Result<StrategyParams> {
        StrategyParams::new(self.gamma1, self.gamma2)
    }

    pub fn predefined_time(&self) -> Result<PredefinedTimeParams> {
        let s = &self.predefined_time;
        PredefinedTimeParams::new(s.alpha, s.beta, s.p, s.q, s.r, s.settling_time).map_err(to_config)
    }

    pub fn model(&self) -> Result<GameModel> {
        let kind = self.base_kind();
        let params = self.strategy_params()?;
        match &self.custom {
            None => kind.model(params),
            Some(c) => kind
                .model_with_weights(
                    params,
                    matrix("control_weight", &c.control_weight)?,
                    matrix("adversary_weight", &c.adversary_weight)?,
                )
                .map_err(to_config),
        }
    }

    /// Exact value function, when the example has one.
    pub fn exact_value(&self) -> Result<ExactValue> {
        match self.example {
            ExampleId::Custom => Err(Error::Unsupported(
                "the custom example has no closed-form value function".into(),
            )),
            _ => Ok(ExactValue::new(self.base_kind())),
        }
    }

    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            input_dim: 2,
            hidden_layers: self.network.hidden_layers,
            hidden_width: self.network.hidden_width,
            activation: self.network.activation,
            init_seed: self.seed,
        }
    }

    pub fn surrogate(&self) -> Result<SurrogateValue> {
        SurrogateValue::new(
            self.mlp_config(),
            BarrierCandidate {
                barrier: Barrier::for_example(self.base_kind()),
                wrapper: self.network.wrapper,
            },
        )
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.trainer;
        let cfg = TrainConfig {
            mu0: t.mu0,
            growth: t.growth,
            outer_iterations: t.outer_iterations,
            collocation_points: t.collocation_points,
            margin: t.margin,
            indicator: t.indicator,
            inner: LbfgsConfig {
                memory: t.memory,
                max_iterations: t.max_inner_iterations,
                gradient_tolerance: t.gradient_tolerance,
                ..LbfgsConfig::default()
            },
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            step: s.step,
            horizon: s.horizon,
            stop_norm: s.stop_norm,
            boundary_guard: s.boundary_guard,
        }
    }

    /// Defaults for a built-in example: `gamma1 = 0.5`, `gamma2 = 1.5`, the
    /// matching rate parameters, a 3x32 tanh surrogate and 2000 collocation
    /// points with `s(x) >= 0.2`. Smaller margins let the few points next to
    /// the boundary, where the residual grows like `s^-4`, dominate the loss.
    pub fn desk_scale(kind: ExampleKind, seed: u64) -> Self {
        let (g1, g2) = (0.5f64, 1.5f64);
        let ptp = PredefinedTimeParams::from_strategy_exponents(g1, g2).expect("valid defaults");
        Self {
            example: match kind {
                ExampleKind::Bounded => ExampleId::Bounded,
                ExampleKind::Unbounded => ExampleId::Unbounded,
            },
            gamma1: g1,
            gamma2: g2,
            seed,
            output_dir: PathBuf::from(format!("out/{}", kind.name())),
            predefined_time: PredefinedTimeSection {
                alpha: ptp.alpha(),
                beta: ptp.beta(),
                p: ptp.p(),
                q: ptp.q(),
                r: ptp.r(),
                settling_time: 3.4259,
            },
            network: NetworkSection {
                hidden_layers: 3,
                hidden_width: 32,
                activation: Activation::Tanh,
                wrapper: Wrapper::for_example(kind),
            },
            trainer: TrainerSection {
                mu0: 1e-4,
                growth: 2.0,
                outer_iterations: 10,
                collocation_points: 2000,
                margin: 0.2,
                memory: 10,
                max_inner_iterations: 500,
                gradient_tolerance: 1e-9,
                indicator: IndicatorMode::Current,
            },
            simulation: SimulationSection {
                step: 1e-3,
                horizon: 3.4259,
                stop_norm: 1e-8,
                boundary_guard: 1e-6,
            },
            custom: None,
        }
    }
}
