//! TOML experiment configuration.
//!
//! The schema is versioned and closed: a `schema_version` other than the one
//! this build understands, or any unrecognized key, is a hard error rather
//! than a silently ignored typo.

use crate::error::{Error, Result};
use crate::metrics::ObjectiveKind;
use crate::runner::{PsiKind, StateVariable};
use crate::sim::{PolicyVector, SimParams, StateVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub optimization: OptimizationSection,
    #[serde(default)]
    pub sensitivity: SensitivitySection,
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub n_agents: usize,
    pub n_steps: usize,
    pub width: usize,
    pub height: usize,
    pub endowment_max: u32,
    pub vision_max: u32,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let p = SimParams::default();
        SimulationSection {
            n_agents: p.n_agents,
            n_steps: p.n_steps,
            width: p.width,
            height: p.height,
            endowment_max: p.endowment_max,
            vision_max: p.vision_max,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateSection {
    pub pollution_rate: f64,
    pub endowment_min: u32,
    pub metabolism_max: u32,
}

impl Default for StateSection {
    fn default() -> Self {
        let s = StateVector::default();
        StateSection {
            pollution_rate: s.pollution_rate,
            endowment_min: s.endowment_min,
            metabolism_max: s.metabolism_max,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub trade_tax: f64,
    pub consumption_tax: f64,
    /// Absent means an unbounded cap (no production policy).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub production_cap: Option<f64>,
    pub reinvestment: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            trade_tax: 0.0,
            consumption_tax: 0.0,
            production_cap: None,
            reinvestment: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizationSection {
    /// Initial space-filling design size m.
    pub initial_design: usize,
    /// Total evaluation budget M (initial design included).
    pub budget: usize,
    pub replicates: usize,
    pub psi: PsiKind,
    pub objective: ObjectiveKind,
}

impl Default for OptimizationSection {
    fn default() -> Self {
        OptimizationSection {
            initial_design: 5,
            budget: 100,
            replicates: 20,
            psi: PsiKind::Mean,
            objective: ObjectiveKind::MeanWelfare,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivitySection {
    /// Design size n; the 10 (d + p) sizing rule gives 40 for d = 3, p = 1.
    pub n_points: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub state_variable: StateVariable,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        SensitivitySection {
            n_points: 40,
            replicates: 20,
            alpha: 0.05,
            state_variable: StateVariable::PollutionRate,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: default_seed(),
            simulation: SimulationSection::default(),
            state: StateSection::default(),
            policy: PolicySection::default(),
            optimization: OptimizationSection::default(),
            sensitivity: SensitivitySection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (this build understands {})",
                self.schema_version, SCHEMA_VERSION
            )));
        }
        if self.optimization.initial_design < 2 {
            return Err(Error::Config("initial_design must be at least 2".into()));
        }
        if self.optimization.budget < self.optimization.initial_design {
            return Err(Error::Config(format!(
                "budget {} is smaller than the initial design {}",
                self.optimization.budget, self.optimization.initial_design
            )));
        }
        if self.sensitivity.n_points < 2 {
            return Err(Error::Config("sensitivity n_points must be at least 2".into()));
        }
        if !(0.0 < self.sensitivity.alpha && self.sensitivity.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must be in (0, 1), got {}",
                self.sensitivity.alpha
            )));
        }
        self.policy()?.validate()?;
        self.sim_params().validate(&self.state_vector())
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            n_agents: self.simulation.n_agents,
            n_steps: self.simulation.n_steps,
            width: self.simulation.width,
            height: self.simulation.height,
            endowment_max: self.simulation.endowment_max,
            vision_max: self.simulation.vision_max,
        }
    }

    pub fn state_vector(&self) -> StateVector {
        StateVector {
            pollution_rate: self.state.pollution_rate,
            endowment_min: self.state.endowment_min,
            metabolism_max: self.state.metabolism_max,
        }
    }

    pub fn policy(&self) -> Result<PolicyVector> {
        let policy = PolicyVector {
            trade_tax: self.policy.trade_tax,
            consumption_tax: self.policy.consumption_tax,
            production_cap: self.policy.production_cap.unwrap_or(f64::INFINITY),
            reinvestment: self.policy.reinvestment,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Shrink the simulation block to the fast desk-scale preset.
    pub fn apply_desk_scale(&mut self) {
        let p = SimParams::desk_scale();
        self.simulation.n_agents = p.n_agents;
        self.simulation.n_steps = p.n_steps;
        self.simulation.width = p.width;
        self.simulation.height = p.height;
    }
}
