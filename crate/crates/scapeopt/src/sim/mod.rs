//! Sugarscape-with-pollution simulator.
//!
//! A lattice of cells carries two regrowing resources (sugar and spice) plus
//! a pollution stock. Agents move by welfare maximization, harvest, trade
//! with neighbors at the geometric-mean-of-MRS price, and consume according
//! to their metabolisms. Sugar is the dirty good: both harvesting and
//! consuming it add pollution to the cell where it happens, at rate beta.
//! Four policy levers modify the baseline rules: a pollution-triggered
//! production cap on sugar, a spice reinvestment subsidy when the cap binds,
//! a trade tax on the sugar price, and a consumption tax rebated as spice.
//!
//! A run is deterministic given (policy, state, params, seed).

mod landscape;
mod step;

pub use landscape::init_landscape;
pub use step::{consume, harvest, run_simulation, step_move, trade, TradeExec};

use crate::error::{Error, Result};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One lattice cell: current stocks, capacities, and accumulated pollution.
///
/// Pollution only ever increases; there is no decay or diffusion rule.
#[derive(Debug, Clone, Default)]
pub struct GridCell {
    pub sugar: f64,
    pub spice: f64,
    pub sugar_capacity: f64,
    pub spice_capacity: f64,
    pub pollution: f64,
}

/// The full lattice plus an occupancy index (agent id per cell).
#[derive(Debug, Clone)]
pub struct Landscape {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<GridCell>,
    occupancy: Vec<Option<usize>>,
}

impl Landscape {
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn cell(&self, x: usize, y: usize) -> &GridCell {
        &self.cells[y * self.width + x]
    }

    pub fn cell_mut(&mut self, x: usize, y: usize) -> &mut GridCell {
        &mut self.cells[y * self.width + x]
    }

    pub fn occupant(&self, x: usize, y: usize) -> Option<usize> {
        self.occupancy[y * self.width + x]
    }

    pub fn set_occupant(&mut self, x: usize, y: usize, agent: Option<usize>) {
        let idx = y * self.width + x;
        self.occupancy[idx] = agent;
    }

    pub fn total_pollution(&self) -> f64 {
        self.cells.iter().map(|c| c.pollution).sum()
    }

    pub fn total_sugar(&self) -> f64 {
        self.cells.iter().map(|c| c.sugar).sum()
    }

    pub fn total_spice(&self) -> f64 {
        self.cells.iter().map(|c| c.spice).sum()
    }

    /// Von Neumann neighbors of (x, y), staying on the lattice.
    pub fn neighbors(&self, x: usize, y: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4);
        if x > 0 {
            out.push((x - 1, y));
        }
        if x + 1 < self.width {
            out.push((x + 1, y));
        }
        if y > 0 {
            out.push((x, y - 1));
        }
        if y + 1 < self.height {
            out.push((x, y + 1));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: usize,
    pub x: usize,
    pub y: usize,
    pub sugar_wealth: f64,
    pub spice_wealth: f64,
    pub sugar_metabolism: f64,
    pub spice_metabolism: f64,
    pub vision: usize,
    pub alive: bool,
}

/// Decision variables x of the black box f(x, theta).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyVector {
    /// Fraction of the sugar price paid on top by the buyer and destroyed.
    pub trade_tax: f64,
    /// Fraction of sugar metabolism paid extra and rebated 1:1 as spice.
    pub consumption_tax: f64,
    /// Cell pollution threshold above which sugar cannot be harvested.
    /// `f64::INFINITY` means the cap is unbounded (no policy).
    pub production_cap: f64,
    /// Spice granted to an agent whose sugar harvest was blocked by the cap.
    pub reinvestment: f64,
}

impl PolicyVector {
    /// The no-policy baseline: zero taxes, unbounded cap.
    pub fn none() -> Self {
        PolicyVector {
            trade_tax: 0.0,
            consumption_tax: 0.0,
            production_cap: f64::INFINITY,
            reinvestment: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.trade_tax) {
            return Err(Error::Config(format!(
                "trade_tax must be in [0, 1], got {}",
                self.trade_tax
            )));
        }
        if !(0.0..=1.0).contains(&self.consumption_tax) {
            return Err(Error::Config(format!(
                "consumption_tax must be in [0, 1], got {}",
                self.consumption_tax
            )));
        }
        if self.production_cap < 0.0 || self.production_cap.is_nan() {
            return Err(Error::Config(format!(
                "production_cap must be non-negative, got {}",
                self.production_cap
            )));
        }
        if self.reinvestment < 0.0 {
            return Err(Error::Config(format!(
                "reinvestment must be non-negative, got {}",
                self.reinvestment
            )));
        }
        Ok(())
    }
}

/// State (moderator) variables theta of the black box f(x, theta).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    /// Pollution added per unit of sugar harvested or consumed.
    pub pollution_rate: f64,
    /// Lowest possible initial endowment of each resource.
    pub endowment_min: u32,
    /// Highest possible metabolism of each resource.
    pub metabolism_max: u32,
}

impl Default for StateVector {
    fn default() -> Self {
        StateVector {
            pollution_rate: 0.2,
            endowment_min: 5,
            metabolism_max: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub n_agents: usize,
    pub n_steps: usize,
    pub width: usize,
    pub height: usize,
    pub endowment_max: u32,
    pub vision_max: u32,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            n_agents: 200,
            n_steps: 500,
            width: 50,
            height: 50,
            endowment_max: 25,
            vision_max: 5,
        }
    }
}

impl SimParams {
    /// Shrunk configuration for fast local experiments.
    pub fn desk_scale() -> Self {
        SimParams {
            n_agents: 100,
            n_steps: 200,
            width: 25,
            height: 25,
            ..SimParams::default()
        }
    }

    pub fn validate(&self, state: &StateVector) -> Result<()> {
        if self.width < 10 || self.height < 10 {
            return Err(Error::Config(format!(
                "grid must be at least 10x10, got {}x{}",
                self.width, self.height
            )));
        }
        if self.n_agents > self.width * self.height {
            return Err(Error::Config(format!(
                "{} agents cannot fit on a {}x{} grid",
                self.n_agents, self.width, self.height
            )));
        }
        if state.endowment_min > self.endowment_max {
            return Err(Error::Config(format!(
                "endowment_min {} exceeds endowment_max {}",
                state.endowment_min, self.endowment_max
            )));
        }
        if state.metabolism_max < 1 {
            return Err(Error::Config("metabolism_max must be >= 1".into()));
        }
        if self.vision_max < 1 {
            return Err(Error::Config("vision_max must be >= 1".into()));
        }
        if state.pollution_rate < 0.0 {
            return Err(Error::Config(format!(
                "pollution_rate must be non-negative, got {}",
                state.pollution_rate
            )));
        }
        Ok(())
    }
}

/// Metrics recorded at each step boundary (step 0 is the initial state).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub n_alive: usize,
    pub mean_welfare: f64,
    pub median_welfare: f64,
    /// `None` when the surviving population is empty or has zero welfare.
    pub gini: Option<f64>,
    /// Population mean of the log-sugar welfare component (survivors with
    /// positive wealth in both goods).
    pub log_sugar_component: f64,
    pub log_spice_component: f64,
    pub total_pollution: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub n_agents_initial: usize,
    pub steps: Vec<StepRecord>,
    /// Agents alive at the end of the run, with their final cell pollution.
    pub survivors: Vec<(Agent, f64)>,
}

/// Cobb-Douglas welfare discounted by one plus local pollution:
/// W = (sugar^(rho_s/rho_T) * spice^(rho_p/rho_T)) / (1 + pollution).
pub fn welfare(agent: &Agent, cell_pollution: f64) -> f64 {
    welfare_of(
        agent.sugar_wealth,
        agent.spice_wealth,
        agent.sugar_metabolism,
        agent.spice_metabolism,
        cell_pollution,
    )
}

pub(crate) fn welfare_of(
    sugar: f64,
    spice: f64,
    rho_s: f64,
    rho_p: f64,
    pollution: f64,
) -> f64 {
    if sugar <= 0.0 || spice <= 0.0 {
        return 0.0;
    }
    let rho_t = rho_s + rho_p;
    sugar.powf(rho_s / rho_t) * spice.powf(rho_p / rho_t) / (1.0 + pollution)
}

/// Marginal rate of substitution in time-to-death form:
/// (spice / rho_p) / (sugar / rho_s). Zero sugar wealth yields +inf.
pub fn mrs(agent: &Agent) -> f64 {
    if agent.sugar_wealth <= 0.0 {
        return f64::INFINITY;
    }
    (agent.spice_wealth / agent.spice_metabolism) / (agent.sugar_wealth / agent.sugar_metabolism)
}

/// Place `n_agents` on distinct random cells with uniform-integer draws for
/// endowments, metabolisms, and vision.
pub fn init_agents(
    params: &SimParams,
    state: &StateVector,
    landscape: &mut Landscape,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Agent>> {
    params.validate(state)?;
    let n_cells = landscape.width * landscape.height;
    let positions = sample(rng, n_cells, params.n_agents);
    let mut agents = Vec::with_capacity(params.n_agents);
    for (id, cell_idx) in positions.iter().enumerate() {
        let x = cell_idx % landscape.width;
        let y = cell_idx / landscape.width;
        let agent = Agent {
            id,
            x,
            y,
            sugar_wealth: rng.random_range(state.endowment_min..=params.endowment_max) as f64,
            spice_wealth: rng.random_range(state.endowment_min..=params.endowment_max) as f64,
            sugar_metabolism: rng.random_range(1..=state.metabolism_max) as f64,
            spice_metabolism: rng.random_range(1..=state.metabolism_max) as f64,
            vision: rng.random_range(1..=params.vision_max) as usize,
            alive: true,
        };
        landscape.set_occupant(x, y, Some(id));
        agents.push(agent);
    }
    Ok(agents)
}
