//! Objective functionals over simulation outcomes.

use crate::sim::{Agent, SimResult};
use serde::{Deserialize, Serialize};

/// The three objectives the toolkit optimizes or tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    #[serde(alias = "survival")]
    SurvivalRate,
    #[serde(alias = "welfare")]
    MeanWelfare,
    #[serde(alias = "gini")]
    GiniCoefficient,
}

impl ObjectiveKind {
    /// Survival rate and mean welfare are maximized; Gini is minimized.
    pub fn is_maximized(self) -> bool {
        !matches!(self, ObjectiveKind::GiniCoefficient)
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::SurvivalRate => "survival",
            ObjectiveKind::MeanWelfare => "welfare",
            ObjectiveKind::GiniCoefficient => "gini",
        }
    }

    /// Extract the objective value from a finished run. `None` marks a
    /// degenerate replicate (e.g. Gini of an empty population).
    pub fn evaluate(self, result: &SimResult) -> Option<f64> {
        match self {
            ObjectiveKind::SurvivalRate => Some(survival_rate(result)),
            ObjectiveKind::MeanWelfare => {
                let m = result.steps.last()?.mean_welfare;
                m.is_finite().then_some(m)
            }
            ObjectiveKind::GiniCoefficient => result.steps.last()?.gini,
        }
    }
}

/// Gini coefficient G = sum_ij |w_i - w_j| / (2 n^2 mean(w)), computed in
/// O(n log n) via the sorted-rank identity. Returns `None` for an empty or
/// all-zero list.
pub fn gini(welfares: &[f64]) -> Option<f64> {
    let n = welfares.len();
    if n == 0 {
        return None;
    }
    let total: f64 = welfares.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut sorted = welfares.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, w)| (i + 1) as f64 * w)
        .sum();
    let n_f = n as f64;
    Some((2.0 * weighted / (n_f * total) - (n_f + 1.0) / n_f).max(0.0))
}

/// Fraction of the initial population alive at the end of the run.
pub fn survival_rate(result: &SimResult) -> f64 {
    if result.n_agents_initial == 0 {
        return 0.0;
    }
    result.survivors.len() as f64 / result.n_agents_initial as f64
}

/// Split log pollution-free Cobb-Douglas welfare into its sugar and spice
/// components: ((rho_s/rho_T) ln sugar, (rho_p/rho_T) ln spice). Zero wealth
/// in a good yields -inf for that component.
pub fn welfare_decomposition(agent: &Agent) -> (f64, f64) {
    let rho_t = agent.sugar_metabolism + agent.spice_metabolism;
    (
        agent.sugar_metabolism / rho_t * agent.sugar_wealth.ln(),
        agent.spice_metabolism / rho_t * agent.spice_wealth.ln(),
    )
}
