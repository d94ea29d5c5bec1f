//! Experiment orchestration: evaluates the black-box objective
//! f(x, theta) = Psi{G(x, theta)} as a replicate ensemble of simulation
//! runs, and wires the evaluated designs into the sensitivity test.
//!
//! Seed derivation is auditable and collision-free at experiment scale:
//! replicate i of a design point uses `seed_base + i`, and design point j of
//! an experiment uses `master_seed + j * 1_000_000`. Replicates run in
//! parallel but are aggregated in fixed index order, so parallel and serial
//! execution produce bitwise-identical records.

use crate::design::{latin_hypercube, Bounds};
use crate::error::{Error, Result};
use crate::gp::FitConfig;
use crate::metrics::ObjectiveKind;
use crate::sensitivity::{sensitivity_test, SensitivityReport};
use crate::sim::{run_simulation, PolicyVector, SimParams, StateVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Seed stride between design points.
pub const DESIGN_POINT_SEED_STRIDE: u64 = 1_000_000;

/// Functional mapping the replicate distribution onto a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PsiKind {
    #[default]
    Mean,
    /// Empirical 5% quantile of the replicate values.
    Quantile5,
}

impl PsiKind {
    fn apply(self, values: &[f64]) -> f64 {
        match self {
            PsiKind::Mean => values.iter().sum::<f64>() / values.len() as f64,
            PsiKind::Quantile5 => {
                let mut sorted = values.to_vec();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let idx = ((sorted.len() - 1) as f64 * 0.05).round() as usize;
                sorted[idx]
            }
        }
    }
}

/// One evaluated design point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub policy: PolicyVector,
    pub state: StateVector,
    pub objective: ObjectiveKind,
    /// Per-replicate metric values, valid replicates only, in seed order.
    pub values: Vec<f64>,
    /// `None` when more than half the replicates were degenerate.
    pub psi: Option<f64>,
    pub replicates: usize,
    pub dropped: usize,
    pub seed_base: u64,
}

impl ExperimentRecord {
    /// Psi oriented for minimization: maximized objectives are negated.
    pub fn psi_minimized(&self) -> Option<f64> {
        self.psi
            .map(|v| if self.objective.is_maximized() { -v } else { v })
    }
}

/// Evaluate several objectives on one shared replicate ensemble: R
/// independent runs with seeds `seed_base .. seed_base + R`, one metric
/// extraction per objective per run. Degenerate replicates (for example a
/// Gini over an empty population) are dropped per objective; a record whose
/// drop fraction exceeds one half is marked degenerate (`psi = None`).
pub fn evaluate_objectives(
    policy: &PolicyVector,
    state: &StateVector,
    params: &SimParams,
    kinds: &[ObjectiveKind],
    psi: PsiKind,
    replicates: usize,
    seed_base: u64,
) -> Result<Vec<ExperimentRecord>> {
    if replicates < 1 {
        return Err(Error::Config("replicate count must be at least 1".into()));
    }
    let per_run: Vec<Vec<Option<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let result = run_simulation(policy, state, params, seed_base + i as u64)?;
            Ok(kinds.iter().map(|k| k.evaluate(&result)).collect())
        })
        .collect::<Result<_>>()?;

    Ok(kinds
        .iter()
        .enumerate()
        .map(|(ki, &kind)| {
            // fixed index order regardless of the parallel schedule
            let values: Vec<f64> = per_run.iter().filter_map(|row| row[ki]).collect();
            let dropped = replicates - values.len();
            let psi_value =
                (!values.is_empty() && dropped * 2 <= replicates).then(|| psi.apply(&values));
            ExperimentRecord {
                policy: policy.clone(),
                state: state.clone(),
                objective: kind,
                values,
                psi: psi_value,
                replicates,
                dropped,
                seed_base,
            }
        })
        .collect())
}

/// Single-objective convenience wrapper around [`evaluate_objectives`].
pub fn evaluate_objective(
    policy: &PolicyVector,
    state: &StateVector,
    params: &SimParams,
    kind: ObjectiveKind,
    psi: PsiKind,
    replicates: usize,
    seed_base: u64,
) -> Result<ExperimentRecord> {
    Ok(evaluate_objectives(policy, state, params, &[kind], psi, replicates, seed_base)?
        .pop()
        .expect("one record per objective"))
}

/// Decision-space box for the three optimized policy levers:
/// trade tax in [0, 1], consumption tax in [0, 1], production cap in [6, 15].
pub fn policy_bounds() -> Bounds {
    Bounds::new(vec![(0.0, 1.0), (0.0, 1.0), (6.0, 15.0)]).expect("static bounds")
}

/// Map a decision vector [trade_tax, consumption_tax, production_cap] to a
/// policy, with the reinvestment subsidy held fixed.
pub fn policy_from_vec(x: &[f64], reinvestment: f64) -> Result<PolicyVector> {
    if x.len() != 3 {
        return Err(Error::DimMismatch {
            expected: 3,
            got: x.len(),
        });
    }
    let policy = PolicyVector {
        trade_tax: x[0],
        consumption_tax: x[1],
        production_cap: x[2],
        reinvestment,
    };
    policy.validate()?;
    Ok(policy)
}

/// The state variables the additivity test can single out, with their
/// tested ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateVariable {
    PollutionRate,
    EndowmentMin,
    MetabolismMax,
}

impl StateVariable {
    pub fn name(self) -> &'static str {
        match self {
            StateVariable::PollutionRate => "pollution_rate",
            StateVariable::EndowmentMin => "endowment_min",
            StateVariable::MetabolismMax => "metabolism_max",
        }
    }

    pub fn range(self) -> (f64, f64) {
        match self {
            StateVariable::PollutionRate => (0.05, 0.5),
            StateVariable::EndowmentMin => (1.0, 20.0),
            StateVariable::MetabolismMax => (1.0, 6.0),
        }
    }

    /// Substitute the coordinate into a base state vector. Integer-valued
    /// variables are rounded.
    pub fn apply(self, base: &StateVector, value: f64) -> StateVector {
        let mut state = base.clone();
        match self {
            StateVariable::PollutionRate => state.pollution_rate = value,
            StateVariable::EndowmentMin => state.endowment_min = value.round().max(1.0) as u32,
            StateVariable::MetabolismMax => state.metabolism_max = value.round().max(1.0) as u32,
        }
        state
    }
}

/// Outcome of one additivity test within an experiment.
#[derive(Debug, Clone)]
pub struct SensitivityOutcome {
    pub objective: ObjectiveKind,
    pub state_variable: StateVariable,
    pub report: SensitivityReport,
}

/// Parameters of a sensitivity experiment.
#[derive(Debug, Clone)]
pub struct SensitivityExperiment {
    pub objectives: Vec<ObjectiveKind>,
    pub state_variable: StateVariable,
    /// Number of design points; n = 10 (d + p) = 40 is the sizing rule.
    pub n_points: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub psi: PsiKind,
    pub reinvestment: f64,
}

/// Run Algorithm "sensitivity testing": a Latin hypercube over the joint
/// (policy, state-variable) box, a replicate-ensemble objective evaluation
/// at each point, then the likelihood-ratio additivity test per objective.
pub fn sensitivity_experiment(
    exp: &SensitivityExperiment,
    base_state: &StateVector,
    params: &SimParams,
    fit: &FitConfig,
    master_seed: u64,
) -> Result<Vec<SensitivityOutcome>> {
    let d = 3;
    let mut dims = policy_bounds().0;
    dims.push(exp.state_variable.range());
    let bounds = Bounds::new(dims)?;

    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let design = latin_hypercube(exp.n_points, &bounds, &mut rng)?;

    let mut records: Vec<Vec<ExperimentRecord>> = Vec::with_capacity(design.len());
    for (j, point) in design.iter().enumerate() {
        let policy = policy_from_vec(&point[..3], exp.reinvestment)?;
        let state = exp.state_variable.apply(base_state, point[3]);
        let seed_base = master_seed + j as u64 * DESIGN_POINT_SEED_STRIDE;
        records.push(evaluate_objectives(
            &policy,
            &state,
            params,
            &exp.objectives,
            exp.psi,
            exp.replicates,
            seed_base,
        )?);
    }

    let mut outcomes = Vec::with_capacity(exp.objectives.len());
    for (ki, &kind) in exp.objectives.iter().enumerate() {
        // drop design points that came back degenerate for this objective
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (point, recs) in design.iter().zip(&records) {
            if let Some(psi) = recs[ki].psi {
                xs.push(point.clone());
                ys.push(psi);
            }
        }
        if xs.len() < 2 * (d + 1) {
            return Err(Error::Degenerate(format!(
                "objective {}: only {} of {} design points evaluable",
                kind.name(),
                xs.len(),
                design.len()
            )));
        }
        let report = sensitivity_test(&xs, &ys, &bounds, d, 1, exp.alpha, fit, master_seed)?;
        outcomes.push(SensitivityOutcome {
            objective: kind,
            state_variable: exp.state_variable,
            report,
        });
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_params() -> SimParams {
        SimParams {
            n_agents: 40,
            n_steps: 30,
            width: 15,
            height: 15,
            ..SimParams::default()
        }
    }

    #[test]
    fn single_replicate_psi_is_run_metric() {
        let rec = evaluate_objective(
            &PolicyVector::none(),
            &StateVector::default(),
            &desk_params(),
            ObjectiveKind::SurvivalRate,
            PsiKind::Mean,
            1,
            77,
        )
        .unwrap();
        assert_eq!(rec.values.len(), 1);
        assert_eq!(rec.psi, Some(rec.values[0]));
    }

    #[test]
    fn psi_mean_of_values() {
        assert_eq!(PsiKind::Mean.apply(&[0.1, 0.2, 0.3]), 0.20000000000000004);
        assert!((PsiKind::Mean.apply(&[0.1, 0.2, 0.3]) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn replicate_prefix_stable_under_larger_budget() {
        let policy = PolicyVector::none();
        let state = StateVector::default();
        let params = desk_params();
        let small = evaluate_objective(
            &policy, &state, &params, ObjectiveKind::MeanWelfare, PsiKind::Mean, 3, 500,
        )
        .unwrap();
        let large = evaluate_objective(
            &policy, &state, &params, ObjectiveKind::MeanWelfare, PsiKind::Mean, 6, 500,
        )
        .unwrap();
        assert_eq!(small.values[..], large.values[..3]);
    }

    #[test]
    fn parallel_matches_serial_bitwise() {
        let policy = PolicyVector::none();
        let state = StateVector::default();
        let params = desk_params();
        let a = evaluate_objective(
            &policy, &state, &params, ObjectiveKind::GiniCoefficient, PsiKind::Mean, 8, 42,
        )
        .unwrap();
        // a single-thread pool forces a serial schedule
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| {
            evaluate_objective(
                &policy, &state, &params, ObjectiveKind::GiniCoefficient, PsiKind::Mean, 8, 42,
            )
        })
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn minimized_orientation_negates_maximized_objectives() {
        let rec = evaluate_objective(
            &PolicyVector::none(),
            &StateVector::default(),
            &desk_params(),
            ObjectiveKind::SurvivalRate,
            PsiKind::Mean,
            2,
            5,
        )
        .unwrap();
        assert_eq!(rec.psi_minimized(), rec.psi.map(|v| -v));
    }

    #[test]
    fn policy_vec_roundtrip_and_validation() {
        let p = policy_from_vec(&[0.2, 0.4, 9.0], 0.5).unwrap();
        assert_eq!(p.trade_tax, 0.2);
        assert_eq!(p.production_cap, 9.0);
        assert!(policy_from_vec(&[1.5, 0.0, 9.0], 0.5).is_err());
        assert!(policy_from_vec(&[0.1, 0.1], 0.5).is_err());
    }

    #[test]
    fn state_variable_apply() {
        let base = StateVector::default();
        let s = StateVariable::PollutionRate.apply(&base, 0.35);
        assert_eq!(s.pollution_rate, 0.35);
        let s = StateVariable::EndowmentMin.apply(&base, 7.4);
        assert_eq!(s.endowment_min, 7);
        let s = StateVariable::MetabolismMax.apply(&base, 2.6);
        assert_eq!(s.metabolism_max, 3);
    }
}
