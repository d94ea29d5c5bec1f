//! Sequential Expected-Improvement Bayesian optimization (minimization),
//! plus a random-search baseline with identical bookkeeping.

use crate::design::{latin_hypercube, Bounds};
use crate::error::{Error, Result};
use crate::gp::adam::{adam_maximize, AdamConfig};
use crate::gp::{fit_ml, FitConfig, FittedGp, KernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// One evaluated point of a sequential run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoRecord {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub value: f64,
    pub best_so_far: f64,
}

/// Full trajectory of a BO or random-search run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoHistory {
    pub records: Vec<BoRecord>,
    pub best_x: Vec<f64>,
    pub best_value: f64,
}

impl BoHistory {
    fn push(&mut self, x: Vec<f64>, value: f64) {
        if value < self.best_value {
            self.best_value = value;
            self.best_x = x.clone();
        }
        self.records.push(BoRecord {
            iteration: self.records.len(),
            x,
            value,
            best_so_far: self.best_value,
        });
    }
}

/// Expected improvement below `f_min` for a Gaussian prediction:
/// EI = Phi(u) (f_min - mean) + phi(u) sd, u = (f_min - mean)/sd. With a
/// vanishing sd this degenerates to max(f_min - mean, 0).
pub fn expected_improvement(mean: f64, sd: f64, f_min: f64) -> f64 {
    if sd <= 1e-12 {
        return (f_min - mean).max(0.0);
    }
    let normal = Normal::standard();
    let u = (f_min - mean) / sd;
    normal.cdf(u) * (f_min - mean) + normal.pdf(u) * sd
}

/// EI at a natural-units point of a fitted surrogate.
pub fn expected_improvement_at(gp: &FittedGp, x: &[f64], f_min: f64) -> Result<f64> {
    let (mean, sd) = gp.predict(x)?;
    Ok(expected_improvement(mean, sd, f_min))
}

/// EI and its gradient with respect to unit-cube coordinates.
fn ei_with_grad(gp: &FittedGp, x_natural: &[f64], f_min: f64) -> Result<(f64, Vec<f64>)> {
    let pred = gp.predict_grad(x_natural)?;
    if pred.sd <= 1e-12 {
        let v = (f_min - pred.mean).max(0.0);
        let grad = if v > 0.0 {
            pred.dmean.iter().map(|g| -g).collect()
        } else {
            vec![0.0; pred.dmean.len()]
        };
        return Ok((v, grad));
    }
    let normal = Normal::standard();
    let u = (f_min - pred.mean) / pred.sd;
    let (cdf, pdf) = (normal.cdf(u), normal.pdf(u));
    let value = cdf * (f_min - pred.mean) + pdf * pred.sd;
    // dEI = -Phi(u) dmean + phi(u) dsd
    let grad = pred
        .dmean
        .iter()
        .zip(&pred.dsd)
        .map(|(dm, ds)| -cdf * dm + pdf * ds)
        .collect();
    Ok((value, grad))
}

/// Maximize EI by multi-start gradient ascent in the unit cube: 10 uniform
/// starts plus 10 perturbations of the incumbent best, clipped to bounds.
/// Falls back to a uniform-random point on an all-zero EI landscape.
pub fn propose_next(
    gp: &FittedGp,
    bounds: &Bounds,
    f_min: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let d = bounds.dim();
    let incumbent_unit = gp
        .train_values()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| gp.train_unit_inputs()[i].clone())
        .unwrap_or_else(|| vec![0.5; d]);

    let mut starts = Vec::with_capacity(20);
    for _ in 0..10 {
        starts.push((0..d).map(|_| rng.random::<f64>()).collect::<Vec<f64>>());
    }
    for _ in 0..10 {
        starts.push(
            incumbent_unit
                .iter()
                .map(|v| (v + 0.1 * (rng.random::<f64>() * 2.0 - 1.0)).clamp(0.0, 1.0))
                .collect(),
        );
    }

    let adam_cfg = AdamConfig {
        iterations: 200,
        step: 0.05,
        ..AdamConfig::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in &starts {
        let objective = |unit: &[f64]| {
            let mut clipped: Vec<f64> = unit.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            bounds.clip(&mut clipped); // no-op in unit coords, kept for clarity of intent
            let natural = bounds.denormalize(&clipped);
            match ei_with_grad(gp, &natural, f_min) {
                Ok((v, g)) => (v, g),
                Err(_) => (f64::NEG_INFINITY, vec![0.0; unit.len()]),
            }
        };
        let (unit, value) = adam_maximize(objective, start, &adam_cfg);
        let unit: Vec<f64> = unit.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, unit));
        }
    }

    let (best_ei, unit) = best.expect("at least one start");
    if !(best_ei > 1e-16) {
        // flat acquisition: fall back to exploration
        let unit: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        return Ok(bounds.denormalize(&unit));
    }
    Ok(bounds.denormalize(&unit))
}

/// Value assigned to a failed or degenerate objective evaluation: the worst
/// observed value so far plus one standard deviation of the observations.
fn penalty(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let worst = values.iter().cloned().fold(f64::MIN, f64::max);
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    worst + sd
}

fn evaluate_initial_design(
    objective: &mut dyn FnMut(&[f64]) -> Option<f64>,
    bounds: &Bounds,
    m: usize,
    history: &mut BoHistory,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let design = latin_hypercube(m, bounds, rng)?;
    let mut pending: Vec<Vec<f64>> = Vec::new();
    for x in design {
        match objective(&x) {
            Some(v) => history.push(x, v),
            None => pending.push(x),
        }
    }
    if history.records.is_empty() {
        return Err(Error::Degenerate(
            "every initial design point failed to evaluate".into(),
        ));
    }
    let values: Vec<f64> = history.records.iter().map(|r| r.value).collect();
    let pen = penalty(&values);
    for x in pending {
        history.push(x, pen);
    }
    Ok(())
}

/// Algorithm: LHD of size `m`, then `n_iterations` rounds of
/// {fit GP, maximize EI, evaluate, append}. The objective must already be
/// oriented for minimization. `None` returns from the objective are charged
/// the penalty value instead of a fabricated observation.
pub fn bo_loop(
    objective: &mut dyn FnMut(&[f64]) -> Option<f64>,
    bounds: &Bounds,
    m: usize,
    n_iterations: usize,
    fit: &FitConfig,
    seed: u64,
) -> Result<BoHistory> {
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 initial points, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = BoHistory {
        records: Vec::new(),
        best_x: Vec::new(),
        best_value: f64::INFINITY,
    };
    evaluate_initial_design(objective, bounds, m, &mut history, &mut rng)?;

    let spec = KernelSpec::single(bounds.dim());
    for t in 0..n_iterations {
        let xs: Vec<Vec<f64>> = history.records.iter().map(|r| r.x.clone()).collect();
        let ys: Vec<f64> = history.records.iter().map(|r| r.value).collect();
        let gp = fit_ml(&spec, bounds, &xs, &ys, fit, seed.wrapping_add(t as u64 + 1))?;
        let x_next = propose_next(&gp, bounds, history.best_value, &mut rng)?;
        let value = match objective(&x_next) {
            Some(v) => v,
            None => penalty(&ys),
        };
        history.push(x_next, value);
    }
    Ok(history)
}

/// Baseline: uniform-random proposals with the same initial design and
/// bookkeeping as `bo_loop`.
pub fn random_search(
    objective: &mut dyn FnMut(&[f64]) -> Option<f64>,
    bounds: &Bounds,
    m: usize,
    n_iterations: usize,
    seed: u64,
) -> Result<BoHistory> {
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 initial points, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = BoHistory {
        records: Vec::new(),
        best_x: Vec::new(),
        best_value: f64::INFINITY,
    };
    evaluate_initial_design(objective, bounds, m, &mut history, &mut rng)?;

    let d = bounds.dim();
    for _ in 0..n_iterations {
        let unit: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let x = bounds.denormalize(&unit);
        let value = match objective(&x) {
            Some(v) => v,
            None => {
                let ys: Vec<f64> = history.records.iter().map(|r| r.value).collect();
                penalty(&ys)
            }
        };
        history.push(x, value);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_zero_when_no_improvement_possible() {
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn ei_hand_value() {
        // f_min = 1, mean = 0, sd = 1 -> Phi(1) + phi(1)
        let v = expected_improvement(0.0, 1.0, 1.0);
        assert!((v - 1.08332).abs() < 1e-4, "EI = {v}");
    }

    #[test]
    fn ei_dominates_plain_improvement() {
        for (mean, sd, f_min) in [(0.3, 0.5, 1.0), (1.5, 2.0, 1.0), (-2.0, 0.1, 0.0)] {
            let v = expected_improvement(mean, sd, f_min);
            assert!(v >= 0.0);
            assert!(v >= f_min - mean - 1e-12);
        }
    }

    #[test]
    fn best_so_far_non_increasing() {
        let bounds = Bounds::new(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let mut f = |x: &[f64]| Some((x[0] - 0.3).powi(2) + (x[1] - 0.7).powi(2));
        let hist = random_search(&mut f, &bounds, 5, 30, 11).unwrap();
        assert_eq!(hist.records.len(), 35);
        for w in hist.records.windows(2) {
            assert!(w[1].best_so_far <= w[0].best_so_far);
        }
        assert_eq!(hist.best_value, hist.records.last().unwrap().best_so_far);
    }

    #[test]
    fn random_search_reproducible() {
        let bounds = Bounds::new(vec![(0.0, 2.0)]).unwrap();
        let mut f1 = |x: &[f64]| Some(x[0].sin());
        let mut f2 = |x: &[f64]| Some(x[0].sin());
        let a = random_search(&mut f1, &bounds, 3, 10, 99).unwrap();
        let b = random_search(&mut f2, &bounds, 3, 10, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bo_zero_iterations_returns_best_initial() {
        let bounds = Bounds::new(vec![(0.0, 1.0)]).unwrap();
        let mut f = |x: &[f64]| Some(x[0]);
        let hist = bo_loop(&mut f, &bounds, 5, 0, &FitConfig::default(), 1).unwrap();
        assert_eq!(hist.records.len(), 5);
        let min = hist
            .records
            .iter()
            .map(|r| r.value)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(hist.best_value, min);
    }

    #[test]
    fn bo_stays_within_bounds_and_converges_on_quadratic() {
        let bounds = Bounds::new(vec![(-2.0, 4.0)]).unwrap();
        let mut f = |x: &[f64]| Some((x[0] - 1.0).powi(2));
        let fit = FitConfig {
            restarts: 2,
            iterations: 150,
            ..FitConfig::default()
        };
        let hist = bo_loop(&mut f, &bounds, 4, 12, &fit, 21).unwrap();
        for r in &hist.records {
            assert!(r.x[0] >= -2.0 && r.x[0] <= 4.0);
        }
        assert!(hist.best_value < 0.05, "best {}", hist.best_value);
    }

    #[test]
    fn failed_evaluations_get_penalty() {
        let bounds = Bounds::new(vec![(0.0, 1.0)]).unwrap();
        let mut calls = 0usize;
        let mut f = |x: &[f64]| {
            calls += 1;
            if x[0] > 0.9 {
                None
            } else {
                Some(x[0])
            }
        };
        let hist = random_search(&mut f, &bounds, 5, 40, 13).unwrap();
        assert_eq!(hist.records.len(), 45);
        // penalized points must never become the incumbent best
        assert!(hist.best_x[0] <= 0.9);
    }

    #[test]
    fn random_coverage_roughly_uniform() {
        let bounds = Bounds::new(vec![(0.0, 1.0)]).unwrap();
        let mut f = |x: &[f64]| Some(x[0]);
        let mut counts = [0usize; 4];
        for seed in 0..40 {
            let hist = random_search(&mut f, &bounds, 2, 10, seed).unwrap();
            for r in hist.records.iter().skip(2) {
                counts[((r.x[0] * 4.0) as usize).min(3)] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        for c in counts {
            let frac = c as f64 / total as f64;
            assert!((frac - 0.25).abs() < 0.08, "counts {counts:?}");
        }
    }
}
