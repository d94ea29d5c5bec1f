//! First-order adaptive-moment gradient ascent, used for both likelihood
//! maximization and acquisition maximization.

pub struct AdamConfig {
    pub iterations: usize,
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            iterations: 500,
            step: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Maximize `objective` (returning value and gradient) from `init`.
/// Returns the best parameters seen and their objective value, which is not
/// necessarily the last iterate.
pub fn adam_maximize(
    mut objective: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    init: &[f64],
    cfg: &AdamConfig,
) -> (Vec<f64>, f64) {
    let n = init.len();
    let mut params = init.to_vec();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut best_params = params.clone();
    let mut best_value = f64::NEG_INFINITY;

    for t in 1..=cfg.iterations {
        let (value, grad) = objective(&params);
        if value.is_finite() && value > best_value {
            best_value = value;
            best_params.copy_from_slice(&params);
        }
        let bias1 = 1.0 - cfg.beta1.powi(t as i32);
        let bias2 = 1.0 - cfg.beta2.powi(t as i32);
        for i in 0..n {
            let g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            // ascent
            params[i] += cfg.step * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    // evaluate the final iterate too
    let (value, _) = objective(&params);
    if value.is_finite() && value > best_value {
        best_value = value;
        best_params = params;
    }
    (best_params, best_value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_concave_quadratic() {
        // f(x) = -(x0 - 3)^2 - 2 (x1 + 1)^2
        let f = |p: &[f64]| {
            let v = -(p[0] - 3.0).powi(2) - 2.0 * (p[1] + 1.0).powi(2);
            (v, vec![-2.0 * (p[0] - 3.0), -4.0 * (p[1] + 1.0)])
        };
        let cfg = AdamConfig {
            iterations: 2000,
            ..AdamConfig::default()
        };
        let (p, v) = adam_maximize(f, &[0.0, 0.0], &cfg);
        assert!((p[0] - 3.0).abs() < 1e-2, "p = {p:?}");
        assert!((p[1] + 1.0).abs() < 1e-2, "p = {p:?}");
        assert!(v > -1e-3);
    }

    #[test]
    fn never_worse_than_initialization() {
        let f = |p: &[f64]| ((-p[0] * p[0]).sin(), vec![0.7]);
        let (_, v) = adam_maximize(f, &[0.3], &AdamConfig::default());
        assert!(v >= (-0.09f64).sin());
    }
}
