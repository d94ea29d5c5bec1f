//! Gaussian-process regression with additive squared-exponential kernels.
//!
//! Kernels are sums of blocks, each block a squared-exponential correlation
//! over a subset of input dimensions with its own per-dimension length
//! scales; a single variance multiplies the sum, so all blocks share it.
//! Hyperparameters (mean, variance, length-scales, observation noise) are
//! trained by maximum marginal likelihood with analytic gradients and a
//! multi-restart adaptive-moment gradient ascent.
//!
//! Inputs are normalized to the unit cube and outputs standardized before
//! fitting; predictions are mapped back to natural units. The achieved
//! log-likelihood is also reported in the original output scale so that
//! likelihoods of models fitted on the same data are comparable.

pub mod adam;

use crate::design::Bounds;
use crate::error::{Error, Result};
use adam::{adam_maximize, AdamConfig};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum diagonal jitter; escalated multiplicatively when the Cholesky
/// factorization fails.
pub const BASE_JITTER: f64 = 1e-10;
const MAX_JITTER: f64 = 1e-4;

/// Additive kernel structure: each block lists the input dimensions it is
/// active over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelSpec {
    pub input_dim: usize,
    pub blocks: Vec<Vec<usize>>,
}

impl KernelSpec {
    /// One block over all dimensions.
    pub fn single(input_dim: usize) -> Self {
        KernelSpec {
            input_dim,
            blocks: vec![(0..input_dim).collect()],
        }
    }

    /// Additive null composition for the additivity test: one block over the
    /// first `d` (policy) dimensions, one over the last `p` (state) ones.
    pub fn additive_null(d: usize, p: usize) -> Self {
        KernelSpec {
            input_dim: d + p,
            blocks: vec![(0..d).collect(), (d..d + p).collect()],
        }
    }

    /// Alternative composition: the null blocks plus a joint block over all
    /// d + p dimensions with its own length-scales.
    pub fn additive_alternative(d: usize, p: usize) -> Self {
        let mut spec = Self::additive_null(d, p);
        spec.blocks.push((0..d + p).collect());
        spec
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Number of length-scale hyperparameters across blocks.
    pub fn n_length_scales(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    fn validate_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.input_dim {
            return Err(Error::DimMismatch {
                expected: self.input_dim,
                got: z.len(),
            });
        }
        Ok(())
    }
}

/// GP hyperparameters in their natural (positive) scale. For a fitted model
/// these live in the normalized space: unit-cube inputs, standardized
/// outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyper {
    pub mean: f64,
    pub variance: f64,
    /// Observation-noise variance tau^2. Absorbs the residual stochasticity
    /// of replicate-averaged objectives.
    pub noise: f64,
    /// One vector per kernel block, aligned with `KernelSpec::blocks`.
    pub length_scales: Vec<Vec<f64>>,
}

impl GpHyper {
    /// Unconstrained packing: [mean, ln var, ln noise, ln ls...].
    fn pack(&self) -> Vec<f64> {
        let mut v = vec![
            self.mean,
            self.variance.ln(),
            self.noise.max(1e-12).ln(),
        ];
        for block in &self.length_scales {
            v.extend(block.iter().map(|l| l.ln()));
        }
        v
    }

    fn unpack(spec: &KernelSpec, v: &[f64], fixed_noise: Option<f64>) -> GpHyper {
        let mut idx = 3;
        let mut length_scales = Vec::with_capacity(spec.blocks.len());
        for block in &spec.blocks {
            length_scales.push(v[idx..idx + block.len()].iter().map(|x| x.exp()).collect());
            idx += block.len();
        }
        GpHyper {
            mean: v[0],
            variance: v[1].exp(),
            noise: fixed_noise.unwrap_or_else(|| v[2].exp()),
            length_scales,
        }
    }
}

/// Squared-exponential covariance between two points:
/// variance * sum over blocks of exp(-sum_l ((z_l - z'_l)/psi_l)^2).
pub fn kernel_eval(spec: &KernelSpec, hyper: &GpHyper, a: &[f64], b: &[f64]) -> Result<f64> {
    spec.validate_point(a)?;
    spec.validate_point(b)?;
    let mut total = 0.0;
    for (block, ls) in spec.blocks.iter().zip(&hyper.length_scales) {
        let s: f64 = block
            .iter()
            .zip(ls)
            .map(|(&l, &psi)| ((a[l] - b[l]) / psi).powi(2))
            .sum();
        total += (-s).exp();
    }
    Ok(hyper.variance * total)
}

/// Squared coordinate-difference matrices, one per input dimension. They
/// depend only on the training inputs, so they are computed once per fit.
fn distance_matrices(inputs: &[Vec<f64>], dim: usize) -> Vec<DMatrix<f64>> {
    let n = inputs.len();
    (0..dim)
        .map(|l| {
            DMatrix::from_fn(n, n, |i, j| {
                let d = inputs[i][l] - inputs[j][l];
                d * d
            })
        })
        .collect()
}

fn block_correlation(block: &[usize], ls: &[f64], dsq: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = dsq[0].nrows();
    let mut s = DMatrix::zeros(n, n);
    for (&l, &psi) in block.iter().zip(ls) {
        s += &dsq[l] / (psi * psi);
    }
    s.map(|v| (-v).exp())
}

struct LikelihoodEval {
    value: f64,
    gradient: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Multivariate-normal log-density of `y` under mean mu*1 and covariance
/// K + tau^2 I, with the analytic gradient in packing order. Fails (None)
/// only if the factorization fails at the maximum jitter.
fn likelihood_eval(
    spec: &KernelSpec,
    hyper: &GpHyper,
    dsq: &[DMatrix<f64>],
    y: &DVector<f64>,
    noise_learned: bool,
) -> Option<LikelihoodEval> {
    let n = y.len();
    let corrs: Vec<DMatrix<f64>> = spec
        .blocks
        .iter()
        .zip(&hyper.length_scales)
        .map(|(b, ls)| block_correlation(b, ls, dsq))
        .collect();
    let mut c_sum = DMatrix::zeros(n, n);
    for c in &corrs {
        c_sum += c;
    }

    let mut jitter = BASE_JITTER;
    let (chol, used_jitter) = loop {
        let mut a = &c_sum * hyper.variance;
        for i in 0..n {
            a[(i, i)] += hyper.noise + jitter;
        }
        match Cholesky::new(a) {
            Some(c) => break (c, jitter),
            None => {
                jitter *= 100.0;
                if jitter > MAX_JITTER {
                    return None;
                }
            }
        }
    };

    let r = y - DVector::from_element(n, hyper.mean);
    let alpha = chol.solve(&r);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let value = -0.5 * r.dot(&alpha)
        - 0.5 * log_det
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // M = alpha alpha^T - A^{-1}; dL/dphi = 0.5 tr(M dA/dphi)
    let a_inv = chol.inverse();
    let m = &alpha * alpha.transpose() - a_inv;

    let mut grad = vec![0.0; 3 + spec.n_length_scales()];
    grad[0] = alpha.sum();
    grad[1] = 0.5 * hyper.variance * m.zip_fold(&c_sum, 0.0, |acc, mi, ci| acc + mi * ci);
    grad[2] = if noise_learned {
        0.5 * hyper.noise * m.trace()
    } else {
        0.0
    };

    let mut idx = 3;
    for ((block, ls), corr) in spec.blocks.iter().zip(&hyper.length_scales).zip(&corrs) {
        for (&l, &psi) in block.iter().zip(ls) {
            // d k / d ln psi = variance * corr * 2 dsq / psi^2
            let scale = hyper.variance / (psi * psi);
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += m[(i, j)] * corr[(i, j)] * dsq[l][(i, j)];
                }
            }
            grad[idx] = acc * scale; // 0.5 * 2 = 1
            idx += 1;
        }
    }

    Some(LikelihoodEval {
        value,
        gradient: grad,
        chol,
        alpha,
        jitter: used_jitter,
    })
}

/// Log marginal likelihood of `outputs` given `inputs` and its gradient with
/// respect to the unconstrained hyperparameters, in the packing order
/// [mean, ln variance, ln noise, ln length-scales per block].
pub fn log_marginal_likelihood(
    spec: &KernelSpec,
    hyper: &GpHyper,
    inputs: &[Vec<f64>],
    outputs: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if inputs.len() != outputs.len() || inputs.is_empty() {
        return Err(Error::Config("inputs and outputs must be non-empty and equal-length".into()));
    }
    for z in inputs {
        spec.validate_point(z)?;
    }
    let dsq = distance_matrices(inputs, spec.input_dim);
    let y = DVector::from_column_slice(outputs);
    likelihood_eval(spec, hyper, &dsq, &y, true)
        .map(|e| (e.value, e.gradient))
        .ok_or_else(|| Error::GpFit("covariance factorization failed at maximum jitter".into()))
}

/// Fitting schedule for maximum-likelihood training.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub restarts: usize,
    pub iterations: usize,
    pub step: f64,
    /// When set, tau^2 is held at this value instead of learned.
    pub fixed_noise: Option<f64>,
    /// Additional starting points (e.g. a previous fit's optimum).
    pub extra_starts: Vec<GpHyper>,
    /// Log-uniform initialization range for length-scales, unit-cube units.
    pub ls_init_range: (f64, f64),
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 5,
            iterations: 500,
            step: 0.05,
            fixed_noise: None,
            extra_starts: Vec::new(),
            ls_init_range: (0.05, 2.0),
        }
    }
}

/// A trained surrogate. Immutable after construction; predictions are
/// reentrant.
#[derive(Debug, Clone)]
pub struct FittedGp {
    pub spec: KernelSpec,
    /// Hyperparameters in normalized space (unit-cube inputs, standardized
    /// outputs).
    pub hyper: GpHyper,
    bounds: Bounds,
    x_unit: Vec<Vec<f64>>,
    y_orig: Vec<f64>,
    y_mean: f64,
    y_sd: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    /// Log-likelihood on the standardized outputs.
    pub log_likelihood_std: f64,
    /// Log-likelihood transported to the original output scale; comparable
    /// across models fitted on the same data.
    pub log_likelihood: f64,
}

impl FittedGp {
    /// Condition a GP with the given hyperparameters on the data, without
    /// any optimization. Inputs are normalized by `bounds`; outputs are
    /// standardized when `standardize` is set, in which case `hyper` is
    /// interpreted in standardized units.
    pub fn with_hyper(
        spec: KernelSpec,
        bounds: Bounds,
        inputs: &[Vec<f64>],
        outputs: &[f64],
        hyper: GpHyper,
        standardize: bool,
    ) -> Result<Self> {
        if inputs.len() != outputs.len() || inputs.len() < 1 {
            return Err(Error::Config("need at least one training point".into()));
        }
        if bounds.dim() != spec.input_dim {
            return Err(Error::DimMismatch {
                expected: spec.input_dim,
                got: bounds.dim(),
            });
        }
        let x_unit: Vec<Vec<f64>> = inputs.iter().map(|z| bounds.normalize(z)).collect();
        let (y_mean, y_sd) = if standardize {
            standardization(outputs)
        } else {
            (0.0, 1.0)
        };
        let y_std =
            DVector::from_iterator(outputs.len(), outputs.iter().map(|y| (y - y_mean) / y_sd));
        let dsq = distance_matrices(&x_unit, spec.input_dim);
        let eval = likelihood_eval(&spec, &hyper, &dsq, &y_std, false).ok_or_else(|| {
            Error::GpFit("covariance factorization failed at maximum jitter".into())
        })?;
        let n = outputs.len() as f64;
        Ok(FittedGp {
            spec,
            hyper,
            bounds,
            x_unit,
            y_orig: outputs.to_vec(),
            y_mean,
            y_sd,
            log_likelihood_std: eval.value,
            log_likelihood: eval.value - n * y_sd.ln(),
            chol: eval.chol,
            alpha: eval.alpha,
            jitter: eval.jitter,
        })
    }

    /// Predictive mean and standard deviation at a natural-units point. The
    /// standard deviation is that of the latent objective: it excludes the
    /// observation noise tau^2.
    pub fn predict(&self, z: &[f64]) -> Result<(f64, f64)> {
        let p = self.predict_parts(z)?;
        Ok((p.mean, p.sd))
    }

    /// Prediction plus gradients of mean and standard deviation with
    /// respect to the unit-cube input coordinates.
    pub fn predict_grad(&self, z: &[f64]) -> Result<Prediction> {
        self.predict_parts(z)
    }

    fn predict_parts(&self, z: &[f64]) -> Result<Prediction> {
        self.spec.validate_point(z)?;
        let zu = self.bounds.normalize(z);
        let n = self.x_unit.len();
        let d = self.spec.input_dim;

        // covariance vector and its gradient w.r.t. unit-cube coordinates
        let mut k = DVector::zeros(n);
        let mut dk = DMatrix::zeros(n, d);
        for i in 0..n {
            let xi = &self.x_unit[i];
            for (block, ls) in self.spec.blocks.iter().zip(&self.hyper.length_scales) {
                let s: f64 = block
                    .iter()
                    .zip(ls)
                    .map(|(&l, &psi)| ((zu[l] - xi[l]) / psi).powi(2))
                    .sum();
                let v = self.hyper.variance * (-s).exp();
                k[i] += v;
                for (&l, &psi) in block.iter().zip(ls) {
                    dk[(i, l)] += v * (-2.0 * (zu[l] - xi[l]) / (psi * psi));
                }
            }
        }

        let mean_std = self.hyper.mean + k.dot(&self.alpha);
        let w = self.chol.solve(&k); // A^{-1} k
        let prior_var = self.hyper.variance * self.spec.n_blocks() as f64;
        let var = (prior_var - k.dot(&w)).max(0.0);
        let sd_std = var.sqrt();

        let mut dmean = vec![0.0; d];
        let mut dsd = vec![0.0; d];
        for l in 0..d {
            let dkl = dk.column(l);
            dmean[l] = dkl.dot(&self.alpha);
            if sd_std > 1e-12 {
                // d var / d z_l = -2 w . dk_l
                dsd[l] = -dkl.dot(&w) / sd_std;
            }
        }

        Ok(Prediction {
            mean: self.y_mean + self.y_sd * mean_std,
            sd: self.y_sd * sd_std,
            dmean: dmean.iter().map(|g| g * self.y_sd).collect(),
            dsd: dsd.iter().map(|g| g * self.y_sd).collect(),
        })
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn n_train(&self) -> usize {
        self.x_unit.len()
    }

    /// Training inputs in unit-cube coordinates.
    pub fn train_unit_inputs(&self) -> &[Vec<f64>] {
        &self.x_unit
    }

    /// Training outputs in original units.
    pub fn train_values(&self) -> &[f64] {
        &self.y_orig
    }

    /// Plain-text record of the fit: hyperparameters and training set,
    /// one `key: value` line each, for reproducibility.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("blocks: {:?}\n", self.spec.blocks));
        out.push_str(&format!("mean: {:.12e}\n", self.hyper.mean));
        out.push_str(&format!("variance: {:.12e}\n", self.hyper.variance));
        out.push_str(&format!("noise: {:.12e}\n", self.hyper.noise));
        for (b, ls) in self.hyper.length_scales.iter().enumerate() {
            out.push_str(&format!("length_scales[{b}]: {ls:?}\n"));
        }
        out.push_str(&format!("y_mean: {:.12e}\ny_sd: {:.12e}\n", self.y_mean, self.y_sd));
        out.push_str(&format!("jitter: {:.1e}\n", self.jitter));
        out.push_str(&format!("log_likelihood: {:.12e}\n", self.log_likelihood));
        for (x, y) in self.x_unit.iter().zip(&self.y_orig) {
            out.push_str(&format!("train: {x:?} -> {y:.12e}\n"));
        }
        out
    }
}

/// Prediction with input-space gradients (unit-cube coordinates).
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: f64,
    pub sd: f64,
    pub dmean: Vec<f64>,
    pub dsd: Vec<f64>,
}

fn standardization(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

/// Maximum-likelihood fit: inputs normalized to the unit cube via `bounds`,
/// outputs standardized, hyperparameters trained from the best of several
/// random restarts.
pub fn fit_ml(
    spec: &KernelSpec,
    bounds: &Bounds,
    inputs: &[Vec<f64>],
    outputs: &[f64],
    cfg: &FitConfig,
    seed: u64,
) -> Result<FittedGp> {
    if inputs.len() < 2 {
        return Err(Error::Config("GP fitting needs at least 2 points".into()));
    }
    if inputs.len() != outputs.len() {
        return Err(Error::Config("inputs and outputs differ in length".into()));
    }
    for z in inputs {
        spec.validate_point(z)?;
    }

    let x_unit: Vec<Vec<f64>> = inputs.iter().map(|z| bounds.normalize(z)).collect();
    let (y_mean, y_sd) = standardization(outputs);
    let y_std: Vec<f64> = outputs.iter().map(|y| (y - y_mean) / y_sd).collect();
    let y_vec = DVector::from_column_slice(&y_std);
    let dsq = distance_matrices(&x_unit, spec.input_dim);
    let noise_learned = cfg.fixed_noise.is_none();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<f64>> = cfg.extra_starts.iter().map(|h| h.pack()).collect();
    let (ls_lo, ls_hi) = cfg.ls_init_range;
    for _ in 0..cfg.restarts {
        let mut v = vec![0.0, 0.0, (0.01f64).ln()];
        for block in &spec.blocks {
            for _ in block {
                let u: f64 = rng.random();
                v.push(ls_lo.ln() + u * (ls_hi.ln() - ls_lo.ln()));
            }
        }
        starts.push(v);
    }

    let adam_cfg = AdamConfig {
        iterations: cfg.iterations,
        step: cfg.step,
        ..AdamConfig::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in &starts {
        let objective = |v: &[f64]| {
            let hyper = GpHyper::unpack(spec, v, cfg.fixed_noise);
            match likelihood_eval(spec, &hyper, &dsq, &y_vec, noise_learned) {
                Some(e) => (e.value, e.gradient),
                None => (f64::NEG_INFINITY, vec![0.0; v.len()]),
            }
        };
        let (params, value) = adam_maximize(objective, start, &adam_cfg);
        if value.is_finite() && best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, params));
        }
    }

    let (_, params) = best.ok_or_else(|| {
        Error::GpFit(format!(
            "all {} restarts failed covariance factorization (n = {}, dim = {})",
            starts.len(),
            inputs.len(),
            spec.input_dim
        ))
    })?;
    let hyper = GpHyper::unpack(spec, &params, cfg.fixed_noise);

    let eval = likelihood_eval(spec, &hyper, &dsq, &y_vec, noise_learned)
        .ok_or_else(|| Error::GpFit("final factorization failed".into()))?;
    let n = inputs.len() as f64;
    Ok(FittedGp {
        spec: spec.clone(),
        hyper,
        bounds: bounds.clone(),
        x_unit,
        y_orig: outputs.to_vec(),
        y_mean,
        y_sd,
        log_likelihood_std: eval.value,
        log_likelihood: eval.value - n * y_sd.ln(),
        chol: eval.chol,
        alpha: eval.alpha,
        jitter: eval.jitter,
    })
}
