//! Trace diagnostics and the theory-checking experiments built on them.
//!
//! The amplification factor of a run is
//!
//! ```text
//! S_K = (1/K) sum_{k=0}^{K-1} (||W_k||_inf^2 / tau^2) / (1 - ||W_k||_inf^2 / tau^2)
//! ```
//!
//! averaged over the records with `k < K`, where `K` is the index of the last
//! record. The same window is used for gradient-norm averages.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::devices::{DeviceModel, UpdateMode};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::optim::{run, Algorithm, OptimizerConfig, OptimizerState};
use crate::problems::make_lower_bound_problem;
use crate::{rng, Matrix};

/// Minimum number of tail records accepted by [`asymptotic_error`].
pub const MIN_TAIL_RECORDS: usize = 100;

/// Snapshot of a run at iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub loss: f64,
    /// `||grad f(W_k)||^2` of the exact gradient.
    pub grad_norm_sq: f64,
    pub w_inf: f64,
    pub p_inf: Option<f64>,
    /// Saturation term of `w_inf`; infinite once `w_inf >= tau`, zero without a `tau`.
    pub s_term: f64,
}

impl TraceRecord {
    pub fn new(
        k: usize,
        loss: f64,
        grad_norm_sq: f64,
        w_inf: f64,
        p_inf: Option<f64>,
        tau: Option<f64>,
    ) -> Self {
        Self {
            k,
            loss,
            grad_norm_sq,
            w_inf,
            p_inf,
            s_term: tau.map_or(0.0, |t| s_term(w_inf, t)),
        }
    }
}

/// `(x^2/tau^2) / (1 - x^2/tau^2)`, or `+inf` once `|x| >= tau`.
pub fn s_term(x: f64, tau: f64) -> f64 {
    let r2 = (x / tau).powi(2);
    if r2 >= 1.0 {
        f64::INFINITY
    } else {
        r2 / (1.0 - r2)
    }
}

/// Records entering `(1/K) sum_{k<K}` averages. A single record is its own window.
fn averaging_window(trace: &[TraceRecord]) -> &[TraceRecord] {
    match trace.last() {
        Some(last) if trace.len() > 1 => {
            let end = trace
                .iter()
                .position(|r| r.k >= last.k)
                .unwrap_or(trace.len());
            &trace[..end.max(1)]
        }
        _ => trace,
    }
}

/// Amplification factor `S_K` of `trace` evaluated with saturation scale `tau`.
///
/// Recomputes each term from `w_inf`, so the same trajectory can be scored
/// under different `tau`.
pub fn amplification_factor(trace: &[TraceRecord], tau: f64) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::InsufficientRecords { needed: 1, have: 0 });
    }
    if let Some(r) = trace.iter().find(|r| r.w_inf >= tau) {
        return Err(Error::SaturationOverflow {
            k: r.k,
            ratio: r.w_inf / tau,
        });
    }
    let window = averaging_window(trace);
    Ok(window.iter().map(|r| s_term(r.w_inf, tau)).sum::<f64>() / window.len() as f64)
}

/// `s_term(W_max)` with `W_max = max_k w_inf`: an upper bound on `S_K`.
pub fn amplification_bound(trace: &[TraceRecord], tau: f64) -> f64 {
    s_term(w_max(trace), tau)
}

pub fn w_max(trace: &[TraceRecord]) -> f64 {
    trace.iter().map(|r| r.w_inf).fold(0.0, f64::max)
}

pub fn p_max(trace: &[TraceRecord]) -> Option<f64> {
    trace.iter().filter_map(|r| r.p_inf).reduce(f64::max)
}

/// `(1/K) sum_{k<K} ||grad f(W_k)||^2`.
pub fn average_grad_norm_sq(trace: &[TraceRecord]) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::InsufficientRecords { needed: 1, have: 0 });
    }
    let window = averaging_window(trace);
    Ok(window.iter().map(|r| r.grad_norm_sq).sum::<f64>() / window.len() as f64)
}

/// Mean and sample standard deviation of `xs`.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn tail(trace: &[TraceRecord], tail_fraction: f64) -> Result<&[TraceRecord]> {
    if !(tail_fraction > 0.0 && tail_fraction <= 0.5) {
        return Err(Error::Contract(format!(
            "tail_fraction must be in (0, 0.5], got {tail_fraction}"
        )));
    }
    let n = (trace.len() as f64 * tail_fraction).ceil() as usize;
    if n < MIN_TAIL_RECORDS {
        return Err(Error::InsufficientRecords {
            needed: MIN_TAIL_RECORDS,
            have: n,
        });
    }
    Ok(&trace[trace.len() - n..])
}

/// Mean and sample standard deviation of `grad_norm_sq` over the last
/// `tail_fraction` of the records.
pub fn asymptotic_error(trace: &[TraceRecord], tail_fraction: f64) -> Result<(f64, f64)> {
    let xs: Vec<f64> = tail(trace, tail_fraction)?
        .iter()
        .map(|r| r.grad_norm_sq)
        .collect();
    Ok(mean_std(&xs))
}

/// Same as [`asymptotic_error`] for the loss.
pub fn tail_loss(trace: &[TraceRecord], tail_fraction: f64) -> Result<(f64, f64)> {
    let xs: Vec<f64> = tail(trace, tail_fraction)?.iter().map(|r| r.loss).collect();
    Ok(mean_std(&xs))
}

/// Setting of the identical-coordinate lower-bound instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundSpec {
    pub l: f64,
    pub w_star: f64,
    pub tau: f64,
    pub dim: usize,
    pub sigma2: f64,
    pub alphas: Vec<f64>,
    pub k_iters: usize,
    pub seeds: Vec<u64>,
}

/// One `(alpha, seed)` cell of the lower-bound experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundRow {
    pub alpha: f64,
    pub seed: u64,
    pub avg_grad_norm_sq: f64,
    pub s_k: f64,
    pub four_sigma2_sk: f64,
    /// `avg_grad_norm_sq - 4 sigma^2 S_K`.
    pub residual: f64,
    pub w_max: f64,
}

impl LowerBoundRow {
    pub fn sigma2_sk(&self) -> f64 {
        self.four_sigma2_sk / 4.0
    }
}

impl LowerBoundSpec {
    /// Checks every constraint of the instance before anything runs.
    pub fn validate(&self) -> Result<()> {
        let problem = make_lower_bound_problem(self.l, self.w_star, self.tau, self.dim)?;
        let sigma = self.sigma2.sqrt();
        problem.check_sigma(sigma)?;
        if self.alphas.is_empty() || self.seeds.is_empty() || self.k_iters == 0 {
            return Err(Error::Contract(
                "need at least one alpha, one seed and K >= 1".into(),
            ));
        }
        for &alpha in &self.alphas {
            problem.check_alpha(alpha, sigma)?;
        }
        Ok(())
    }

    /// Runs Analog SGD from `W*` with two-point noise for one `(alpha, seed)` cell.
    pub fn run_cell(&self, alpha: f64, seed: u64) -> Result<LowerBoundRow> {
        self.run_cell_traced(alpha, seed).map(|(row, _)| row)
    }

    /// [`Self::run_cell`] that also returns the per-step trace.
    pub fn run_cell_traced(
        &self,
        alpha: f64,
        seed: u64,
    ) -> Result<(LowerBoundRow, Vec<TraceRecord>)> {
        let problem = make_lower_bound_problem(self.l, self.w_star, self.tau, self.dim)?;
        let noise = NoiseModel::two_point(self.sigma2, self.tau, self.dim);
        let config = OptimizerConfig::new(Algorithm::AnalogSgd, alpha);
        let mut state = OptimizerState::new(
            &config,
            problem.initial_point(),
            DeviceModel::asymmetric_linear(self.tau),
            1e-4,
            1,
            Some(self.l),
        )?;
        let mut r = rng::stream(seed, rng::STREAM_NOISE);
        let out = run(&problem, &mut state, &noise, self.k_iters, 1, &mut r)?;
        let avg = average_grad_norm_sq(&out.trace)?;
        let s_k = amplification_factor(&out.trace, self.tau)?;
        let four = 4.0 * self.sigma2 * s_k;
        let row = LowerBoundRow {
            alpha,
            seed,
            avg_grad_norm_sq: avg,
            s_k,
            four_sigma2_sk: four,
            residual: avg - four,
            w_max: w_max(&out.trace),
        };
        Ok((row, out.trace))
    }
}

/// Runs every `(alpha, seed)` cell sequentially. Callers that want parallelism
/// can map [`LowerBoundSpec::run_cell`] themselves.
pub fn run_lower_bound_experiment(spec: &LowerBoundSpec) -> Result<Vec<LowerBoundRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.alphas.len() * spec.seeds.len());
    for &alpha in &spec.alphas {
        for &seed in &spec.seeds {
            rows.push(spec.run_cell(alpha, seed)?);
        }
    }
    Ok(rows)
}

/// Setting of the one-step drift experiment (zero true gradient, Gaussian noise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSpec {
    pub algo: Algorithm,
    pub tau: f64,
    pub alpha: f64,
    /// Tiki-Taka only.
    pub beta: f64,
    /// Per-coordinate noise variance.
    pub sigma2: f64,
    pub w0: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftResult {
    pub mean: f64,
    pub std_err: f64,
    /// `-(alpha/tau) E|eps| w0` (Analog SGD), `-(alpha beta/tau) E|eps| w0`
    /// (Tiki-Taka, `P = 0`), or `0` (Digital SGD).
    pub predicted: f64,
}

impl DriftResult {
    pub fn within(&self, n_se: f64) -> bool {
        (self.mean - self.predicted).abs() <= n_se * self.std_err
    }
}

/// Averages the one-step displacement `W_1 - w0` over independent noise draws,
/// resetting `W = w0` (and `P = 0`) before every trial.
pub fn drift_experiment<R: Rng + ?Sized>(spec: &DriftSpec, rng: &mut R) -> Result<DriftResult> {
    if spec.w0 == 0.0 {
        return Err(Error::Domain("drift needs w0 != 0".into()));
    }
    if spec.n_trials < 2 {
        return Err(Error::Contract("drift needs at least 2 trials".into()));
    }
    let mut config =
        OptimizerConfig::new(spec.algo, spec.alpha).with_update_mode(UpdateMode::ClosedForm);
    if spec.algo == Algorithm::TikiTaka {
        config = config.with_beta(spec.beta);
    }
    let w0 = Matrix::from_element(1, 1, spec.w0);
    let mut state = OptimizerState::new(
        &config,
        w0.clone(),
        DeviceModel::asymmetric_linear(spec.tau),
        1e-4,
        1,
        None,
    )?;
    let sd = spec.sigma2.sqrt();
    let mut xs = Vec::with_capacity(spec.n_trials);
    for _ in 0..spec.n_trials {
        state.set_w(w0.clone())?;
        if spec.algo == Algorithm::TikiTaka {
            state.set_p(Matrix::zeros(1, 1))?;
        }
        let z: f64 = rng.sample(StandardNormal);
        state.step(&Matrix::from_element(1, 1, sd * z))?;
        xs.push(state.w()[0] - spec.w0);
    }
    let (mean, std) = mean_std(&xs);
    let abs_eps = sd * (2.0 / std::f64::consts::PI).sqrt();
    let predicted = match spec.algo {
        Algorithm::DigitalSgd => 0.0,
        Algorithm::AnalogSgd => -(spec.alpha / spec.tau) * abs_eps * spec.w0,
        Algorithm::TikiTaka => -(spec.alpha * spec.beta / spec.tau) * abs_eps * spec.w0,
    };
    Ok(DriftResult {
        mean,
        std_err: std / (spec.n_trials as f64).sqrt(),
        predicted,
    })
}
