//! Digital SGD, Analog SGD and Tiki-Taka over a gradient oracle.
//!
//! Every algorithm consumes a noisy gradient `g + eps`:
//!
//! * Digital SGD: `W <- W - alpha (g + eps)` in exact arithmetic.
//! * Analog SGD: the tile receives the increment `-alpha (g + eps)`.
//! * Tiki-Taka: the auxiliary tile `P` receives `+beta (g + eps)`, then the
//!   main tile receives `-alpha P` (all columns, or one column per step).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::TraceRecord;
use crate::devices::{AnalogTile, DeviceModel, UpdateMode, UpdateStats};
use crate::error::{check_shape, Error, Result};
use crate::noise::NoiseModel;
use crate::problems::Problem;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DigitalSgd,
    AnalogSgd,
    TikiTaka,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::DigitalSgd => "digital_sgd",
            Algorithm::AnalogSgd => "analog_sgd",
            Algorithm::TikiTaka => "tiki_taka",
        }
    }
}

/// How `P` is transferred into `W` in Tiki-Taka.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// Every column, every step.
    #[default]
    Full,
    /// One column per step, cycling left to right. `P` is never reset.
    ColumnCyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algo: Algorithm,
    pub alpha: f64,
    /// Tiki-Taka `P` learning rate; `8 alpha L` when absent and `L` is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub transfer_mode: TransferMode,
    #[serde(default)]
    pub update_mode: UpdateMode,
}

impl OptimizerConfig {
    pub fn new(algo: Algorithm, alpha: f64) -> Self {
        Self {
            algo,
            alpha,
            beta: None,
            transfer_mode: TransferMode::Full,
            update_mode: UpdateMode::ClosedForm,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_transfer(mut self, mode: TransferMode) -> Self {
        self.transfer_mode = mode;
        self
    }

    pub fn with_update_mode(mut self, mode: UpdateMode) -> Self {
        self.update_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Domain(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if let Some(beta) = self.beta {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
            }
        }
        Ok(())
    }
}

/// Explicit `beta`, else `8 alpha L`.
pub fn resolve_beta(config: &OptimizerConfig, lipschitz: Option<f64>) -> Result<f64> {
    match (config.beta, lipschitz) {
        (Some(beta), _) => Ok(beta),
        (None, Some(l)) if l > 0.0 => Ok(8.0 * config.alpha * l),
        _ => Err(Error::Domain(
            "Tiki-Taka needs beta (no Lipschitz constant to derive it from)".into(),
        )),
    }
}

/// Mutable training state of one run.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    algo: Algorithm,
    w: AnalogTile,
    p: Option<AnalogTile>,
    alpha: f64,
    beta: Option<f64>,
    transfer_mode: TransferMode,
    update_mode: UpdateMode,
    transfer_cursor: usize,
    step_count: usize,
    stats: UpdateStats,
}

impl OptimizerState {
    /// Places `w0` on a tile of `device`. Tiki-Taka adds a zero `P` tile of the
    /// same device; Digital SGD ignores the device.
    pub fn new(
        config: &OptimizerConfig,
        w0: Matrix,
        device: DeviceModel,
        dw_min: f64,
        bl_max: u32,
        lipschitz: Option<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let (rows, cols) = w0.shape();
        let (w, p, beta) = match config.algo {
            Algorithm::DigitalSgd => (
                AnalogTile::new(w0, DeviceModel::Ideal, dw_min, bl_max)?,
                None,
                None,
            ),
            Algorithm::AnalogSgd => (AnalogTile::new(w0, device, dw_min, bl_max)?, None, None),
            Algorithm::TikiTaka => {
                let beta = resolve_beta(config, lipschitz)?;
                let p = AnalogTile::zeros(rows, cols, device, dw_min, bl_max)?;
                (
                    AnalogTile::new(w0, device, dw_min, bl_max)?,
                    Some(p),
                    Some(beta),
                )
            }
        };
        if let Some(range) = w.device().admissible_range() {
            if w.values().iter().any(|&v| v < range.0 || v > range.1) {
                return Err(Error::Domain(format!(
                    "initial weights outside device range {range:?}"
                )));
            }
        }
        Ok(Self {
            algo: config.algo,
            w,
            p,
            alpha: config.alpha,
            beta,
            transfer_mode: config.transfer_mode,
            update_mode: config.update_mode,
            transfer_cursor: 0,
            step_count: 0,
            stats: UpdateStats::default(),
        })
    }

    pub fn algo(&self) -> Algorithm {
        self.algo
    }

    pub fn w(&self) -> &Matrix {
        self.w.values()
    }

    pub fn w_tile(&self) -> &AnalogTile {
        &self.w
    }

    pub fn p(&self) -> Option<&Matrix> {
        self.p.as_ref().map(|t| t.values())
    }

    /// Overwrites `P` (Tiki-Taka only).
    pub fn set_p(&mut self, values: Matrix) -> Result<()> {
        match self.p.as_mut() {
            Some(p) => p.set_values(values),
            None => Err(Error::Contract("state has no P tile".into())),
        }
    }

    pub fn set_w(&mut self, values: Matrix) -> Result<()> {
        self.w.set_values(values)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn transfer_cursor(&self) -> usize {
        self.transfer_cursor
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn stats(&self) -> UpdateStats {
        self.stats
    }

    /// Saturation scale of the main tile's device (`None` for ideal devices).
    pub fn tau(&self) -> Option<f64> {
        self.w.device().saturation_scale()
    }

    pub fn step(&mut self, grad_noisy: &Matrix) -> Result<()> {
        match self.algo {
            Algorithm::DigitalSgd => self.step_digital_sgd(grad_noisy),
            Algorithm::AnalogSgd => self.step_analog_sgd(grad_noisy),
            Algorithm::TikiTaka => self.step_tiki_taka(grad_noisy),
        }
    }

    pub fn step_digital_sgd(&mut self, grad_noisy: &Matrix) -> Result<()> {
        self.expect(Algorithm::DigitalSgd)?;
        check_shape(self.w.shape(), grad_noisy.shape())?;
        let next = self.w.values() - grad_noisy * self.alpha;
        self.w.set_values(next)?;
        self.step_count += 1;
        Ok(())
    }

    pub fn step_analog_sgd(&mut self, grad_noisy: &Matrix) -> Result<()> {
        self.expect(Algorithm::AnalogSgd)?;
        let dw = grad_noisy * -self.alpha;
        let s = self.w.apply(&dw, self.update_mode)?;
        self.stats.merge(s);
        self.step_count += 1;
        Ok(())
    }

    pub fn step_tiki_taka(&mut self, grad_noisy: &Matrix) -> Result<()> {
        self.expect(Algorithm::TikiTaka)?;
        let beta = self
            .beta
            .ok_or_else(|| Error::Contract("Tiki-Taka state without beta".into()))?;
        let p = self
            .p
            .as_mut()
            .ok_or_else(|| Error::Contract("Tiki-Taka state without P".into()))?;
        check_shape(self.w.shape(), grad_noisy.shape())?;

        let s = p.apply(&(grad_noisy * beta), self.update_mode)?;
        self.stats.merge(s);

        let p_next = p.values();
        let dw = match self.transfer_mode {
            TransferMode::Full => p_next * -self.alpha,
            TransferMode::ColumnCyclic => {
                let mut dw = Matrix::zeros(p_next.nrows(), p_next.ncols());
                let c = self.transfer_cursor;
                dw.set_column(c, &(p_next.column(c) * -self.alpha));
                self.transfer_cursor = (c + 1) % p_next.ncols();
                dw
            }
        };
        let s = self.w.apply(&dw, self.update_mode)?;
        self.stats.merge(s);
        self.step_count += 1;
        Ok(())
    }

    fn expect(&self, algo: Algorithm) -> Result<()> {
        if self.algo != algo {
            return Err(Error::Contract(format!(
                "{} step called on a {} state",
                algo.name(),
                self.algo.name()
            )));
        }
        Ok(())
    }

    /// Trace record of the current state, given the loss and exact gradient at it.
    pub fn record(&self, k: usize, loss: f64, grad: &Matrix) -> TraceRecord {
        TraceRecord::new(
            k,
            loss,
            grad.norm_squared(),
            self.w.inf_norm(),
            self.p.as_ref().map(|p| p.inf_norm()),
            self.tau(),
        )
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub stats: UpdateStats,
}

/// Runs `n_iters` steps of `state` on `problem`, drawing noise from `rng`.
///
/// Records the state at `k = 0`, every `trace_every` steps, and after the
/// final step. Each record holds the exact (noise-free) gradient norm.
pub fn run<R: Rng + ?Sized>(
    problem: &dyn Problem,
    state: &mut OptimizerState,
    noise: &NoiseModel,
    n_iters: usize,
    trace_every: usize,
    rng: &mut R,
) -> Result<RunOutput> {
    if n_iters == 0 {
        return Err(Error::Contract("n_iters must be >= 1".into()));
    }
    if trace_every == 0 {
        return Err(Error::Contract("trace_every must be >= 1".into()));
    }
    check_shape(problem.shape(), state.w.shape())?;
    noise.validate()?;

    let shape = problem.shape();
    let mut trace = Vec::with_capacity(n_iters / trace_every + 2);
    let (mut loss, mut grad) = problem.gradient(state.w())?;
    for k in 0..n_iters {
        if k % trace_every == 0 {
            trace.push(state.record(k, loss, &grad));
        }
        let eps = noise.sample(shape, Some(state.w()), rng)?;
        state.step(&(grad + eps))?;
        (loss, grad) = problem.gradient(state.w())?;
    }
    trace.push(state.record(n_iters, loss, &grad));
    Ok(RunOutput {
        trace,
        stats: state.stats(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseModel;
    use crate::problems::make_least_squares;
    use crate::rng;
    use rand_distr::{Distribution, Normal};

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn state(algo: Algorithm, alpha: f64, w0: f64, tau: f64) -> OptimizerState {
        OptimizerState::new(
            &OptimizerConfig::new(algo, alpha),
            scalar(w0),
            DeviceModel::asymmetric_linear(tau),
            1e-4,
            1000,
            Some(1.0),
        )
        .unwrap()
    }

    #[test]
    fn digital_step_example() {
        let mut s = state(Algorithm::DigitalSgd, 0.1, 1.0, 2.0);
        s.step(&scalar(2.0)).unwrap();
        assert!((s.w()[0] - 0.8).abs() < 1e-15);
        s.step(&scalar(0.0)).unwrap();
        assert!((s.w()[0] - 0.8).abs() < 1e-15);
        assert_eq!(s.step_count(), 2);
    }

    #[test]
    fn analog_step_example() {
        let mut s = state(Algorithm::AnalogSgd, 0.1, 1.0, 2.0);
        s.step(&scalar(1.0)).unwrap();
        assert!((s.w()[0] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn analog_at_symmetric_point_is_digital() {
        let mut a = state(Algorithm::AnalogSgd, 0.1, 0.0, 2.0);
        let mut d = state(Algorithm::DigitalSgd, 0.1, 0.0, 2.0);
        a.step(&scalar(0.7)).unwrap();
        d.step(&scalar(0.7)).unwrap();
        assert_eq!(a.w(), d.w());
    }

    #[test]
    fn huge_tau_approaches_digital() {
        let mut a = state(Algorithm::AnalogSgd, 0.1, 0.6, 1e12);
        let mut d = state(Algorithm::DigitalSgd, 0.1, 0.6, 1e12);
        a.step(&scalar(-1.3)).unwrap();
        d.step(&scalar(-1.3)).unwrap();
        assert!((a.w()[0] - d.w()[0]).abs() <= 1e-9 * d.w()[0].abs());
    }

    #[test]
    fn tiki_taka_step_example() {
        let config = OptimizerConfig::new(Algorithm::TikiTaka, 0.1).with_beta(0.8);
        let mut s = OptimizerState::new(
            &config,
            scalar(1.0),
            DeviceModel::asymmetric_linear(2.0),
            1e-4,
            1000,
            None,
        )
        .unwrap();
        s.step(&scalar(1.0)).unwrap();
        assert!((s.p().unwrap()[0] - 0.8).abs() < 1e-15);
        assert!((s.w()[0] - 0.88).abs() < 1e-15);
    }

    #[test]
    fn tiki_taka_zero_gradient_is_fixed_point() {
        let config = OptimizerConfig::new(Algorithm::TikiTaka, 0.1).with_beta(0.8);
        let w0 = Matrix::from_row_slice(2, 2, &[0.3, -0.2, 0.1, 0.5]);
        let mut s = OptimizerState::new(
            &config,
            w0.clone(),
            DeviceModel::asymmetric_linear(2.0),
            1e-4,
            1000,
            None,
        )
        .unwrap();
        s.step(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(s.w(), &w0);
        assert_eq!(s.p().unwrap(), &Matrix::zeros(2, 2));
    }

    #[test]
    fn tiki_taka_first_p_is_scaled_noise() {
        let beta = 0.3;
        let config = OptimizerConfig::new(Algorithm::TikiTaka, 0.1).with_beta(beta);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut r = rng::seeded(3);
        let mut sum = 0.0;
        let n = 20_000;
        for _ in 0..n {
            let mut s = OptimizerState::new(
                &config,
                scalar(0.5),
                DeviceModel::asymmetric_linear(1.0),
                1e-4,
                10,
                None,
            )
            .unwrap();
            let eps = normal.sample(&mut r);
            s.step(&scalar(eps)).unwrap();
            assert_eq!(s.p().unwrap()[0], beta * eps);
            sum += s.p().unwrap()[0];
        }
        let mean = sum / n as f64;
        assert!(mean.abs() < 3.0 * beta / (n as f64).sqrt());
    }

    #[test]
    fn column_cyclic_touches_one_column() {
        let config = OptimizerConfig::new(Algorithm::TikiTaka, 0.1)
            .with_beta(1.0)
            .with_transfer(TransferMode::ColumnCyclic);
        let mut s = OptimizerState::new(
            &config,
            Matrix::zeros(2, 3),
            DeviceModel::asymmetric_linear(2.0),
            1e-4,
            10,
            None,
        )
        .unwrap();
        let g = Matrix::from_element(2, 3, 1.0);
        s.step(&g).unwrap();
        assert_eq!(s.transfer_cursor(), 1);
        let w = s.w();
        assert!(w.column(0).iter().all(|&v| v < 0.0));
        assert!(w
            .column(1)
            .iter()
            .chain(w.column(2).iter())
            .all(|&v| v == 0.0));
        // P keeps accumulating; it is never reset by the transfer.
        assert_eq!(s.p().unwrap(), &Matrix::from_element(2, 3, 1.0));
        s.step(&g).unwrap();
        s.step(&g).unwrap();
        assert_eq!(s.transfer_cursor(), 0);
    }

    #[test]
    fn beta_defaults_to_eight_alpha_l() {
        let config = OptimizerConfig::new(Algorithm::TikiTaka, 0.05);
        assert!((resolve_beta(&config, Some(2.0)).unwrap() - 0.8).abs() < 1e-15);
        assert!(resolve_beta(&config, None).is_err());
    }

    #[test]
    fn wrong_algorithm_and_shape_are_errors() {
        let mut s = state(Algorithm::AnalogSgd, 0.1, 0.0, 2.0);
        assert!(matches!(
            s.step_digital_sgd(&scalar(1.0)),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            s.step(&Matrix::zeros(2, 1)),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            s.step_tiki_taka(&scalar(1.0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn run_records_initial_and_final() {
        let mut r = rng::seeded(1);
        let p = make_least_squares(4, 8, 1.0, 0.2, &mut r).unwrap();
        let mut s = OptimizerState::new(
            &OptimizerConfig::new(Algorithm::AnalogSgd, 0.01),
            Matrix::zeros(4, 1),
            DeviceModel::asymmetric_linear(1.0),
            1e-4,
            100,
            p.lipschitz(),
        )
        .unwrap();
        let out = run(&p, &mut s, &NoiseModel::none(), 1, 1, &mut r).unwrap();
        assert_eq!(
            out.trace.iter().map(|t| t.k).collect::<Vec<_>>(),
            vec![0, 1]
        );
        let out = run(&p, &mut s, &NoiseModel::none(), 10, 4, &mut r).unwrap();
        assert_eq!(
            out.trace.iter().map(|t| t.k).collect::<Vec<_>>(),
            vec![0, 4, 8, 10]
        );
    }

    #[test]
    fn ideal_analog_equals_digital_bitwise() {
        let p = make_least_squares(6, 15, 1.0, 0.5, &mut rng::seeded(2)).unwrap();
        let noise = NoiseModel::gaussian(0.01);
        let mut traj = Vec::new();
        for algo in [Algorithm::DigitalSgd, Algorithm::AnalogSgd] {
            let mut s = OptimizerState::new(
                &OptimizerConfig::new(algo, 0.02),
                Matrix::zeros(6, 1),
                DeviceModel::Ideal,
                1e-4,
                100,
                p.lipschitz(),
            )
            .unwrap();
            let out = run(&p, &mut s, &noise, 300, 1, &mut rng::seeded(9)).unwrap();
            traj.push((out.trace, s.w().clone()));
        }
        assert_eq!(traj[0], traj[1]);
    }

    #[test]
    fn digital_gd_loss_is_monotone() {
        let p = make_least_squares(10, 25, 1.0, 0.3, &mut rng::seeded(4)).unwrap();
        let alpha = 1.0 / p.l();
        let mut s = OptimizerState::new(
            &OptimizerConfig::new(Algorithm::DigitalSgd, alpha),
            Matrix::zeros(10, 1),
            DeviceModel::Ideal,
            1e-4,
            1,
            p.lipschitz(),
        )
        .unwrap();
        let out = run(
            &p,
            &mut s,
            &NoiseModel::none(),
            1000,
            1,
            &mut rng::seeded(0),
        )
        .unwrap();
        // Once the loss reaches round-off level it may jitter by a few ulps of the initial loss.
        let slack = 1e-15 * out.trace[0].loss;
        for pair in out.trace.windows(2) {
            assert!(
                pair[1].loss <= pair[0].loss + slack,
                "{} -> {}",
                pair[0].loss,
                pair[1].loss
            );
        }
    }

    #[test]
    fn weights_stay_bounded_under_training() {
        // Requested increments stay below tau, the regime where boundedness is guaranteed.
        let tau = 1.0;
        let p = make_least_squares(8, 20, 1.0, 1.0, &mut rng::seeded(5))
            .unwrap()
            .scaled(1.0 / 20f64.sqrt())
            .unwrap();
        for algo in [Algorithm::AnalogSgd, Algorithm::TikiTaka] {
            let config = OptimizerConfig::new(algo, 0.02);
            let mut s = OptimizerState::new(
                &config,
                Matrix::zeros(8, 1),
                DeviceModel::asymmetric_linear(tau),
                1e-4,
                100,
                p.lipschitz(),
            )
            .unwrap();
            let out = run(
                &p,
                &mut s,
                &NoiseModel::gaussian(0.1),
                2000,
                1,
                &mut rng::seeded(6),
            )
            .unwrap();
            for rec in &out.trace {
                assert!(rec.w_inf <= tau);
                assert!(rec.p_inf.unwrap_or(0.0) <= tau);
            }
        }
    }

    #[test]
    fn p_mean_reversion() {
        let (beta, tau, p0, sd) = (0.5, 1.0, 0.6, 0.4);
        let config = OptimizerConfig::new(Algorithm::TikiTaka, 0.1).with_beta(beta);
        let normal = Normal::new(0.0, sd).unwrap();
        let mut r = rng::seeded(12);
        let n = 100_000;
        let mut s = OptimizerState::new(
            &config,
            scalar(0.0),
            DeviceModel::asymmetric_linear(tau),
            1e-4,
            10,
            None,
        )
        .unwrap();
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            s.set_p(scalar(p0)).unwrap();
            s.set_w(scalar(0.0)).unwrap();
            s.step(&scalar(normal.sample(&mut r))).unwrap();
            xs.push(s.p().unwrap()[0]);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let abs_eps = sd * (2.0 / std::f64::consts::PI).sqrt();
        let expected = (1.0 - beta / tau * abs_eps) * p0;
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "{mean} vs {expected} (se {se})"
        );
    }
}
