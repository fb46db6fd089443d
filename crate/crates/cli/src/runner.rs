//! Expands a configuration into `(variant, seed)` cells and runs them.
//!
//! Every cell owns its problem instance, tiles and random streams: the
//! problem comes from the seed's problem stream, gradient noise (and
//! minibatches) from its noise stream, network initialization from its
//! auxiliary stream. Variants of one seed therefore share the problem and the
//! noise sequence.

use analog_core::analysis::{
    drift_experiment, DriftResult, DriftSpec, LowerBoundRow, LowerBoundSpec,
};
use analog_core::problems::{
    gaussian_blobs, load_mnist, make_least_squares, Dataset, FcnProblem, LeastSquaresProblem,
};
use analog_core::{
    rng, Algorithm, DeviceModel, NoiseKind, NoiseModel, OptimizerConfig, OptimizerState,
    TraceRecord, UpdateMode,
};
use rand::seq::index::sample;
use rayon::prelude::*;

use crate::config::{DatasetKind, ExperimentConfig, ExperimentKind};
use crate::error::{CliError, Result};

/// Spread of the synthetic classification blobs.
const BLOB_SPREAD: f64 = 1.0;

/// One `(variant, seed)` trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub variant: String,
    pub seed: u64,
    pub trace: Vec<TraceRecord>,
    /// Metrics not recoverable from the trace alone.
    pub extras: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftRow {
    pub algo: Algorithm,
    pub seed: u64,
    pub n_trials: usize,
    pub result: DriftResult,
}

/// Everything an experiment produces, before anything touches the disk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub cells: Vec<Cell>,
    pub lower_bound: Vec<LowerBoundRow>,
    pub drift: Vec<DriftRow>,
}

impl ExperimentOutput {
    pub fn cell(&self, variant: &str, seed: u64) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.seed == seed)
    }
}

/// Settings of one trajectory cell.
#[derive(Debug, Clone)]
struct CellSpec {
    variant: String,
    seed: u64,
    algo: Algorithm,
    alpha: f64,
    device: DeviceModel,
    update_mode: UpdateMode,
    sigma2: f64,
    init: f64,
}

fn plan(config: &ExperimentConfig) -> Result<Vec<CellSpec>> {
    let base = CellSpec {
        variant: String::new(),
        seed: 0,
        algo: config.optim.algo,
        alpha: config.optim.alpha,
        device: config.device.model,
        update_mode: config.device.update_mode,
        sigma2: config.noise.sigma2,
        init: config.optim.init,
    };
    let mut variants = Vec::new();
    match config.experiment {
        ExperimentKind::LrSweep => {
            for algo in config.algos() {
                for alpha in config.alphas() {
                    variants.push(CellSpec {
                        variant: format!("{}_alpha{alpha}", algo.name()),
                        algo,
                        alpha,
                        ..base.clone()
                    });
                }
            }
        }
        ExperimentKind::DynamicMatch => {
            for &tau in &config.sweep.tau {
                for (mode, name) in [
                    (UpdateMode::ClosedForm, "closed_form"),
                    (UpdateMode::Pulsed, "pulsed"),
                ] {
                    variants.push(CellSpec {
                        variant: format!("{name}_tau{tau}"),
                        device: config.device.model_with_tau(tau)?,
                        update_mode: mode,
                        ..base.clone()
                    });
                }
            }
        }
        ExperimentKind::TauSweep => {
            for algo in config.algos() {
                for &tau in &config.sweep.tau {
                    variants.push(CellSpec {
                        variant: format!("{}_tau{tau}", algo.name()),
                        algo,
                        device: config.device.model_with_tau(tau)?,
                        ..base.clone()
                    });
                }
            }
        }
        ExperimentKind::SigmaSweep => {
            for algo in config.algos() {
                for &sigma2 in &config.sweep.sigma2 {
                    variants.push(CellSpec {
                        variant: format!("{}_sigma2{sigma2}", algo.name()),
                        algo,
                        sigma2,
                        ..base.clone()
                    });
                }
            }
        }
        ExperimentKind::InitSweep => {
            for algo in config.algos() {
                for &init in &config.sweep.init {
                    variants.push(CellSpec {
                        variant: format!("{}_init{init}", algo.name()),
                        algo,
                        init,
                        ..base.clone()
                    });
                }
            }
        }
        ExperimentKind::FcnTrain => {
            for algo in config.algos() {
                variants.push(CellSpec {
                    variant: format!("{}_alpha{}", algo.name(), config.optim.alpha),
                    algo,
                    ..base.clone()
                });
            }
        }
        ExperimentKind::LowerBound | ExperimentKind::Drift => {
            unreachable!("not a trajectory experiment")
        }
    }
    Ok(variants
        .into_iter()
        .flat_map(|v| {
            config
                .seeds
                .iter()
                .map(move |&seed| CellSpec { seed, ..v.clone() })
        })
        .collect())
}

/// The seed's least-squares instance, optionally scaled to the per-row mean.
pub fn least_squares_problem(config: &ExperimentConfig, seed: u64) -> Result<LeastSquaresProblem> {
    let p = &config.problem;
    let mut r = rng::stream(seed, rng::STREAM_PROBLEM);
    let problem = make_least_squares(p.d, p.d_out, p.sigma_a2, p.sigma_wstar2, &mut r)?;
    if p.mean_loss {
        Ok(problem.scaled(1.0 / (p.d_out as f64).sqrt())?)
    } else {
        Ok(problem)
    }
}

fn dataset(config: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    let p = &config.problem;
    match p.dataset {
        DatasetKind::Mnist => {
            let dir = config
                .dataset_dir()
                .ok_or_else(|| CliError::config("problem.dataset_dir", "no dataset directory"))?;
            Ok(load_mnist(&dir, Some(p.subset_size))?)
        }
        DatasetKind::Blobs => {
            let mut r = rng::stream(seed, rng::STREAM_PROBLEM);
            let classes = *p.layers.last().expect("validated layers");
            Ok(gaussian_blobs(
                p.subset_size,
                p.layers[0],
                classes,
                BLOB_SPREAD,
                &mut r,
            )?)
        }
    }
}

fn noise_model(kind: NoiseKind, sigma2: f64) -> NoiseModel {
    match kind {
        NoiseKind::None => NoiseModel::none(),
        _ => NoiseModel::gaussian(sigma2),
    }
}

fn optimizer_config(config: &ExperimentConfig, spec: &CellSpec) -> OptimizerConfig {
    let mut oc = OptimizerConfig::new(spec.algo, spec.alpha)
        .with_transfer(config.optim.transfer_mode)
        .with_update_mode(spec.update_mode);
    if let Some(beta) = config.optim.beta {
        oc = oc.with_beta(beta);
    }
    oc
}

fn run_least_squares_cell(config: &ExperimentConfig, spec: &CellSpec) -> Result<Cell> {
    let problem = least_squares_problem(config, spec.seed)?;
    let w0 = analog_core::Matrix::from_element(config.problem.d, 1, spec.init);
    let mut state = OptimizerState::new(
        &optimizer_config(config, spec),
        w0,
        spec.device,
        config.device.dw_min_for(&spec.device),
        config.device.bl_max,
        Some(problem.l()),
    )?;
    let noise = noise_model(config.noise.kind, spec.sigma2);
    let mut r = rng::stream(spec.seed, rng::STREAM_NOISE);
    let out = analog_core::optim::run(
        &problem,
        &mut state,
        &noise,
        config.optim.n_iters,
        config.optim.trace_every,
        &mut r,
    )?;
    Ok(Cell {
        variant: spec.variant.clone(),
        seed: spec.seed,
        trace: out.trace,
        extras: vec![
            ("pulses".into(), out.stats.pulses as f64),
            ("truncated".into(), out.stats.truncated as f64),
        ],
    })
}

/// Minibatch training of the classifier. Trace records hold the minibatch
/// loss and gradient at the current weights; the full-data loss and accuracy
/// are reported once at the end.
fn run_fcn_cell(config: &ExperimentConfig, spec: &CellSpec) -> Result<Cell> {
    let problem = FcnProblem::new(config.problem.layers.clone(), dataset(config, spec.seed)?)?;
    let w0 = problem.init_params(&mut rng::stream(spec.seed, rng::STREAM_AUX));
    let mut state = OptimizerState::new(
        &optimizer_config(config, spec),
        w0,
        spec.device,
        config.device.dw_min_for(&spec.device),
        config.device.bl_max,
        None,
    )?;
    let noise = noise_model(config.noise.kind, spec.sigma2);
    let n = problem.data().len();
    let batch_size = config.problem.batch_size.min(n);
    let every = config.optim.trace_every;
    let mut r = rng::stream(spec.seed, rng::STREAM_NOISE);
    let mut trace = Vec::with_capacity(config.trace_len());
    for k in 0..config.optim.n_iters {
        let batch = sample(&mut r, n, batch_size).into_vec();
        let (loss, grad) = problem.gradient_fcn(state.w(), &batch)?;
        if k % every == 0 {
            trace.push(state.record(k, loss, &grad));
        }
        let eps = noise.sample(grad.shape(), Some(state.w()), &mut r)?;
        state.step(&(grad + eps))?;
    }
    let batch = sample(&mut r, n, batch_size).into_vec();
    let (loss, grad) = problem.gradient_fcn(state.w(), &batch)?;
    trace.push(state.record(config.optim.n_iters, loss, &grad));

    let all: Vec<usize> = (0..n).collect();
    let (full_loss, _) = problem.gradient_fcn(state.w(), &all)?;
    let stats = state.stats();
    Ok(Cell {
        variant: spec.variant.clone(),
        seed: spec.seed,
        trace,
        extras: vec![
            ("full_loss".into(), full_loss),
            ("accuracy".into(), problem.accuracy(state.w())?),
            ("pulses".into(), stats.pulses as f64),
            ("truncated".into(), stats.truncated as f64),
        ],
    })
}

/// Root-mean-square loss gap between two trajectories, normalized by the
/// loss range of `reference`.
pub fn loss_rms_gap(reference: &[TraceRecord], other: &[TraceRecord]) -> Result<f64> {
    if reference.len() != other.len() || reference.iter().zip(other).any(|(a, b)| a.k != b.k) {
        return Err(CliError::Runtime(
            "trajectories are recorded at different iterations".into(),
        ));
    }
    let (lo, hi) = reference
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.loss), hi.max(r.loss))
        });
    let ms = reference
        .iter()
        .zip(other)
        .map(|(a, b)| (a.loss - b.loss).powi(2))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(ms.sqrt() / (hi - lo))
}

fn lower_bound_spec(config: &ExperimentConfig) -> LowerBoundSpec {
    LowerBoundSpec {
        l: config.problem.l,
        w_star: config.problem.w_star,
        tau: config
            .device
            .model
            .saturation_scale()
            .expect("validated device"),
        dim: config.problem.d,
        sigma2: config.noise.sigma2,
        alphas: config.alphas(),
        k_iters: config.optim.n_iters,
        seeds: config.seeds.clone(),
    }
}

fn run_lower_bound(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let spec = lower_bound_spec(config);
    spec.validate()?;
    let every = config.optim.trace_every;
    let jobs: Vec<(f64, u64)> = spec
        .alphas
        .iter()
        .flat_map(|&a| spec.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(alpha, seed)| {
            let (row, trace) = spec.run_cell_traced(alpha, seed)?;
            let last = trace.len() - 1;
            let trace = trace
                .into_iter()
                .enumerate()
                .filter(|(i, r)| r.k % every == 0 || *i == last)
                .map(|(_, r)| r)
                .collect();
            let cell = Cell {
                variant: format!("alpha{alpha}"),
                seed,
                trace,
                extras: Vec::new(),
            };
            Ok((row, cell))
        })
        .collect::<Result<Vec<_>>>()?;
    let (lower_bound, cells) = results.into_iter().unzip();
    Ok(ExperimentOutput {
        cells,
        lower_bound,
        drift: Vec::new(),
    })
}

fn run_drift(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let tau = config
        .device
        .model
        .saturation_scale()
        .expect("validated device");
    let jobs: Vec<(Algorithm, u64)> = config
        .algos()
        .into_iter()
        .flat_map(|a| config.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let drift = jobs
        .par_iter()
        .map(|&(algo, seed)| {
            let spec = DriftSpec {
                algo,
                tau,
                alpha: config.optim.alpha,
                beta: config.optim.beta.unwrap_or(0.0),
                // One coordinate, so the total variance is the per-coordinate one.
                sigma2: config.noise.sigma2,
                w0: config.optim.init,
                n_trials: config.optim.n_iters,
            };
            let result = drift_experiment(&spec, &mut rng::stream(seed, rng::STREAM_NOISE))?;
            Ok(DriftRow {
                algo,
                seed,
                n_trials: spec.n_trials,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutput {
        drift,
        ..ExperimentOutput::default()
    })
}

/// Validates `config` and runs every cell, returning results in a
/// deterministic order (variant-major, then seed).
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::LowerBound => return run_lower_bound(config),
        ExperimentKind::Drift => return run_drift(config),
        _ => {}
    }
    let specs = plan(config)?;
    let mut cells = specs
        .par_iter()
        .map(|spec| match config.experiment {
            ExperimentKind::FcnTrain => run_fcn_cell(config, spec),
            _ => run_least_squares_cell(config, spec),
        })
        .collect::<Result<Vec<_>>>()?;

    if config.experiment == ExperimentKind::DynamicMatch {
        let gaps = cells
            .iter()
            .map(|c| match c.variant.strip_prefix("pulsed_") {
                Some(rest) => {
                    let reference = cells
                        .iter()
                        .find(|r| r.seed == c.seed && r.variant == format!("closed_form_{rest}"))
                        .ok_or_else(|| {
                            CliError::Runtime(format!("no closed-form partner for {}", c.variant))
                        })?;
                    loss_rms_gap(&reference.trace, &c.trace).map(Some)
                }
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        for (cell, gap) in cells.iter_mut().zip(gaps) {
            if let Some(g) = gap {
                cell.extras.push(("loss_rms_gap".into(), g));
            }
        }
    }
    Ok(ExperimentOutput {
        cells,
        ..ExperimentOutput::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ProblemKind;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut c =
            ExperimentConfig::from_toml(&format!("experiment = \"{}\"", kind.name())).unwrap();
        c.problem.d = 4;
        c.problem.d_out = 8;
        c.optim.n_iters = 600;
        c.noise.sigma2 = 1e-3;
        c.seeds = vec![0, 1];
        c
    }

    #[test]
    fn lr_sweep_cells_are_variant_major() {
        let mut c = small(ExperimentKind::LrSweep);
        c.sweep.algos = vec![Algorithm::DigitalSgd, Algorithm::AnalogSgd];
        c.sweep.alpha = vec![0.1, 0.05];
        let out = execute(&c).unwrap();
        let names: Vec<(String, u64)> = out
            .cells
            .iter()
            .map(|c| (c.variant.clone(), c.seed))
            .collect();
        assert_eq!(names.len(), 8);
        assert_eq!(names[0], ("digital_sgd_alpha0.1".to_string(), 0));
        assert_eq!(names[1], ("digital_sgd_alpha0.1".to_string(), 1));
        assert_eq!(names[7], ("analog_sgd_alpha0.05".to_string(), 1));
        assert_eq!(out.cells[0].trace.len(), 601);
    }

    #[test]
    fn execution_is_deterministic() {
        let mut c = small(ExperimentKind::TauSweep);
        c.sweep.tau = vec![1.0, 2.0];
        assert_eq!(execute(&c).unwrap(), execute(&c).unwrap());
    }

    #[test]
    fn dynamic_match_pairs_modes() {
        let mut c = small(ExperimentKind::DynamicMatch);
        c.sweep.tau = vec![1.0];
        c.device.n_states = Some(300.0);
        c.device.bl_max = 300;
        let out = execute(&c).unwrap();
        let pulsed = out.cell("pulsed_tau1", 0).unwrap();
        assert!(pulsed
            .extras
            .iter()
            .any(|(k, v)| k == "loss_rms_gap" && v.is_finite()));
        assert!(out
            .cell("closed_form_tau1", 0)
            .unwrap()
            .extras
            .iter()
            .all(|(k, _)| k != "loss_rms_gap"));
    }

    #[test]
    fn rms_gap_of_identical_traces_is_zero() {
        let t: Vec<TraceRecord> = (0..5)
            .map(|k| TraceRecord::new(k, k as f64, 0.0, 0.0, None, None))
            .collect();
        assert_eq!(loss_rms_gap(&t, &t).unwrap(), 0.0);
        assert!(loss_rms_gap(&t, &t[..4]).is_err());
    }

    #[test]
    fn fcn_cells_report_accuracy() {
        let mut c = small(ExperimentKind::FcnTrain);
        c.problem.kind = ProblemKind::Fcn;
        c.problem.layers = vec![6, 5, 3];
        c.problem.subset_size = 60;
        c.problem.batch_size = 8;
        c.noise.sigma2 = 0.0;
        c.seeds = vec![3];
        let out = execute(&c).unwrap();
        let acc = out.cells[0]
            .extras
            .iter()
            .find(|(k, _)| k == "accuracy")
            .unwrap()
            .1;
        assert!((0.0..=1.0).contains(&acc));
    }
}
