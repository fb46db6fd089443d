//! Acceptance checks, shared by `simulate verify` and the `acceptance` test.
//!
//! Each criterion reruns a built-in preset (or a randomized property sweep),
//! evaluates its pass condition together with its runtime budget, and
//! reports the measured numbers.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use analog_core::analysis::mean_std;
use analog_core::devices::{apply_update_closed, pulse_coordinate, pulse_length, response_factors};
use analog_core::noise::{estimate_noise_constant_c, NoiseModel};
use analog_core::problems::{gaussian_blobs, make_least_squares, FcnProblem, DEFAULT_LAYERS};
use analog_core::{rng, Algorithm, AnalogTile, DeviceModel, Matrix, Problem, UpdateMode};
use rand::seq::index::sample;
use rand::Rng;

use crate::config::ExperimentKind;
use crate::error::{CliError, Result};
use crate::output::{summarize_output, summary_mean};
use crate::presets::preset;
use crate::runner::{execute, ExperimentOutput};

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct Check {
    pub id: String,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<4} {} -- {} ({:.2}s, budget {}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

type Body = fn() -> Result<(bool, String)>;

struct Criterion {
    number: u32,
    title: &'static str,
    budget_secs: u64,
    body: Body,
}

const CRITERIA: [Criterion; 12] = [
    Criterion {
        number: 1,
        title: "saturation / fast-reset equalities of the ALD update",
        budget_secs: 1,
        body: c1_factor_equalities,
    },
    Criterion {
        number: 2,
        title: "weights stay inside [-tau, tau]",
        budget_secs: 10,
        body: c2_bounded_weight,
    },
    Criterion {
        number: 3,
        title: "pulse engine error <= dw_min/tau + dw^2/(2 tau)",
        budget_secs: 5,
        body: c3_pulse_error_bound,
    },
    Criterion {
        number: 4,
        title: "pulsed and closed-form loss trajectories match",
        budget_secs: 120,
        body: c4_dynamic_match,
    },
    Criterion {
        number: 5,
        title: "Analog SGD plateau is alpha-independent, Digital SGD is not",
        budget_secs: 300,
        body: c5_lr_sweep,
    },
    Criterion {
        number: 6,
        title: "tail error decreases in tau and increases in sigma^2",
        budget_secs: 300,
        body: c6_tau_sigma_monotone,
    },
    Criterion {
        number: 7,
        title: "tail error is independent of the initialization",
        budget_secs: 180,
        body: c7_init_independent,
    },
    Criterion {
        number: 8,
        title: "lower-bound identity avg ||grad||^2 = 4 sigma^2 S_K + Theta(alpha)",
        budget_secs: 300,
        body: c8_lower_bound,
    },
    Criterion {
        number: 9,
        title: "one-step drift of Analog SGD and Tiki-Taka",
        budget_secs: 60,
        body: c9_drift,
    },
    Criterion {
        number: 10,
        title: "Tiki-Taka removes the plateau",
        budget_secs: 300,
        body: c10_tiki_taka,
    },
    Criterion {
        number: 11,
        title: "noise constant c = sqrt(2/pi) for Gaussian noise",
        budget_secs: 5,
        body: c11_noise_constant,
    },
    Criterion {
        number: 12,
        title: "gradient oracles match central finite differences",
        budget_secs: 30,
        body: c12_gradient_oracles,
    },
];

fn timed(id: String, title: &'static str, budget: Duration, body: Body) -> Check {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let (ok, detail) = match outcome {
        Ok(Ok(v)) => v,
        Ok(Err(e)) => (false, format!("error: {e}")),
        Err(_) => (false, "panicked".to_string()),
    };
    let in_budget = elapsed <= budget;
    let detail = if in_budget {
        detail
    } else {
        format!("{detail}; over time budget")
    };
    Check {
        id,
        title,
        passed: ok && in_budget,
        detail,
        elapsed,
        budget,
    }
}

/// Runs the criteria whose numbers are in `only` (all when empty).
pub fn run_selected(only: &[u32]) -> Vec<Check> {
    CRITERIA
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.number))
        .map(|c| {
            timed(
                format!("C{}", c.number),
                c.title,
                Duration::from_secs(c.budget_secs),
                c.body,
            )
        })
        .collect()
}

pub fn run_all() -> Vec<Check> {
    run_selected(&[])
}

/// Supplementary checks run next to the criteria: the exact forms of the
/// bounds that criteria 3 and 8 state loosely.
pub fn companion_checks() -> Vec<Check> {
    vec![
        timed(
            "C3x".into(),
            "pulse engine error <= q_s(w) max(dw_min, |dw|(|dw|+dw_min)/(2 tau))",
            Duration::from_secs(5),
            c3_exact_pulse_bound,
        ),
        timed(
            "C8x".into(),
            "lower-bound identity avg ||grad||^2 = sigma^2 S_K + Theta(alpha)",
            Duration::from_secs(300),
            c8_sigma2_identity,
        ),
    ]
}

fn ald(tau: f64, w_sym: f64) -> DeviceModel {
    DeviceModel::AsymmetricLinear { tau, w_sym }
}

fn c1_factor_equalities() -> Result<(bool, String)> {
    let mut r = rng::seeded(101);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let tau = 10f64.powf(r.random_range(-1.0..=1.0));
        let w_sym = tau * r.random_range(-1.0..=1.0);
        let w = w_sym + tau * r.random_range(-1.0..=1.0);
        let mag = tau * 10f64.powf(r.random_range(-3.0..=0.0));
        let dw = if r.random::<bool>() { mag } else { -mag };
        let u = apply_update_closed(&ald(tau, w_sym), w, dw)?;
        let away = dw * (w - w_sym) > 0.0;
        let factor = if away {
            1.0 - (w - w_sym).abs() / tau
        } else {
            1.0 + (w - w_sym).abs() / tau
        };
        worst = worst.max(((u - w) - dw * factor).abs() / dw.abs());
    }
    Ok((
        worst <= 1e-12,
        format!("max relative error {worst:.3e} over 10^4 tuples"),
    ))
}

fn c2_bounded_weight() -> Result<(bool, String)> {
    let mut r = rng::seeded(202);
    let mut worst: f64 = 0.0;
    let mut violations = 0usize;
    for seq in 0..100 {
        let tau = 10f64.powf(r.random_range(-1.0..=1.0));
        let mode = if seq % 2 == 0 {
            UpdateMode::ClosedForm
        } else {
            UpdateMode::Pulsed
        };
        let w0 = Matrix::from_fn(2, 2, |_, _| tau * r.random_range(-1.0..=1.0));
        let mut tile = AnalogTile::new(w0, ald(tau, 0.0), tau / 20.0, 20)?;
        for _ in 0..10_000 {
            let dw = Matrix::from_fn(2, 2, |_, _| tau * r.random_range(-1.0..=1.0));
            tile.apply(&dw, mode)?;
            let ratio = tile.inf_norm() / tau;
            worst = worst.max(ratio);
            if ratio > 1.0 + 1e-12 {
                violations += 1;
            }
        }
    }
    Ok((
        violations == 0,
        format!("max ||W||_inf/tau = {worst:.15}, {violations} violations over 100 x 10^4 steps"),
    ))
}

/// Random single updates on an ALD at `tau = 3`, `dw_min = 1e-4`, returning
/// `(w, dw, |pulsed - closed|)`.
fn pulse_samples(seed: u64) -> Result<Vec<(f64, f64, f64)>> {
    const TAU: f64 = 3.0;
    const DW_MIN: f64 = 1e-4;
    const BL_MAX: u32 = 4000;
    let device = ald(TAU, 0.0);
    let mut r = rng::seeded(seed);
    (0..10_000)
        .map(|_| {
            let w = TAU * r.random_range(-0.9..=0.9);
            let dw = TAU * r.random_range(-0.1..=0.1);
            let train = pulse_length(dw, DW_MIN, BL_MAX);
            debug_assert!(!train.truncated);
            let pulsed = pulse_coordinate(&device, w, train, DW_MIN)?;
            let closed = apply_update_closed(&device, w, dw)?;
            Ok((w, dw, (pulsed - closed).abs()))
        })
        .collect()
}

fn c3_pulse_error_bound() -> Result<(bool, String)> {
    let (tau, dw_min): (f64, f64) = (3.0, 1e-4);
    let samples = pulse_samples(303)?;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for &(_, dw, err) in &samples {
        let bound = dw_min / tau + dw * dw / (2.0 * tau);
        worst = worst.max(err / bound);
        if err > bound {
            violations += 1;
        }
    }
    Ok((
        violations == 0,
        format!("{violations} of 10^4 updates violate the bound (max error/bound {worst:.3}) at tau=3, dw_min=1e-4"),
    ))
}

fn c3_exact_pulse_bound() -> Result<(bool, String)> {
    let (tau, dw_min): (f64, f64) = (3.0, 1e-4);
    let device = ald(tau, 0.0);
    let samples = pulse_samples(303)?;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for &(w, dw, err) in &samples {
        let (q_plus, q_minus) = response_factors(&device, w)?;
        let q = if dw >= 0.0 { q_plus } else { q_minus };
        let bound = q * dw_min.max(dw.abs() * (dw.abs() + dw_min) / (2.0 * tau));
        worst = worst.max(err / bound);
        if err > bound * (1.0 + 1e-9) {
            violations += 1;
        }
    }
    Ok((
        violations == 0,
        format!("{violations} of 10^4 updates violate the bound (max error/bound {worst:.3})"),
    ))
}

fn c4_dynamic_match() -> Result<(bool, String)> {
    let config = preset(ExperimentKind::DynamicMatch);
    let out = execute(&config)?;
    let mut parts = Vec::new();
    let mut ok = true;
    for &tau in &config.sweep.tau {
        let mut worst: f64 = 0.0;
        for &seed in &config.seeds {
            let cell = out.cell(&format!("pulsed_tau{tau}"), seed).ok_or_else(|| {
                CliError::Runtime(format!("missing pulsed cell tau={tau} seed={seed}"))
            })?;
            let gap = cell
                .extras
                .iter()
                .find(|(k, _)| k == "loss_rms_gap")
                .map(|(_, v)| *v)
                .ok_or_else(|| CliError::Runtime("missing loss_rms_gap".into()))?;
            worst = worst.max(gap);
        }
        ok &= worst <= 0.05;
        parts.push(format!("tau={tau}: {:.2}%", 100.0 * worst));
    }
    Ok((
        ok,
        format!(
            "worst normalized RMS gap per tau over 3 seeds: {}",
            parts.join(", ")
        ),
    ))
}

fn c5_lr_sweep() -> Result<(bool, String)> {
    let config = preset(ExperimentKind::LrSweep);
    let summary = summarize_output(&config, &execute(&config)?)?;
    let alphas = [0.2, 0.1, 0.05, 0.025];
    let tail = |algo: Algorithm, a: f64| {
        summary_mean(&summary, &format!("{}_alpha{a}", algo.name()), "tail_loss")
    };
    let digital = alphas
        .iter()
        .map(|&a| tail(Algorithm::DigitalSgd, a))
        .collect::<Result<Vec<_>>>()?;
    let analog = alphas
        .iter()
        .map(|&a| tail(Algorithm::AnalogSgd, a))
        .collect::<Result<Vec<_>>>()?;
    let halvings: Vec<f64> = digital.windows(2).map(|p| p[0] / p[1]).collect();
    let digital_ok = halvings.iter().all(|&x| x >= 1.5);
    let spread = analog[2].max(analog[3]) / analog[2].min(analog[3]);
    let excess = analog[2].min(analog[3]) / digital[3];
    let ok = digital_ok && spread < 2.0 && excess >= 5.0;
    Ok((
        ok,
        format!(
            "digital tail {} (halving ratios {}); analog tail {}; analog spread {spread:.2}x, analog/digital(0.025) {excess:.1}x",
            fmt_list(&digital),
            fmt_ratios(&halvings),
            fmt_list(&analog)
        ),
    ))
}

fn sweep_tails(kind: ExperimentKind) -> Result<(Vec<f64>, Vec<f64>)> {
    let config = preset(kind);
    let summary = summarize_output(&config, &execute(&config)?)?;
    let (label, values) = match kind {
        ExperimentKind::TauSweep => ("tau", config.sweep.tau.clone()),
        ExperimentKind::SigmaSweep => ("sigma2", config.sweep.sigma2.clone()),
        ExperimentKind::InitSweep => ("init", config.sweep.init.clone()),
        _ => unreachable!("not a one-axis sweep"),
    };
    let tails = values
        .iter()
        .map(|v| {
            summary_mean(
                &summary,
                &format!("{}_{label}{v}", config.optim.algo.name()),
                "tail_grad_norm_sq",
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((values, tails))
}

fn c6_tau_sigma_monotone() -> Result<(bool, String)> {
    let (taus, by_tau) = sweep_tails(ExperimentKind::TauSweep)?;
    let (sigmas, by_sigma) = sweep_tails(ExperimentKind::SigmaSweep)?;
    let tau_ok = by_tau.windows(2).all(|p| p[1] < p[0]);
    let sigma_ok = by_sigma.windows(2).all(|p| p[1] > p[0]);
    Ok((
        tau_ok && sigma_ok,
        format!(
            "tau {taus:?} -> {}; sigma2 {sigmas:?} -> {}",
            fmt_list(&by_tau),
            fmt_list(&by_sigma)
        ),
    ))
}

fn c7_init_independent() -> Result<(bool, String)> {
    let (inits, tails) = sweep_tails(ExperimentKind::InitSweep)?;
    let max = tails.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = tails.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((
        max / min <= 2.0,
        format!(
            "init {inits:?} -> {}; max/min {:.4}",
            fmt_list(&tails),
            max / min
        ),
    ))
}

fn lower_bound_output() -> &'static std::result::Result<ExperimentOutput, String> {
    static CACHE: OnceLock<std::result::Result<ExperimentOutput, String>> = OnceLock::new();
    CACHE.get_or_init(|| execute(&preset(ExperimentKind::LowerBound)).map_err(|e| e.to_string()))
}

/// Seed-mean `(alpha, avg ||grad||^2, sigma^2 S_K)` per alpha, largest alpha first.
fn lower_bound_means() -> Result<Vec<(f64, f64, f64)>> {
    let out = lower_bound_output()
        .as_ref()
        .map_err(|e| CliError::Runtime(e.clone()))?;
    let mut alphas: Vec<f64> = out.lower_bound.iter().map(|r| r.alpha).collect();
    alphas.sort_by(|a, b| b.total_cmp(a));
    alphas.dedup();
    Ok(alphas
        .into_iter()
        .map(|a| {
            let rows: Vec<_> = out.lower_bound.iter().filter(|r| r.alpha == a).collect();
            let avg = mean_std(&rows.iter().map(|r| r.avg_grad_norm_sq).collect::<Vec<_>>()).0;
            let s2sk = mean_std(&rows.iter().map(|r| r.sigma2_sk()).collect::<Vec<_>>()).0;
            (a, avg, s2sk)
        })
        .collect())
}

/// Checks `|avg - m sigma^2 S_K| / (m sigma^2 S_K) <= 0.25` at the smallest
/// alpha and `residual(alpha)/residual(alpha/2)` in `[1.4, 2.6]`.
fn lower_bound_identity(multiplier: f64) -> Result<(bool, String)> {
    let means = lower_bound_means()?;
    let &(a_min, avg, s2sk) = means
        .last()
        .ok_or_else(|| CliError::Runtime("no lower-bound rows".into()))?;
    let target = multiplier * s2sk;
    let rel = (avg - target).abs() / target;
    let residual = |a: f64| {
        means
            .iter()
            .find(|m| m.0 == a)
            .map(|&(_, avg, s2sk)| avg - multiplier * s2sk)
    };
    let mut ratios = Vec::new();
    for &(a, _, _) in &means {
        if let (Some(r1), Some(r2)) = (residual(a), residual(a / 2.0)) {
            ratios.push(r1 / r2);
        }
    }
    let ok = rel <= 0.25 && !ratios.is_empty() && ratios.iter().all(|r| (1.4..=2.6).contains(r));
    Ok((
        ok,
        format!(
            "at alpha={a_min}: avg {avg:.4e} vs {multiplier} sigma^2 S_K {target:.4e} (rel {rel:.3}); residual halving ratios {}",
            fmt_ratios(&ratios)
        ),
    ))
}

fn c8_lower_bound() -> Result<(bool, String)> {
    lower_bound_identity(4.0)
}

fn c8_sigma2_identity() -> Result<(bool, String)> {
    lower_bound_identity(1.0)
}

fn c9_drift() -> Result<(bool, String)> {
    let config = preset(ExperimentKind::Drift);
    let beta = config
        .optim
        .beta
        .ok_or_else(|| CliError::config("optim.beta", "drift preset needs beta"))?;
    let out = execute(&config)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for &seed in &config.seeds {
        let get = |algo: Algorithm| {
            out.drift
                .iter()
                .find(|r| r.algo == algo && r.seed == seed)
                .map(|r| r.result)
                .ok_or_else(|| {
                    CliError::Runtime(format!("missing drift row {} seed {seed}", algo.name()))
                })
        };
        let analog = get(Algorithm::AnalogSgd)?;
        let tt = get(Algorithm::TikiTaka)?;
        let ratio = tt.mean / analog.mean;
        let ratio_ok = ((ratio - beta) / beta).abs() <= 0.15;
        ok &= analog.within(3.0) && tt.within(3.0) && ratio_ok;
        parts.push(format!(
            "seed {seed}: analog {:.4e} vs {:.4e} ({:+.2} SE), tiki-taka {:.4e} vs {:.4e} ({:+.2} SE), ratio {ratio:.4}",
            analog.mean,
            analog.predicted,
            (analog.mean - analog.predicted) / analog.std_err,
            tt.mean,
            tt.predicted,
            (tt.mean - tt.predicted) / tt.std_err,
        ));
    }
    Ok((ok, format!("beta={beta}; {}", parts.join("; "))))
}

fn c10_tiki_taka() -> Result<(bool, String)> {
    let mut config = preset(ExperimentKind::LrSweep);
    config.sweep.algos = vec![Algorithm::AnalogSgd, Algorithm::TikiTaka];
    config.sweep.alpha = vec![0.1, 0.05, 0.025];
    config.optim.beta = None;
    let summary = summarize_output(&config, &execute(&config)?)?;
    let tail = |algo: Algorithm, a: f64| {
        summary_mean(
            &summary,
            &format!("{}_alpha{a}", algo.name()),
            "tail_grad_norm_sq",
        )
    };
    let tt = config
        .sweep
        .alpha
        .iter()
        .map(|&a| tail(Algorithm::TikiTaka, a))
        .collect::<Result<Vec<_>>>()?;
    let analog = config
        .sweep
        .alpha
        .iter()
        .map(|&a| tail(Algorithm::AnalogSgd, a))
        .collect::<Result<Vec<_>>>()?;
    let halvings: Vec<f64> = tt.windows(2).map(|p| p[0] / p[1]).collect();
    let share = tt[2] / analog[2];
    let ok = halvings.iter().all(|&x| x >= 1.5) && share <= 0.2;
    Ok((
        ok,
        format!(
            "tiki-taka tail {} (halving ratios {}); analog tail {}; tiki-taka/analog at 0.025 = {share:.3}",
            fmt_list(&tt),
            fmt_ratios(&halvings),
            fmt_list(&analog)
        ),
    ))
}

fn c11_noise_constant() -> Result<(bool, String)> {
    let c = estimate_noise_constant_c(
        &NoiseModel::gaussian(1.0),
        &[0.0],
        1_000_000,
        &mut rng::seeded(1111),
    )?;
    let expected = (2.0 / std::f64::consts::PI).sqrt();
    let rel = (c - expected) / expected;
    Ok((
        rel.abs() <= 0.01,
        format!("c = {c:.5}, sqrt(2/pi) = {expected:.5}, rel {rel:+.2e}"),
    ))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn c12_gradient_oracles() -> Result<(bool, String)> {
    let mut r = rng::seeded(1212);
    let data = gaussian_blobs(16, DEFAULT_LAYERS[0], DEFAULT_LAYERS[3], 1.0, &mut r)?;
    let fcn = FcnProblem::new(DEFAULT_LAYERS.to_vec(), data)?;
    let params = fcn.init_params(&mut r);
    let batch: Vec<usize> = (0..16).collect();
    let (_, g) = fcn.gradient_fcn(&params, &batch)?;
    let h = 1e-5;
    let mut fcn_worst: f64 = 0.0;
    let coords = sample(&mut r, fcn.n_params(), 100).into_vec();
    for &i in &coords {
        let mut p = params.clone();
        p[i] += h;
        let up = fcn.gradient_fcn(&p, &batch)?.0;
        p[i] -= 2.0 * h;
        let down = fcn.gradient_fcn(&p, &batch)?.0;
        fcn_worst = fcn_worst.max(rel_err(g[i], (up - down) / (2.0 * h)));
    }

    let ls = make_least_squares(40, 100, 1.0, 0.2025, &mut r)?;
    let w = Matrix::from_fn(40, 1, |_, _| r.random_range(-1.0..1.0));
    let (_, g) = ls.gradient(&w)?;
    let mut ls_worst: f64 = 0.0;
    for i in 0..40 {
        let mut p = w.clone();
        p[i] += h;
        let up = ls.loss(&p)?;
        p[i] -= 2.0 * h;
        let down = ls.loss(&p)?;
        ls_worst = ls_worst.max(rel_err(g[i], (up - down) / (2.0 * h)));
    }
    Ok((
        fcn_worst <= 1e-5 && ls_worst <= 1e-8,
        format!(
            "FCN {:?}: max rel error {fcn_worst:.2e} over {} coordinates; least squares: {ls_worst:.2e} over 40",
            DEFAULT_LAYERS,
            coords.len()
        ),
    ))
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_ratios(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2}")).collect();
    format!("[{}]", parts.join(", "))
}
