//! Experiment configuration: one TOML document, optionally patched with
//! dotted-path overrides such as `--optim.alpha 0.05`.

use std::fs;
use std::path::{Path, PathBuf};

use analog_core::problems::DEFAULT_LAYERS;
use analog_core::{Algorithm, DeviceModel, NoiseKind, TransferMode, UpdateMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Environment variable naming the directory that holds the MNIST IDX files.
pub const DATASET_DIR_ENV: &str = "ANALOG_DATASET_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LrSweep,
    DynamicMatch,
    TauSweep,
    SigmaSweep,
    InitSweep,
    LowerBound,
    Drift,
    FcnTrain,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::LrSweep,
        ExperimentKind::DynamicMatch,
        ExperimentKind::TauSweep,
        ExperimentKind::SigmaSweep,
        ExperimentKind::InitSweep,
        ExperimentKind::LowerBound,
        ExperimentKind::Drift,
        ExperimentKind::FcnTrain,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::LrSweep => "lr_sweep",
            ExperimentKind::DynamicMatch => "dynamic_match",
            ExperimentKind::TauSweep => "tau_sweep",
            ExperimentKind::SigmaSweep => "sigma_sweep",
            ExperimentKind::InitSweep => "init_sweep",
            ExperimentKind::LowerBound => "lower_bound",
            ExperimentKind::Drift => "drift",
            ExperimentKind::FcnTrain => "fcn_train",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Experiments whose cells are full training trajectories.
    pub fn is_trajectory(&self) -> bool {
        !matches!(self, ExperimentKind::LowerBound | ExperimentKind::Drift)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[default]
    LeastSquares,
    LowerBound,
    Fcn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Synthetic Gaussian blobs; needs no files.
    #[default]
    Blobs,
    Mnist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub kind: ProblemKind,
    #[serde(rename = "D", default = "default_d")]
    pub d: usize,
    #[serde(rename = "D_out", default = "default_d_out")]
    pub d_out: usize,
    #[serde(rename = "sigma_A2", default = "one")]
    pub sigma_a2: f64,
    #[serde(rename = "sigma_Wstar2", default = "default_sigma_wstar2")]
    pub sigma_wstar2: f64,
    /// Scale the least-squares objective to the per-row mean (`A / sqrt(D_out)`).
    #[serde(default = "yes")]
    pub mean_loss: bool,
    /// Lower-bound instance curvature.
    #[serde(rename = "L", default = "one")]
    pub l: f64,
    /// Lower-bound instance optimum (every coordinate).
    #[serde(default = "default_w_star")]
    pub w_star: f64,
    #[serde(default)]
    pub dataset: DatasetKind,
    /// MNIST directory; falls back to `$ANALOG_DATASET_DIR`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_dir: Option<PathBuf>,
    #[serde(default = "default_subset")]
    pub subset_size: usize,
    #[serde(default = "default_layers")]
    pub layers: Vec<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            kind: ProblemKind::LeastSquares,
            d: default_d(),
            d_out: default_d_out(),
            sigma_a2: 1.0,
            sigma_wstar2: default_sigma_wstar2(),
            mean_loss: true,
            l: 1.0,
            w_star: default_w_star(),
            dataset: DatasetKind::Blobs,
            dataset_dir: None,
            subset_size: default_subset(),
            layers: default_layers(),
            batch_size: default_batch(),
        }
    }
}

/// Device model (flattened: `kind`, `tau`, ...) plus the pulse parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    #[serde(flatten)]
    pub model: DeviceModel,
    #[serde(default = "default_dw_min")]
    pub dw_min: f64,
    #[serde(default = "default_bl_max")]
    pub bl_max: u32,
    /// When set, `dw_min` is derived as (device range width) / `n_states`,
    /// so it follows `tau` across a sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_states: Option<f64>,
    #[serde(default)]
    pub update_mode: UpdateMode,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            model: DeviceModel::asymmetric_linear(3.0),
            dw_min: default_dw_min(),
            bl_max: default_bl_max(),
            n_states: None,
            update_mode: UpdateMode::ClosedForm,
        }
    }
}

impl DeviceConfig {
    /// The device with its saturation scale replaced by `tau`.
    pub fn model_with_tau(&self, tau: f64) -> Result<DeviceModel> {
        match self.model {
            DeviceModel::AsymmetricLinear { w_sym, .. } => {
                Ok(DeviceModel::AsymmetricLinear { tau, w_sym })
            }
            _ => Err(CliError::config(
                "device.kind",
                "a tau sweep needs an asymmetric_linear device",
            )),
        }
    }

    /// Pulse granularity for `model`.
    pub fn dw_min_for(&self, model: &DeviceModel) -> f64 {
        match (self.n_states, model.admissible_range()) {
            (Some(n), Some((lo, hi))) => (hi - lo) / n,
            _ => self.dw_min,
        }
    }
}

/// Gradient noise. `sigma2` is the total variance `E||eps||^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_noise_kind")]
    pub kind: NoiseKind,
    #[serde(default)]
    pub sigma2: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::GaussianIid,
            sigma2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    #[serde(default = "default_algo")]
    pub algo: Algorithm,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Tiki-Taka `P` rate; `8 alpha L` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub transfer_mode: TransferMode,
    /// Iterations per run (trials for `drift`, `K` for `lower_bound`).
    #[serde(default = "default_n_iters")]
    pub n_iters: usize,
    #[serde(default = "one_usize")]
    pub trace_every: usize,
    /// Constant initial weight (`w0` for `drift`).
    #[serde(default)]
    pub init: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            algo: default_algo(),
            alpha: default_alpha(),
            beta: None,
            transfer_mode: TransferMode::Full,
            n_iters: default_n_iters(),
            trace_every: 1,
            init: 0.0,
        }
    }
}

/// Axes swept by the experiment. Empty lists fall back to the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub algos: Vec<Algorithm>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub tau: Vec<f64>,
    #[serde(default)]
    pub sigma2: Vec<f64>,
    #[serde(default)]
    pub init: Vec<f64>,
    /// Fraction of trace records used for tail metrics.
    #[serde(default = "default_tail_fraction")]
    pub tail_fraction: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            algos: Vec::new(),
            alpha: Vec::new(),
            tau: Vec::new(),
            sigma2: Vec::new(),
            init: Vec::new(),
            tail_fraction: default_tail_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub device: DeviceConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_d() -> usize {
    40
}
fn default_d_out() -> usize {
    100
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_sigma_wstar2() -> f64 {
    0.45 * 0.45
}
fn default_w_star() -> f64 {
    0.1
}
fn default_subset() -> usize {
    2000
}
fn default_layers() -> Vec<usize> {
    DEFAULT_LAYERS.to_vec()
}
fn default_batch() -> usize {
    32
}
fn default_dw_min() -> f64 {
    1e-4
}
fn default_bl_max() -> u32 {
    800
}
fn default_noise_kind() -> NoiseKind {
    NoiseKind::GaussianIid
}
fn default_algo() -> Algorithm {
    Algorithm::AnalogSgd
}
fn default_alpha() -> f64 {
    0.1
}
fn default_n_iters() -> usize {
    1000
}
fn default_tail_fraction() -> f64 {
    0.2
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(
            key,
            format!("must be a finite number > 0, got {v}"),
        ))
    }
}

fn nonempty<T>(key: &str, xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        Err(CliError::config(key, "must not be empty"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    /// Algorithms of the run: `sweep.algos`, else `optim.algo`.
    pub fn algos(&self) -> Vec<Algorithm> {
        if self.sweep.algos.is_empty() {
            vec![self.optim.algo]
        } else {
            self.sweep.algos.clone()
        }
    }

    /// Step sizes of the run: `sweep.alpha`, else `optim.alpha`.
    pub fn alphas(&self) -> Vec<f64> {
        if self.sweep.alpha.is_empty() {
            vec![self.optim.alpha]
        } else {
            self.sweep.alpha.clone()
        }
    }

    /// Records per trajectory trace.
    pub fn trace_len(&self) -> usize {
        self.optim.n_iters / self.optim.trace_every
            + 1
            + usize::from(!self.optim.n_iters.is_multiple_of(self.optim.trace_every))
    }

    /// Checks every key before anything runs.
    pub fn validate(&self) -> Result<()> {
        nonempty("seeds", &self.seeds)?;
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(CliError::config("seeds", "contains duplicates"));
        }

        let p = &self.problem;
        if p.d == 0 {
            return Err(CliError::config("problem.D", "must be >= 1"));
        }
        if p.d_out == 0 {
            return Err(CliError::config("problem.D_out", "must be >= 1"));
        }
        positive("problem.sigma_A2", p.sigma_a2)?;
        positive("problem.sigma_Wstar2", p.sigma_wstar2)?;
        if p.layers.len() < 2 || p.layers.contains(&0) {
            return Err(CliError::config(
                "problem.layers",
                "needs >= 2 widths, all >= 1",
            ));
        }
        if p.batch_size == 0 {
            return Err(CliError::config("problem.batch_size", "must be >= 1"));
        }
        if p.subset_size == 0 {
            return Err(CliError::config("problem.subset_size", "must be >= 1"));
        }

        self.device
            .model
            .validate()
            .map_err(|e| CliError::config("device", e.to_string()))?;
        positive("device.dw_min", self.device.dw_min)?;
        if self.device.bl_max == 0 {
            return Err(CliError::config("device.bl_max", "must be >= 1"));
        }
        if let Some(n) = self.device.n_states {
            positive("device.n_states", n)?;
        }

        if !(self.noise.sigma2.is_finite() && self.noise.sigma2 >= 0.0) {
            return Err(CliError::config(
                "noise.sigma2",
                "must be a finite number >= 0",
            ));
        }
        if self.noise.kind == NoiseKind::TwoPointLowerBound
            && self.experiment != ExperimentKind::LowerBound
        {
            return Err(CliError::config(
                "noise.kind",
                "two_point_lower_bound is only defined for the lower_bound experiment",
            ));
        }

        positive("optim.alpha", self.optim.alpha)?;
        if let Some(beta) = self.optim.beta {
            positive("optim.beta", beta)?;
        }
        if self.optim.n_iters == 0 {
            return Err(CliError::config("optim.n_iters", "must be >= 1"));
        }
        if self.optim.trace_every == 0 {
            return Err(CliError::config("optim.trace_every", "must be >= 1"));
        }

        let s = &self.sweep;
        for &a in &s.alpha {
            positive("sweep.alpha", a)?;
        }
        for &t in &s.tau {
            positive("sweep.tau", t)?;
        }
        for &v in &s.sigma2 {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::config(
                    "sweep.sigma2",
                    format!("must be >= 0, got {v}"),
                ));
            }
        }
        if !(s.tail_fraction > 0.0 && s.tail_fraction <= 0.5) {
            return Err(CliError::config(
                "sweep.tail_fraction",
                "must be in (0, 0.5]",
            ));
        }

        self.validate_experiment()
    }

    fn validate_experiment(&self) -> Result<()> {
        use ExperimentKind::*;
        let expected_problem = match self.experiment {
            LowerBound => ProblemKind::LowerBound,
            FcnTrain => ProblemKind::Fcn,
            Drift => self.problem.kind,
            _ => ProblemKind::LeastSquares,
        };
        if self.problem.kind != expected_problem {
            return Err(CliError::config(
                "problem.kind",
                format!(
                    "{} needs problem kind {expected_problem:?}",
                    self.experiment.name()
                ),
            ));
        }
        match self.experiment {
            DynamicMatch | TauSweep => {
                nonempty("sweep.tau", &self.sweep.tau)?;
                for &tau in &self.sweep.tau {
                    self.device
                        .model_with_tau(tau)?
                        .validate()
                        .map_err(|e| CliError::config("sweep.tau", e.to_string()))?;
                }
            }
            SigmaSweep => nonempty("sweep.sigma2", &self.sweep.sigma2)?,
            InitSweep => nonempty("sweep.init", &self.sweep.init)?,
            LowerBound => {
                if self.noise.kind != NoiseKind::TwoPointLowerBound {
                    return Err(CliError::config(
                        "noise.kind",
                        "lower_bound needs two_point_lower_bound noise",
                    ));
                }
                let tau = self
                    .device
                    .model
                    .saturation_scale()
                    .filter(|_| matches!(self.device.model, DeviceModel::AsymmetricLinear { w_sym, .. } if w_sym == 0.0))
                    .ok_or_else(|| CliError::config("device.kind", "lower_bound needs asymmetric_linear with w_sym = 0"))?;
                let problem = analog_core::problems::make_lower_bound_problem(
                    self.problem.l,
                    self.problem.w_star,
                    tau,
                    self.problem.d,
                )
                .map_err(|e| CliError::config("problem.w_star", e.to_string()))?;
                let sigma = self.noise.sigma2.sqrt();
                problem
                    .check_sigma(sigma)
                    .map_err(|e| CliError::config("noise.sigma2", e.to_string()))?;
                for alpha in self.alphas() {
                    problem
                        .check_alpha(alpha, sigma)
                        .map_err(|e| CliError::config("sweep.alpha", e.to_string()))?;
                }
            }
            Drift => {
                if self.optim.init == 0.0 {
                    return Err(CliError::config("optim.init", "drift needs w0 != 0"));
                }
                if self.optim.n_iters < 2 {
                    return Err(CliError::config(
                        "optim.n_iters",
                        "drift needs at least 2 trials",
                    ));
                }
                if self.device.model_with_tau(1.0).is_err() {
                    return Err(CliError::config(
                        "device.kind",
                        "drift needs an asymmetric_linear device",
                    ));
                }
                if self.algos().contains(&Algorithm::TikiTaka) && self.optim.beta.is_none() {
                    return Err(CliError::config(
                        "optim.beta",
                        "drift with tiki_taka needs an explicit beta",
                    ));
                }
            }
            FcnTrain => {
                if self.problem.dataset == DatasetKind::Mnist && self.dataset_dir().is_none() {
                    return Err(CliError::config(
                        "problem.dataset_dir",
                        format!("mnist needs a dataset directory (or ${DATASET_DIR_ENV})"),
                    ));
                }
                if self.algos().contains(&Algorithm::TikiTaka) && self.optim.beta.is_none() {
                    return Err(CliError::config(
                        "optim.beta",
                        "tiki_taka on a network needs an explicit beta",
                    ));
                }
            }
            LrSweep => {}
        }
        if self.experiment.is_trajectory() {
            let tail = (self.trace_len() as f64 * self.sweep.tail_fraction).ceil() as usize;
            if tail < analog_core::analysis::MIN_TAIL_RECORDS {
                return Err(CliError::config(
                    "optim.n_iters",
                    format!(
                        "tail metrics need >= {} tail records; n_iters / trace_every gives {tail}",
                        analog_core::analysis::MIN_TAIL_RECORDS
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> Option<PathBuf> {
        self.problem
            .dataset_dir
            .clone()
            .or_else(|| std::env::var_os(DATASET_DIR_ENV).map(PathBuf::from))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Runtime(format!("serializing config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::config("<document>", e.to_string()))?;
        from_table(table)
    }
}

fn from_table(table: toml::Table) -> Result<ExperimentConfig> {
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let key = e.path().to_string();
        CliError::config(
            if key == "." {
                "<document>".to_string()
            } else {
                key
            },
            e.into_inner().to_string(),
        )
    })
}

/// Parses an override value as a TOML literal, falling back to a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `path` (dotted) in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(path, "malformed override path"));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut node = table;
    for (i, part) in parents.iter().enumerate() {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(parts[..=i].join("."), "is not a table"))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// Splits `--key value` / `--key=value` pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg.strip_prefix("--").ok_or_else(|| {
            CliError::config(arg.as_str(), "overrides look like --section.key value")
        })?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::config(key, "override is missing its value"))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

/// Reads `path`, applies the overrides in order, deserializes and validates.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::config("<document>", e.to_string()))?;
    for (key, raw) in overrides {
        apply_override(&mut table, key, parse_value(raw))?;
    }
    let config = from_table(table)?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ExperimentConfig {
        ExperimentConfig::from_toml("experiment = \"lr_sweep\"").unwrap()
    }

    #[test]
    fn defaults_fill_a_minimal_document() {
        let c = minimal();
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.problem.d, 40);
        assert_eq!(c.device.model, DeviceModel::asymmetric_linear(3.0));
        assert_eq!(c.algos(), vec![Algorithm::AnalogSgd]);
        c.validate().unwrap();
    }

    #[test]
    fn empty_seeds_names_the_key() {
        let mut c = minimal();
        c.seeds.clear();
        match c.validate() {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "seeds"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deserialization_errors_carry_the_path() {
        let err =
            ExperimentConfig::from_toml("experiment = \"lr_sweep\"\n[optim]\nalpha = \"fast\"\n")
                .unwrap_err();
        match err {
            CliError::Config { key, .. } => assert_eq!(key, "optim.alpha"),
            other => panic!("{other:?}"),
        }
        assert!(
            ExperimentConfig::from_toml("experiment = \"lr_sweep\"\n[optim]\nalpah = 1.0\n")
                .is_err()
        );
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let mut t: toml::Table = "experiment = \"lr_sweep\"".parse().unwrap();
        apply_override(&mut t, "optim.alpha", parse_value("0.05")).unwrap();
        apply_override(&mut t, "sweep.alpha", parse_value("[0.1, 0.2]")).unwrap();
        // A `[device]` table always names its kind.
        apply_override(&mut t, "device.kind", parse_value("asymmetric_linear")).unwrap();
        apply_override(&mut t, "device.tau", parse_value("2")).unwrap();
        apply_override(&mut t, "device.update_mode", parse_value("pulsed")).unwrap();
        let c = from_table(t).unwrap();
        assert_eq!(c.optim.alpha, 0.05);
        assert_eq!(c.sweep.alpha, vec![0.1, 0.2]);
        assert_eq!(c.device.update_mode, UpdateMode::Pulsed);
        assert_eq!(c.device.model, DeviceModel::asymmetric_linear(2.0));
    }

    #[test]
    fn override_argument_forms() {
        let args: Vec<String> = ["--optim.alpha", "0.05", "--seeds=[4]"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let parsed = parse_overrides(&args).unwrap();
        assert_eq!(
            parsed,
            vec![
                ("optim.alpha".into(), "0.05".into()),
                ("seeds".into(), "[4]".into())
            ]
        );
        assert!(parse_overrides(&["--optim.alpha".to_string()]).is_err());
        assert!(parse_overrides(&["optim.alpha".to_string()]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = minimal();
        c.device.n_states = Some(300.0);
        c.optim.beta = Some(0.2);
        c.sweep.tau = vec![0.5, 0.7];
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn n_states_follows_tau() {
        let d = DeviceConfig {
            n_states: Some(300.0),
            ..DeviceConfig::default()
        };
        let m = d.model_with_tau(0.6).unwrap();
        assert!((d.dw_min_for(&m) - 1.2 / 300.0).abs() < 1e-15);
    }

    #[test]
    fn lower_bound_constraints_name_keys() {
        let text = "experiment = \"lower_bound\"\n[problem]\nkind = \"lower_bound\"\nw_star = 0.3\n\
                    [device]\nkind = \"asymmetric_linear\"\ntau = 1.0\n[noise]\nkind = \"two_point_lower_bound\"\nsigma2 = 0.5\n";
        match ExperimentConfig::from_toml(text).unwrap().validate() {
            Err(CliError::Config { key, message }) => {
                assert_eq!(key, "problem.w_star");
                assert!(message.contains("|w*| <= tau/4"));
            }
            other => panic!("{other:?}"),
        }
    }
}
