//! Built-in experiment presets, compiled in from `configs/*.toml`.

use crate::config::{ExperimentConfig, ExperimentKind};

const LR_SWEEP: &str = include_str!("../../../configs/lr_sweep.toml");
const DYNAMIC_MATCH: &str = include_str!("../../../configs/dynamic_match.toml");
const TAU_SWEEP: &str = include_str!("../../../configs/tau_sweep.toml");
const SIGMA_SWEEP: &str = include_str!("../../../configs/sigma_sweep.toml");
const INIT_SWEEP: &str = include_str!("../../../configs/init_sweep.toml");
const LOWER_BOUND: &str = include_str!("../../../configs/lower_bound.toml");
const DRIFT: &str = include_str!("../../../configs/drift.toml");
const FCN_TRAIN: &str = include_str!("../../../configs/fcn_train.toml");

/// TOML source of the preset for `kind`.
pub fn preset_source(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::LrSweep => LR_SWEEP,
        ExperimentKind::DynamicMatch => DYNAMIC_MATCH,
        ExperimentKind::TauSweep => TAU_SWEEP,
        ExperimentKind::SigmaSweep => SIGMA_SWEEP,
        ExperimentKind::InitSweep => INIT_SWEEP,
        ExperimentKind::LowerBound => LOWER_BOUND,
        ExperimentKind::Drift => DRIFT,
        ExperimentKind::FcnTrain => FCN_TRAIN,
    }
}

pub fn preset(kind: ExperimentKind) -> ExperimentConfig {
    ExperimentConfig::from_toml(preset_source(kind)).expect("built-in presets parse")
}
