//! Device response models and the update engines built on them.
//!
//! A device is characterised by its up/down response factors `q+(w)` and
//! `q-(w)`: a requested increment `dw` lands as `dw * q+(w)` when `dw >= 0`
//! and as `dw * q-(w)` otherwise. Equivalently, with `F = (q- + q+)/2` and
//! `G = (q- - q+)/2`, the update is `w + dw*F(w) - |dw|*G(w)`.
//!
//! Two engines realise this map on a tile:
//!
//! * [`apply_update_tile`] applies the closed form coordinate-wise.
//! * [`apply_update_pulsed`] sends `ceil(|dw|/dw_min)` unit pulses per
//!   coordinate, re-evaluating the response factor after every pulse.

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::Matrix;

/// Number of grid points used when checking `q± >= 0` over a device's range.
const VALIDATION_GRID: usize = 257;

/// Response-factor specification for one class of resistive element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceModel {
    /// `q+ = q- = 1`: digital-equivalent updates.
    Ideal,
    /// `q± = 1 ∓ (w - w_sym)/tau`.
    AsymmetricLinear {
        tau: f64,
        #[serde(default)]
        w_sym: f64,
    },
    /// Soft-bounds device: `q+ = 1 - (w - w_sym)/tau_max`, `q- = 1 - (w - w_sym)/tau_min`.
    LinearStep {
        tau_max: f64,
        tau_min: f64,
        #[serde(default)]
        w_sym: f64,
    },
    /// `q+ = ((tau_max - w)/(tau_max - tau_min))^gamma_plus`,
    /// `q- = ((w - tau_min)/(tau_max - tau_min))^gamma_minus`.
    PowerStep {
        tau_max: f64,
        tau_min: f64,
        gamma_plus: f64,
        gamma_minus: f64,
    },
    /// `q+ = 1 - exp(-gamma_plus (tau_max - w)/(tau_max - tau_min))`,
    /// `q- = 1 - exp(-gamma_minus (w - tau_min)/(tau_max - tau_min))`.
    ExponentialStep {
        tau_max: f64,
        tau_min: f64,
        gamma_plus: f64,
        gamma_minus: f64,
    },
}

impl DeviceModel {
    /// Asymmetric linear device (ALD) with symmetric point 0.
    pub fn asymmetric_linear(tau: f64) -> Self {
        DeviceModel::AsymmetricLinear { tau, w_sym: 0.0 }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DeviceModel::Ideal => "ideal",
            DeviceModel::AsymmetricLinear { .. } => "asymmetric_linear",
            DeviceModel::LinearStep { .. } => "linear_step",
            DeviceModel::PowerStep { .. } => "power_step",
            DeviceModel::ExponentialStep { .. } => "exponential_step",
        }
    }

    /// Interval of weights where the model is meaningful, `None` for the ideal device.
    pub fn admissible_range(&self) -> Option<(f64, f64)> {
        match *self {
            DeviceModel::Ideal => None,
            DeviceModel::AsymmetricLinear { tau, w_sym } => Some((w_sym - tau, w_sym + tau)),
            DeviceModel::LinearStep {
                tau_max,
                tau_min,
                w_sym,
            } => Some((w_sym + tau_min, w_sym + tau_max)),
            DeviceModel::PowerStep {
                tau_max, tau_min, ..
            }
            | DeviceModel::ExponentialStep {
                tau_max, tau_min, ..
            } => Some((tau_min, tau_max)),
        }
    }

    /// Scale used for the saturation degree `||W||_inf / tau`.
    ///
    /// ALD uses `tau`; a linear-step device uses the nearer of its two bounds;
    /// power/exponential devices use the half-width of `[tau_min, tau_max]`.
    pub fn saturation_scale(&self) -> Option<f64> {
        match *self {
            DeviceModel::Ideal => None,
            DeviceModel::AsymmetricLinear { tau, .. } => Some(tau),
            DeviceModel::LinearStep {
                tau_max, tau_min, ..
            } => Some(tau_max.min(-tau_min)),
            DeviceModel::PowerStep {
                tau_max, tau_min, ..
            }
            | DeviceModel::ExponentialStep {
                tau_max, tau_min, ..
            } => Some(0.5 * (tau_max - tau_min)),
        }
    }

    /// Checks parameter invariants and that `q± >= 0` on the admissible range.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!(
                    "{} must be finite and > 0, got {v}",
                    name
                )))
            }
        };
        match *self {
            DeviceModel::Ideal => return Ok(()),
            DeviceModel::AsymmetricLinear { tau, w_sym } => {
                positive("tau", tau)?;
                if !w_sym.is_finite() {
                    return Err(Error::Domain("w_sym must be finite".into()));
                }
            }
            DeviceModel::LinearStep {
                tau_max,
                tau_min,
                w_sym,
            } => {
                if !(tau_min < 0.0 && 0.0 < tau_max) || !tau_min.is_finite() || !tau_max.is_finite()
                {
                    return Err(Error::Domain(format!(
                        "linear step requires tau_min < 0 < tau_max, got tau_min={tau_min}, tau_max={tau_max}"
                    )));
                }
                if !w_sym.is_finite() {
                    return Err(Error::Domain("w_sym must be finite".into()));
                }
            }
            DeviceModel::PowerStep {
                tau_max,
                tau_min,
                gamma_plus,
                gamma_minus,
            }
            | DeviceModel::ExponentialStep {
                tau_max,
                tau_min,
                gamma_plus,
                gamma_minus,
            } => {
                if !tau_min.is_finite() || !tau_max.is_finite() || tau_min >= tau_max {
                    return Err(Error::Domain(format!(
                        "requires tau_min < tau_max, got tau_min={tau_min}, tau_max={tau_max}"
                    )));
                }
                positive("gamma_plus", gamma_plus)?;
                positive("gamma_minus", gamma_minus)?;
            }
        }
        let (lo, hi) = self
            .admissible_range()
            .expect("non-ideal device has a range");
        for i in 0..VALIDATION_GRID {
            let w = lo + (hi - lo) * i as f64 / (VALIDATION_GRID - 1) as f64;
            let (qp, qm) = self.response_factors(w)?;
            if qp < 0.0 || qm < 0.0 {
                return Err(Error::Domain(format!(
                    "negative response factor at w={w}: q+={qp}, q-={qm}"
                )));
            }
        }
        Ok(())
    }

    /// `(q+(w), q-(w))`.
    pub fn response_factors(&self, w: f64) -> Result<(f64, f64)> {
        if !w.is_finite() {
            return Err(Error::Domain(format!("weight must be finite, got {w}")));
        }
        match *self {
            DeviceModel::Ideal => Ok((1.0, 1.0)),
            DeviceModel::AsymmetricLinear { tau, w_sym } => {
                let r = (w - w_sym) / tau;
                Ok((1.0 - r, 1.0 + r))
            }
            DeviceModel::LinearStep {
                tau_max,
                tau_min,
                w_sym,
            } => {
                let d = w - w_sym;
                Ok((1.0 - d / tau_max, 1.0 - d / tau_min))
            }
            DeviceModel::PowerStep {
                tau_max,
                tau_min,
                gamma_plus,
                gamma_minus,
            } => {
                self.check_bounded(w, tau_min, tau_max)?;
                let span = tau_max - tau_min;
                Ok((
                    ((tau_max - w) / span).powf(gamma_plus),
                    ((w - tau_min) / span).powf(gamma_minus),
                ))
            }
            DeviceModel::ExponentialStep {
                tau_max,
                tau_min,
                gamma_plus,
                gamma_minus,
            } => {
                self.check_bounded(w, tau_min, tau_max)?;
                let span = tau_max - tau_min;
                Ok((
                    1.0 - (-gamma_plus * (tau_max - w) / span).exp(),
                    1.0 - (-gamma_minus * (w - tau_min) / span).exp(),
                ))
            }
        }
    }

    fn check_bounded(&self, w: f64, tau_min: f64, tau_max: f64) -> Result<()> {
        if w < tau_min || w > tau_max {
            return Err(Error::Domain(format!(
                "{}: weight {w} outside [{tau_min}, {tau_max}]",
                self.kind_name()
            )));
        }
        Ok(())
    }

    /// Clamps to the physical conductance range for hard-bounded devices
    /// (power and exponential step); identity for the others.
    pub fn clamp(&self, w: f64) -> f64 {
        match *self {
            DeviceModel::PowerStep {
                tau_max, tau_min, ..
            }
            | DeviceModel::ExponentialStep {
                tau_max, tau_min, ..
            } => w.clamp(tau_min, tau_max),
            _ => w,
        }
    }
}

/// `(q+(w), q-(w))` for `device`.
pub fn response_factors(device: &DeviceModel, w: f64) -> Result<(f64, f64)> {
    device.response_factors(w)
}

/// Symmetric and asymmetric components `(F(w), G(w))`.
pub fn fg_decomposition(device: &DeviceModel, w: f64) -> Result<(f64, f64)> {
    let (qp, qm) = device.response_factors(w)?;
    Ok((0.5 * (qm + qp), 0.5 * (qm - qp)))
}

/// Closed-form asymmetric update `U(w, dw)`.
pub fn apply_update_closed(device: &DeviceModel, w: f64, dw: f64) -> Result<f64> {
    let (qp, qm) = device.response_factors(w)?;
    if dw == 0.0 {
        return Ok(w);
    }
    let q = if dw >= 0.0 { qp } else { qm };
    Ok(device.clamp(w + dw * q))
}

/// The same update written through `F` and `G`: `w + dw*F(w) - |dw|*G(w)`.
pub fn apply_update_fg(device: &DeviceModel, w: f64, dw: f64) -> Result<f64> {
    let (f, g) = fg_decomposition(device, w)?;
    if dw == 0.0 {
        return Ok(w);
    }
    Ok(device.clamp(w + dw * f - dw.abs() * g))
}

/// How a requested increment reaches the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Closed-form update map, one evaluation per coordinate.
    #[default]
    ClosedForm,
    /// Pulse-by-pulse emulation with granularity `dw_min`.
    Pulsed,
}

/// Pulse train for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseTrain {
    /// Number of pulses actually sent (after clipping to `bl_max`).
    pub length: u32,
    /// +1 for potentiation (`dw >= 0`), -1 for depression.
    pub sign: i8,
    /// True when `ceil(|dw|/dw_min)` exceeded `bl_max`.
    pub truncated: bool,
}

/// Pulse series length `min(ceil(|dw|/dw_min), bl_max)` and sign.
pub fn pulse_length(dw: f64, dw_min: f64, bl_max: u32) -> PulseTrain {
    let sign = if dw >= 0.0 { 1 } else { -1 };
    let wanted = (dw.abs() / dw_min).ceil();
    // `as` saturates, so an infinite request simply clips to bl_max.
    let wanted = if wanted.is_nan() { 0 } else { wanted as u64 };
    let truncated = wanted > bl_max as u64;
    PulseTrain {
        length: wanted.min(bl_max as u64) as u32,
        sign,
        truncated,
    }
}

/// Counters collected while updating a tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UpdateStats {
    pub pulses: u64,
    /// Coordinates whose pulse train was clipped at `bl_max`.
    pub truncated: usize,
}

impl UpdateStats {
    pub fn merge(&mut self, other: UpdateStats) {
        self.pulses += other.pulses;
        self.truncated += other.truncated;
    }
}

/// A weight matrix stored in device conductances.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogTile {
    values: Matrix,
    device: DeviceModel,
    dw_min: f64,
    bl_max: u32,
}

impl AnalogTile {
    pub fn new(values: Matrix, device: DeviceModel, dw_min: f64, bl_max: u32) -> Result<Self> {
        device.validate()?;
        if !(dw_min.is_finite() && dw_min > 0.0) {
            return Err(Error::Domain(format!("dw_min must be > 0, got {dw_min}")));
        }
        if bl_max < 1 {
            return Err(Error::Domain("bl_max must be >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("tile values must be finite".into()));
        }
        Ok(Self {
            values,
            device,
            dw_min,
            bl_max,
        })
    }

    /// Tile with zero initial values.
    pub fn zeros(
        rows: usize,
        cols: usize,
        device: DeviceModel,
        dw_min: f64,
        bl_max: u32,
    ) -> Result<Self> {
        Self::new(Matrix::zeros(rows, cols), device, dw_min, bl_max)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn device(&self) -> &DeviceModel {
        &self.device
    }

    pub fn dw_min(&self) -> f64 {
        self.dw_min
    }

    pub fn bl_max(&self) -> u32 {
        self.bl_max
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn inf_norm(&self) -> f64 {
        crate::inf_norm(&self.values)
    }

    /// Programs the tile to `values` directly (initialisation, not training).
    pub fn set_values(&mut self, values: Matrix) -> Result<()> {
        check_shape(self.shape(), values.shape())?;
        self.values = values;
        Ok(())
    }

    /// Applies the requested increment `dw` through the chosen engine.
    pub fn apply(&mut self, dw: &Matrix, mode: UpdateMode) -> Result<UpdateStats> {
        match mode {
            UpdateMode::ClosedForm => apply_update_tile(self, dw).map(|_| UpdateStats::default()),
            UpdateMode::Pulsed => apply_update_pulsed(self, dw),
        }
    }
}

/// Closed-form update of every coordinate of `tile` by the matching entry of `dw`.
///
/// The tile is left untouched if any coordinate fails.
pub fn apply_update_tile(tile: &mut AnalogTile, dw: &Matrix) -> Result<()> {
    check_shape(tile.shape(), dw.shape())?;
    let mut next = tile.values.clone();
    for (w, &d) in next.iter_mut().zip(dw.iter()) {
        *w = apply_update_closed(&tile.device, *w, d)?;
    }
    tile.values = next;
    Ok(())
}

/// Terminal weight after `train.length` single pulses starting at `w`.
pub fn pulse_coordinate(
    device: &DeviceModel,
    w: f64,
    train: PulseTrain,
    dw_min: f64,
) -> Result<f64> {
    let mut w = w;
    for _ in 0..train.length {
        let (qp, qm) = device.response_factors(w)?;
        w = if train.sign > 0 {
            w + dw_min * qp
        } else {
            w - dw_min * qm
        };
        w = device.clamp(w);
    }
    Ok(w)
}

/// Pulse-level update of `tile`: each coordinate receives
/// `min(ceil(|dw|/dw_min), bl_max)` full pulses of size `dw_min * q_s(w)`.
pub fn apply_update_pulsed(tile: &mut AnalogTile, dw: &Matrix) -> Result<UpdateStats> {
    check_shape(tile.shape(), dw.shape())?;
    let mut stats = UpdateStats::default();
    let mut next = tile.values.clone();
    for (w, &d) in next.iter_mut().zip(dw.iter()) {
        if !d.is_finite() {
            return Err(Error::Domain(format!("update must be finite, got {d}")));
        }
        let train = pulse_length(d, tile.dw_min, tile.bl_max);
        stats.pulses += train.length as u64;
        if train.truncated {
            stats.truncated += 1;
        }
        *w = pulse_coordinate(&tile.device, *w, train, tile.dw_min)?;
    }
    tile.values = next;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ald(tau: f64) -> DeviceModel {
        DeviceModel::asymmetric_linear(tau)
    }

    #[test]
    fn ideal_factors() {
        assert_eq!(
            response_factors(&DeviceModel::Ideal, 0.5).unwrap(),
            (1.0, 1.0)
        );
        assert_eq!(
            fg_decomposition(&DeviceModel::Ideal, -3.0).unwrap(),
            (1.0, 0.0)
        );
    }

    #[test]
    fn ald_factors() {
        assert_eq!(response_factors(&ald(3.0), 0.0).unwrap(), (1.0, 1.0));
        assert_eq!(response_factors(&ald(2.0), 1.0).unwrap(), (0.5, 1.5));
        assert_eq!(fg_decomposition(&ald(2.0), 1.0).unwrap(), (1.0, 0.5));
    }

    #[test]
    fn linear_step_matches_fg_closed_form() {
        let dev = DeviceModel::LinearStep {
            tau_max: 2.0,
            tau_min: -4.0,
            w_sym: 0.0,
        };
        let (qp, qm) = response_factors(&dev, 1.0).unwrap();
        assert_eq!((qp, qm), (0.5, 1.25));
        // Independent route: the F/G forms written directly in tau_max, tau_min.
        let (tmax, tmin, d): (f64, f64, f64) = (2.0, -4.0, 1.0);
        let f = 1.0 - 0.5 * (1.0 / tmax + 1.0 / tmin) * d;
        let g = 0.5 * (1.0 / tmax - 1.0 / tmin) * d;
        assert_relative_eq!(qp, f - g, epsilon = 1e-15);
        assert_relative_eq!(qm, f + g, epsilon = 1e-15);
    }

    #[test]
    fn power_step_symmetric_midpoint() {
        let dev = DeviceModel::PowerStep {
            tau_max: 1.0,
            tau_min: -1.0,
            gamma_plus: 1.0,
            gamma_minus: 1.0,
        };
        assert_eq!(response_factors(&dev, 0.0).unwrap(), (0.5, 0.5));
        assert_eq!(fg_decomposition(&dev, 0.0).unwrap(), (0.5, 0.0));
    }

    #[test]
    fn power_step_out_of_range_is_domain_error() {
        let dev = DeviceModel::PowerStep {
            tau_max: 1.0,
            tau_min: -1.0,
            gamma_plus: 0.5,
            gamma_minus: 2.0,
        };
        assert!(matches!(dev.response_factors(1.5), Err(Error::Domain(_))));
        assert!(matches!(
            dev.response_factors(f64::NAN),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn exponential_step_saturates_at_bounds() {
        let dev = DeviceModel::ExponentialStep {
            tau_max: 1.0,
            tau_min: -1.0,
            gamma_plus: 3.0,
            gamma_minus: 2.0,
        };
        dev.validate().unwrap();
        let (qp, _) = dev.response_factors(1.0).unwrap();
        let (_, qm) = dev.response_factors(-1.0).unwrap();
        assert_eq!(qp, 0.0);
        assert_eq!(qm, 0.0);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(ald(0.0).validate().is_err());
        assert!(ald(-1.0).validate().is_err());
        assert!(DeviceModel::LinearStep {
            tau_max: 1.0,
            tau_min: 0.5,
            w_sym: 0.0
        }
        .validate()
        .is_err());
        assert!(DeviceModel::PowerStep {
            tau_max: 1.0,
            tau_min: -1.0,
            gamma_plus: 0.0,
            gamma_minus: 1.0
        }
        .validate()
        .is_err());
        ald(3.0).validate().unwrap();
    }

    #[test]
    fn closed_update_examples() {
        assert_eq!(apply_update_closed(&ald(3.0), 0.0, 0.1).unwrap(), 0.1);
        assert_eq!(apply_update_closed(&ald(1.0), 1.0, 0.2).unwrap(), 1.0);
        assert_relative_eq!(
            apply_update_closed(&ald(1.0), 1.0, -0.2).unwrap(),
            0.6,
            epsilon = 1e-15
        );
        assert_eq!(apply_update_closed(&ald(1.0), 0.3, 0.0).unwrap(), 0.3);
    }

    #[test]
    fn nonzero_symmetric_point() {
        let dev = DeviceModel::AsymmetricLinear {
            tau: 2.0,
            w_sym: 0.5,
        };
        // At the symmetric point the update is exact.
        assert_eq!(apply_update_closed(&dev, 0.5, 0.25).unwrap(), 0.75);
        assert_eq!(fg_decomposition(&dev, 1.5).unwrap(), (1.0, 0.5));
    }

    #[test]
    fn tile_closed_form_example() {
        let mut tile = AnalogTile::new(
            Matrix::from_row_slice(1, 2, &[0.0, 1.0]),
            ald(2.0),
            1e-3,
            100,
        )
        .unwrap();
        apply_update_tile(&mut tile, &Matrix::from_row_slice(1, 2, &[0.1, 0.1])).unwrap();
        assert_relative_eq!(tile.values()[(0, 0)], 0.1, epsilon = 1e-15);
        assert_relative_eq!(tile.values()[(0, 1)], 1.05, epsilon = 1e-15);
        // Cross-check against the scalar operation.
        assert_eq!(
            tile.values()[(0, 1)],
            apply_update_closed(&ald(2.0), 1.0, 0.1).unwrap()
        );
    }

    #[test]
    fn tile_zero_update_is_identity() {
        let w = Matrix::from_row_slice(2, 2, &[0.3, -0.2, 0.9, -0.9]);
        let mut tile = AnalogTile::new(w.clone(), ald(1.0), 1e-3, 100).unwrap();
        apply_update_tile(&mut tile, &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(tile.values(), &w);
        let stats = apply_update_pulsed(&mut tile, &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(stats.pulses, 0);
        assert_eq!(tile.values(), &w);
    }

    #[test]
    fn tile_shape_mismatch() {
        let mut tile = AnalogTile::zeros(2, 3, ald(1.0), 1e-3, 10).unwrap();
        let err = apply_update_tile(&mut tile, &Matrix::zeros(3, 2)).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
        assert!(apply_update_pulsed(&mut tile, &Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn tile_construction_checks() {
        assert!(AnalogTile::zeros(1, 1, ald(1.0), 0.0, 10).is_err());
        assert!(AnalogTile::zeros(1, 1, ald(1.0), 1e-3, 0).is_err());
        assert!(AnalogTile::zeros(1, 1, ald(-1.0), 1e-3, 10).is_err());
    }

    #[test]
    fn pulse_length_examples() {
        assert_eq!(
            pulse_length(0.0025, 0.001, 800),
            PulseTrain {
                length: 3,
                sign: 1,
                truncated: false
            }
        );
        assert_eq!(
            pulse_length(-0.001, 0.001, 800),
            PulseTrain {
                length: 1,
                sign: -1,
                truncated: false
            }
        );
        assert_eq!(
            pulse_length(1.0, 0.001, 300),
            PulseTrain {
                length: 300,
                sign: 1,
                truncated: true
            }
        );
        assert_eq!(pulse_length(0.0, 0.001, 300).length, 0);
        assert_eq!(pulse_length(f64::INFINITY, 0.001, 300).length, 300);
    }

    #[test]
    fn pulsed_ideal_is_exact_multiple() {
        let dw_min = 0.25;
        let mut tile = AnalogTile::zeros(1, 1, DeviceModel::Ideal, dw_min, 100).unwrap();
        apply_update_pulsed(&mut tile, &Matrix::from_element(1, 1, 3.0 * dw_min)).unwrap();
        assert_eq!(tile.values()[(0, 0)], 3.0 * dw_min);
    }

    #[test]
    fn pulsed_single_pulse_at_symmetric_point() {
        let mut tile = AnalogTile::zeros(1, 1, ald(3.0), 1e-4, 800).unwrap();
        let stats = apply_update_pulsed(&mut tile, &Matrix::from_element(1, 1, 1e-4)).unwrap();
        assert_eq!(stats.pulses, 1);
        assert_eq!(tile.values()[(0, 0)], 1e-4);
    }

    #[test]
    fn pulsed_close_to_closed_form_example() {
        let (tau, w, dw, dw_min) = (3.0, 0.5, 0.01, 1e-4);
        let mut tile =
            AnalogTile::new(Matrix::from_element(1, 1, w), ald(tau), dw_min, 800).unwrap();
        apply_update_pulsed(&mut tile, &Matrix::from_element(1, 1, dw)).unwrap();
        let closed = apply_update_closed(&ald(tau), w, dw).unwrap();
        let err = (tile.values()[(0, 0)] - closed).abs();
        assert!(err <= dw_min / tau + dw * dw / (2.0 * tau), "err={err}");
    }

    #[test]
    fn pulsed_truncation_is_reported() {
        let mut tile = AnalogTile::zeros(1, 2, ald(3.0), 1e-3, 10).unwrap();
        let stats =
            apply_update_pulsed(&mut tile, &Matrix::from_row_slice(1, 2, &[0.5, 0.001])).unwrap();
        assert_eq!(stats.truncated, 1);
        assert_eq!(stats.pulses, 11);
    }

    #[test]
    fn power_step_pulses_stay_in_range() {
        let dev = DeviceModel::PowerStep {
            tau_max: 1.0,
            tau_min: -1.0,
            gamma_plus: 0.5,
            gamma_minus: 0.5,
        };
        let mut tile = AnalogTile::new(Matrix::from_element(1, 1, 0.99), dev, 0.05, 1000).unwrap();
        apply_update_pulsed(&mut tile, &Matrix::from_element(1, 1, 10.0)).unwrap();
        let w = tile.values()[(0, 0)];
        assert!((-1.0..=1.0).contains(&w));
        // Closed form is clamped the same way.
        assert!(apply_update_closed(&dev, 0.99, 10.0).unwrap() <= 1.0);
    }
}
