//! Gradient-noise generators.
//!
//! `sigma2` is always the *total* variance `E||eps||^2`; i.i.d. models put
//! `sigma2 / D` on each of the `D` coordinates.
//!
//! [`NoiseKind::TwoPointLowerBound`] is the state-dependent construction used
//! to show that the asymptotic error of Analog SGD cannot be removed: every
//! coordinate receives the same draw
//!
//! ```text
//! xi = +(s) sqrt((1-p)/p)   w.p. p
//!      -(s) sqrt(p/(1-p))   w.p. 1-p,      s = sigma/sqrt(D),  p = (1 - w/tau)/2
//! ```
//!
//! where `w` is the (shared) value of the current weights.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

/// Minimum Monte-Carlo sample count accepted by [`estimate_noise_constant_c`].
pub const MIN_C_SAMPLES: usize = 100_000;

/// Tolerance used to decide that all coordinates of the state are identical.
const IDENTICAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    GaussianIid,
    TwoPointLowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    #[serde(default)]
    pub sigma2: f64,
    /// Device asymmetry, two-point construction only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Number of coordinates `D`. Defaults to the sampled shape's size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            sigma2: 0.0,
            tau: None,
            dim: None,
        }
    }

    pub fn gaussian(sigma2: f64) -> Self {
        Self {
            kind: NoiseKind::GaussianIid,
            sigma2,
            tau: None,
            dim: None,
        }
    }

    pub fn two_point(sigma2: f64, tau: f64, dim: usize) -> Self {
        Self {
            kind: NoiseKind::TwoPointLowerBound,
            sigma2,
            tau: Some(tau),
            dim: Some(dim),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::Domain(format!(
                "sigma2 must be >= 0, got {}",
                self.sigma2
            )));
        }
        if self.dim == Some(0) {
            return Err(Error::Domain("noise dim must be >= 1".into()));
        }
        if self.kind == NoiseKind::TwoPointLowerBound {
            match self.tau {
                Some(t) if t.is_finite() && t > 0.0 => {}
                _ => return Err(Error::Domain("two-point noise needs tau > 0".into())),
            }
            if self.dim.is_none() {
                return Err(Error::Domain("two-point noise needs dim".into()));
            }
            if self.sigma2 <= 0.0 {
                return Err(Error::Domain("two-point noise needs sigma > 0".into()));
            }
        }
        Ok(())
    }

    /// Draws one noise matrix of the given shape.
    ///
    /// `state` is the current weight matrix; it is required by the two-point
    /// construction, which also requires all of its coordinates to be equal.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        shape: (usize, usize),
        state: Option<&Matrix>,
        rng: &mut R,
    ) -> Result<Matrix> {
        let (rows, cols) = shape;
        let d = rows * cols;
        match self.kind {
            NoiseKind::None => Ok(Matrix::zeros(rows, cols)),
            NoiseKind::GaussianIid => {
                let sd = (self.sigma2 / self.dim.unwrap_or(d) as f64).sqrt();
                Ok(Matrix::from_fn(rows, cols, |_, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    sd * z
                }))
            }
            NoiseKind::TwoPointLowerBound => {
                self.validate()?;
                let dim = self.dim.expect("validated");
                if dim != d {
                    return Err(Error::Contract(format!(
                        "two-point noise built for D={dim} but asked for {d} coordinates"
                    )));
                }
                let state = state.ok_or_else(|| {
                    Error::Contract("two-point noise requires the current weights".into())
                })?;
                if state.shape() != shape {
                    return Err(Error::Shape {
                        expected: shape,
                        got: state.shape(),
                    });
                }
                let w = state[(0, 0)];
                if state.iter().any(|v| (v - w).abs() > IDENTICAL_TOL) {
                    return Err(Error::Contract(
                        "two-point noise requires identical coordinates".into(),
                    ));
                }
                let xi = self.draw_two_point(w, rng)?;
                Ok(Matrix::from_element(rows, cols, xi))
            }
        }
    }

    /// One scalar draw of the two-point noise at shared weight value `w`.
    pub fn draw_two_point<R: Rng + ?Sized>(&self, w: f64, rng: &mut R) -> Result<f64> {
        let tau = self
            .tau
            .ok_or_else(|| Error::Domain("two-point noise needs tau".into()))?;
        let dim = self
            .dim
            .ok_or_else(|| Error::Domain("two-point noise needs dim".into()))?;
        let support = TwoPointSupport::new(self.sigma(), dim, tau, w)?;
        let u: f64 = rng.random();
        Ok(if u < support.p {
            support.plus
        } else {
            support.minus
        })
    }
}

/// The two values of the lower-bound noise and the probability of the positive one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointSupport {
    pub p: f64,
    pub plus: f64,
    pub minus: f64,
}

impl TwoPointSupport {
    pub fn new(sigma: f64, dim: usize, tau: f64, w: f64) -> Result<Self> {
        if !w.is_finite() || w.abs() > tau {
            return Err(Error::Contract(format!(
                "two-point noise requires |w| <= tau, got w={w}, tau={tau}"
            )));
        }
        let s = sigma / (dim as f64).sqrt();
        let p = 0.5 * (1.0 - w / tau);
        // At |w| = tau one branch has probability zero; its value is irrelevant.
        let plus = if p > 0.0 {
            s * ((1.0 - p) / p).sqrt()
        } else {
            0.0
        };
        let minus = if p < 1.0 {
            -s * (p / (1.0 - p)).sqrt()
        } else {
            0.0
        };
        Ok(Self { p, plus, minus })
    }
}

/// Free-function form of [`NoiseModel::sample`].
pub fn sample<R: Rng + ?Sized>(
    model: &NoiseModel,
    shape: (usize, usize),
    state: Option<&Matrix>,
    rng: &mut R,
) -> Result<Matrix> {
    model.sample(shape, state, rng)
}

/// Monte-Carlo estimate of the non-zero-noise constant `c`.
///
/// For each `g` in `g_grid`, estimates `E|g + eps_i|` for one coordinate and
/// divides by the per-coordinate scale `sigma/sqrt(D)`; returns the minimum
/// over the grid. Gaussian noise at `g = 0` gives `sqrt(2/pi)`.
pub fn estimate_noise_constant_c<R: Rng + ?Sized>(
    model: &NoiseModel,
    g_grid: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if model.kind == NoiseKind::None || model.sigma2 <= 0.0 {
        return Err(Error::Domain(
            "noise constant undefined for sigma = 0".into(),
        ));
    }
    if n_samples < MIN_C_SAMPLES {
        return Err(Error::Contract(format!(
            "need at least {MIN_C_SAMPLES} samples, got {n_samples}"
        )));
    }
    if g_grid.is_empty() {
        return Err(Error::Contract("empty g grid".into()));
    }
    let dim = model.dim.unwrap_or(1);
    let scale = model.sigma() / (dim as f64).sqrt();
    let mut best = f64::INFINITY;
    for &g in g_grid {
        let mut acc = 0.0;
        for _ in 0..n_samples {
            let eps = match model.kind {
                NoiseKind::GaussianIid => {
                    let z: f64 = rng.sample(StandardNormal);
                    scale * z
                }
                // Evaluated at the symmetric point, where both branches are equally likely.
                NoiseKind::TwoPointLowerBound => model.draw_two_point(0.0, rng)?,
                NoiseKind::None => unreachable!(),
            };
            acc += (g + eps).abs();
        }
        best = best.min(acc / n_samples as f64 / scale);
    }
    Ok(best)
}
