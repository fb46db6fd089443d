//! Simulation of gradient-based training on analog in-memory computing hardware.
//!
//! Weights live on [`devices::AnalogTile`]s whose updates follow a device's
//! asymmetric response. Updates can be applied either through the closed-form
//! update map or through an explicit pulse train. On top of that the crate
//! provides gradient-noise models, the Digital SGD / Analog SGD / Tiki-Taka
//! optimizers, least-squares and small classifier objectives, and trace
//! diagnostics such as the amplification factor `S_K`.
//!
//! ```
//! use analog_core::devices::{apply_update_closed, DeviceModel};
//!
//! let ald = DeviceModel::asymmetric_linear(1.0);
//! // Pushing a saturated weight further does nothing...
//! assert_eq!(apply_update_closed(&ald, 1.0, 0.2).unwrap(), 1.0);
//! // ...while pulling it back is amplified.
//! assert!((apply_update_closed(&ald, 1.0, -0.2).unwrap() - 0.6).abs() < 1e-15);
//! ```

pub mod analysis;
pub mod devices;
pub mod error;
pub mod noise;
pub mod optim;
pub mod problems;
pub mod rng;

pub use analysis::TraceRecord;
pub use devices::{AnalogTile, DeviceModel, UpdateMode};
pub use error::{Error, Result};
pub use noise::{NoiseKind, NoiseModel};
pub use optim::{Algorithm, OptimizerConfig, OptimizerState, TransferMode};
pub use problems::Problem;

/// Dense real matrix used for weights, gradients and noise.
pub type Matrix = nalgebra::DMatrix<f64>;

/// `||m||_inf` taken coordinate-wise (largest absolute entry).
pub fn inf_norm(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
