//! Objectives with exact full-batch gradient oracles.
//!
//! Stochasticity is never produced here: the optimizers add it through a
//! [`crate::noise::NoiseModel`].

mod datasets;
mod fcn;
mod least_squares;

pub use datasets::{
    gaussian_blobs, load_mnist, load_mnist_idx, Dataset, MNIST_IMAGES, MNIST_LABELS,
};
pub use fcn::{FcnProblem, DEFAULT_LAYERS};
pub use least_squares::{
    make_least_squares, make_lower_bound_problem, LeastSquaresProblem, LowerBoundProblem,
};

use crate::error::Result;
use crate::Matrix;

/// A differentiable objective over a weight matrix.
pub trait Problem: Send + Sync {
    /// Shape of the weight matrix the objective expects.
    fn shape(&self) -> (usize, usize);

    /// Loss and exact gradient at `w`.
    fn gradient(&self, w: &Matrix) -> Result<(f64, Matrix)>;

    /// Smoothness constant, when known.
    fn lipschitz(&self) -> Option<f64>;
}
