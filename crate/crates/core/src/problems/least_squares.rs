use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Problem;
use crate::error::{check_shape, Error, Result};
use crate::Matrix;

/// `f(W) = 1/2 ||A W - b||^2` with `b = A W*`, so `f* = 0`.
#[derive(Debug, Clone)]
pub struct LeastSquaresProblem {
    a: Matrix,
    b: Matrix,
    w_star: Matrix,
    l: f64,
    mu: f64,
}

/// Samples `A` (`d_out x d`) and `W*` (`d x 1`) with i.i.d. Gaussian entries.
pub fn make_least_squares<R: Rng + ?Sized>(
    d: usize,
    d_out: usize,
    sigma_a2: f64,
    sigma_wstar2: f64,
    rng: &mut R,
) -> Result<LeastSquaresProblem> {
    if d == 0 || d_out == 0 {
        return Err(Error::Domain(format!(
            "dimensions must be >= 1, got D={d}, D_out={d_out}"
        )));
    }
    if !(sigma_a2 > 0.0 && sigma_wstar2 > 0.0) {
        return Err(Error::Domain(
            "sigma_A2 and sigma_Wstar2 must be > 0".into(),
        ));
    }
    let na = Normal::new(0.0, sigma_a2.sqrt()).expect("positive sd");
    let nw = Normal::new(0.0, sigma_wstar2.sqrt()).expect("positive sd");
    // Row-major fill so the sampled instance does not depend on nalgebra's storage order.
    let a = Matrix::from_row_iterator(d_out, d, (0..d_out * d).map(|_| na.sample(rng)));
    let w_star = Matrix::from_iterator(d, 1, (0..d).map(|_| nw.sample(rng)));
    LeastSquaresProblem::new(a, w_star)
}

impl LeastSquaresProblem {
    /// Builds the problem from `A` and `W*`, setting `b = A W*`.
    pub fn new(a: Matrix, w_star: Matrix) -> Result<Self> {
        check_shape((a.ncols(), 1), w_star.shape())?;
        let b = &a * &w_star;
        Self::with_target(a, b, w_star)
    }

    /// Builds the problem from explicit `A`, `b`; `w_star` is only recorded.
    pub fn with_target(a: Matrix, b: Matrix, w_star: Matrix) -> Result<Self> {
        check_shape((a.nrows(), 1), b.shape())?;
        check_shape((a.ncols(), 1), w_star.shape())?;
        let (l, mu) = spectrum_bounds(&a);
        Ok(Self {
            a,
            b,
            w_star,
            l,
            mu,
        })
    }

    /// Multiplies `A` and `b` by `s`, i.e. the objective by `s^2`.
    ///
    /// With `s = 1/sqrt(D_out)` the loss becomes the per-row mean, which keeps
    /// `L` of order one independently of the number of rows.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::with_target(&self.a * s, &self.b * s, self.w_star.clone())
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn w_star(&self) -> &Matrix {
        &self.w_star
    }

    /// Largest eigenvalue of `A^T A`.
    pub fn l(&self) -> f64 {
        self.l
    }

    /// Smallest eigenvalue of `A^T A`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn loss(&self, w: &Matrix) -> Result<f64> {
        check_shape(self.shape(), w.shape())?;
        let r = &self.a * w - &self.b;
        Ok(0.5 * r.norm_squared())
    }
}

fn spectrum_bounds(a: &Matrix) -> (f64, f64) {
    let ata = a.tr_mul(a);
    let eig = SymmetricEigen::new(ata).eigenvalues;
    let l = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Round-off can push the smallest eigenvalue of a singular Gram matrix below zero.
    let mu = eig.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    (l, mu)
}

impl Problem for LeastSquaresProblem {
    fn shape(&self) -> (usize, usize) {
        (self.a.ncols(), 1)
    }

    fn gradient(&self, w: &Matrix) -> Result<(f64, Matrix)> {
        check_shape(self.shape(), w.shape())?;
        let r = &self.a * w - &self.b;
        let loss = 0.5 * r.norm_squared();
        Ok((loss, self.a.tr_mul(&r)))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.l)
    }
}

/// `f(W) = L/2 ||W - w* 1||^2` with all coordinates identical.
///
/// This instance, combined with the two-point noise, realises the lower bound
/// on Analog SGD's asymptotic error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundProblem {
    pub l: f64,
    pub w_star: f64,
    pub tau: f64,
    pub dim: usize,
}

pub fn make_lower_bound_problem(
    l: f64,
    w_star: f64,
    tau: f64,
    dim: usize,
) -> Result<LowerBoundProblem> {
    if !(l > 0.0 && tau > 0.0 && dim >= 1) {
        return Err(Error::Domain(format!(
            "need L > 0, tau > 0, D >= 1; got L={l}, tau={tau}, D={dim}"
        )));
    }
    if w_star.abs() > tau / 4.0 {
        return Err(Error::Domain(format!(
            "violated |w*| <= tau/4: |{w_star}| > {}",
            tau / 4.0
        )));
    }
    Ok(LowerBoundProblem {
        l,
        w_star,
        tau,
        dim,
    })
}

impl LowerBoundProblem {
    /// Largest admissible noise level `tau L sqrt(D) / (4 sqrt(3))`.
    pub fn sigma_max(&self) -> f64 {
        self.tau * self.l * (self.dim as f64).sqrt() / (4.0 * 3f64.sqrt())
    }

    pub fn check_sigma(&self, sigma: f64) -> Result<()> {
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(Error::Domain(format!(
                "violated sigma > 0: sigma = {sigma}"
            )));
        }
        if sigma > self.sigma_max() {
            return Err(Error::Domain(format!(
                "violated sigma <= tau*L*sqrt(D)/(4*sqrt(3)): {sigma} > {}",
                self.sigma_max()
            )));
        }
        Ok(())
    }

    /// Largest admissible step `min{1/(2L), 1/(mu + 6 sigma/(tau sqrt(D)))}` (here `mu = L`).
    pub fn alpha_max(&self, sigma: f64) -> f64 {
        let a1 = 1.0 / (2.0 * self.l);
        let a2 = 1.0 / (self.l + 6.0 * sigma / (self.tau * (self.dim as f64).sqrt()));
        a1.min(a2)
    }

    pub fn check_alpha(&self, alpha: f64, sigma: f64) -> Result<()> {
        let max = self.alpha_max(sigma);
        if !(alpha > 0.0 && alpha <= max) {
            return Err(Error::Domain(format!(
                "violated 0 < alpha <= min{{1/(2L), 1/(mu + 6 sigma/(tau sqrt(D)))}}: alpha = {alpha}, bound = {max}"
            )));
        }
        Ok(())
    }

    pub fn w_star_matrix(&self) -> Matrix {
        Matrix::from_element(self.dim, 1, self.w_star)
    }

    /// The instance starts at the optimum.
    pub fn initial_point(&self) -> Matrix {
        self.w_star_matrix()
    }
}

impl Problem for LowerBoundProblem {
    fn shape(&self) -> (usize, usize) {
        (self.dim, 1)
    }

    fn gradient(&self, w: &Matrix) -> Result<(f64, Matrix)> {
        check_shape(self.shape(), w.shape())?;
        let diff = w.map(|v| v - self.w_star);
        let loss = 0.5 * self.l * diff.norm_squared();
        Ok((loss, diff * self.l))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn central_difference(p: &LeastSquaresProblem, w: &Matrix, i: usize, h: f64) -> f64 {
        let mut wp = w.clone();
        let mut wm = w.clone();
        wp[i] += h;
        wm[i] -= h;
        (p.loss(&wp).unwrap() - p.loss(&wm).unwrap()) / (2.0 * h)
    }

    #[test]
    fn scalar_gradient_example() {
        let p = LeastSquaresProblem::with_target(
            Matrix::from_element(1, 1, 2.0),
            Matrix::from_element(1, 1, 4.0),
            Matrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        let (loss, g) = p.gradient(&Matrix::from_element(1, 1, 1.0)).unwrap();
        assert_eq!(g[0], -4.0);
        assert_eq!(loss, 2.0);
        assert_eq!(p.l(), 4.0);
    }

    #[test]
    fn optimum_has_zero_gradient() {
        let p = make_least_squares(40, 100, 1.0, 0.45 * 0.45, &mut rng::seeded(1)).unwrap();
        assert_eq!(p.shape(), (40, 1));
        let (loss, g) = p.gradient(p.w_star()).unwrap();
        assert!(loss <= 1e-20);
        assert!(g.norm() <= 1e-10 * p.l() * p.w_star().norm());
        assert!(p.mu() > 1e-6);
        assert!(p.l() >= p.mu());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng::seeded(2);
        let p = make_least_squares(12, 30, 1.0, 0.2, &mut r).unwrap();
        let w = Matrix::from_fn(12, 1, |i, _| 0.1 * i as f64 - 0.4);
        let (_, g) = p.gradient(&w).unwrap();
        for i in 0..12 {
            let fd = central_difference(&p, &w, i, 1e-5);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs());
            assert!(rel <= 1e-8, "coordinate {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn scaling_scales_spectrum() {
        let p = make_least_squares(5, 20, 1.0, 1.0, &mut rng::seeded(3)).unwrap();
        let q = p.scaled(0.5).unwrap();
        assert!((q.l() - p.l() / 4.0).abs() <= 1e-12 * p.l());
        let w = Matrix::from_element(5, 1, 0.3);
        assert!((q.loss(&w).unwrap() - p.loss(&w).unwrap() / 4.0).abs() <= 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = make_least_squares(3, 4, 1.0, 1.0, &mut rng::seeded(4)).unwrap();
        assert!(matches!(
            p.gradient(&Matrix::zeros(2, 1)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn lower_bound_constraints() {
        let p = make_lower_bound_problem(1.0, 0.1, 1.0, 40).unwrap();
        let (_, g) = p.gradient(&p.initial_point()).unwrap();
        assert_eq!(g, Matrix::zeros(40, 1));
        assert!(p.check_sigma(p.sigma_max()).is_ok());
        // Dropping the sqrt(3) from the bound overshoots it.
        let err = p.check_sigma(40f64.sqrt() / 4.0).unwrap_err();
        assert!(err
            .to_string()
            .contains("sigma <= tau*L*sqrt(D)/(4*sqrt(3))"));
        let err = make_lower_bound_problem(1.0, 0.3, 1.0, 40).unwrap_err();
        assert!(err.to_string().contains("|w*| <= tau/4"));
        assert!(p.check_sigma(0.0).is_err());
    }

    #[test]
    fn lower_bound_alpha_bound() {
        let p = make_lower_bound_problem(1.0, 0.1, 1.0, 40).unwrap();
        let sigma = p.sigma_max();
        let expected = 1.0 / (1.0 + 6.0 * sigma / 40f64.sqrt());
        assert!((p.alpha_max(sigma) - expected.min(0.5)).abs() < 1e-15);
        assert!(p.check_alpha(0.01, sigma).is_ok());
        assert!(p.check_alpha(0.6, sigma).is_err());
    }
}
