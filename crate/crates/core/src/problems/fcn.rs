use nalgebra::{DVector, RowDVector};
use rand::Rng;

use super::{Dataset, Problem};
use crate::error::{check_shape, Error, Result};
use crate::Matrix;

/// Input, two hidden layers and output widths of the default classifier.
pub const DEFAULT_LAYERS: [usize; 4] = [784, 256, 128, 10];

/// Fully-connected classifier: sigmoid hidden layers, softmax cross-entropy.
///
/// Parameters are one flat column. Layer `l` contributes its weight matrix
/// (`out x in`, column-major) followed by its bias (`out`).
#[derive(Debug, Clone)]
pub struct FcnProblem {
    layers: Vec<usize>,
    data: Dataset,
}

struct Layer {
    w: Matrix,
    b: RowDVector<f64>,
    offset: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl FcnProblem {
    pub fn new(layers: Vec<usize>, data: Dataset) -> Result<Self> {
        if layers.len() < 2 || layers.contains(&0) {
            return Err(Error::Domain(format!("invalid layer sizes {layers:?}")));
        }
        if data.n_features() != layers[0] {
            return Err(Error::Shape {
                expected: (data.len(), layers[0]),
                got: data.features.shape(),
            });
        }
        if data.n_classes != *layers.last().unwrap() {
            return Err(Error::Domain(format!(
                "{} classes but output width {}",
                data.n_classes,
                layers.last().unwrap()
            )));
        }
        Ok(Self { layers, data })
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn n_params(&self) -> usize {
        self.layers.windows(2).map(|p| p[1] * p[0] + p[1]).sum()
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let mut params = Vec::with_capacity(self.n_params());
        for pair in self.layers.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-a..a)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Matrix::from_vec(params.len(), 1, params)
    }

    fn unpack(&self, params: &[f64]) -> Vec<Layer> {
        let mut offset = 0;
        self.layers
            .windows(2)
            .map(|pair| {
                let (n_in, n_out) = (pair[0], pair[1]);
                let w =
                    Matrix::from_column_slice(n_out, n_in, &params[offset..offset + n_in * n_out]);
                let b = RowDVector::from_row_slice(
                    &params[offset + n_in * n_out..offset + n_in * n_out + n_out],
                );
                let layer = Layer { w, b, offset };
                offset += n_in * n_out + n_out;
                layer
            })
            .collect()
    }

    fn batch_inputs(&self, batch: &[usize]) -> Result<Matrix> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        if let Some(&i) = batch.iter().find(|&&i| i >= self.data.len()) {
            return Err(Error::Contract(format!("sample index {i} out of range")));
        }
        Ok(self.data.features.select_rows(batch.iter()))
    }

    /// Mean cross-entropy over `batch` and its gradient by backpropagation.
    pub fn gradient_fcn(&self, params: &Matrix, batch: &[usize]) -> Result<(f64, Matrix)> {
        check_shape((self.n_params(), 1), params.shape())?;
        let x = self.batch_inputs(batch)?;
        let layers = self.unpack(params.as_slice());
        let n = batch.len() as f64;

        // Forward pass, keeping each layer's input.
        let mut acts = vec![x];
        let mut logits = Matrix::zeros(0, 0);
        for (l, layer) in layers.iter().enumerate() {
            let mut z = acts.last().unwrap() * layer.w.transpose();
            for mut row in z.row_iter_mut() {
                row += &layer.b;
            }
            if l + 1 == layers.len() {
                logits = z;
            } else {
                z.apply(|v| *v = sigmoid(*v));
                acts.push(z);
            }
        }

        // Softmax cross-entropy; `delta` becomes dLoss/dlogits.
        let mut loss = 0.0;
        let mut delta = logits;
        for (i, &y) in batch.iter().map(|&i| &self.data.labels[i]).enumerate() {
            let mut row = delta.row_mut(i);
            let max = row.max();
            row.apply(|v| *v = (*v - max).exp());
            let sum = row.sum();
            loss -= (row[y] / sum).ln();
            row /= sum * n;
            row[y] -= 1.0 / n;
        }
        loss /= n;

        let mut grad = vec![0.0; self.n_params()];
        for (l, layer) in layers.iter().enumerate().rev() {
            let a = &acts[l];
            let dw = delta.tr_mul(a);
            let db: DVector<f64> = delta.row_sum().transpose();
            let n_w = dw.len();
            grad[layer.offset..layer.offset + n_w].copy_from_slice(dw.as_slice());
            grad[layer.offset + n_w..layer.offset + n_w + db.len()].copy_from_slice(db.as_slice());
            if l > 0 {
                let mut back = &delta * &layer.w;
                back.zip_apply(a, |d, s| *d *= s * (1.0 - s));
                delta = back;
            }
        }
        Ok((loss, Matrix::from_vec(grad.len(), 1, grad)))
    }

    /// Fraction of samples whose arg-max prediction matches the label.
    pub fn accuracy(&self, params: &Matrix) -> Result<f64> {
        check_shape((self.n_params(), 1), params.shape())?;
        let layers = self.unpack(params.as_slice());
        let mut a = self.data.features.clone();
        for layer in &layers {
            let mut z = &a * layer.w.transpose();
            for mut row in z.row_iter_mut() {
                row += &layer.b;
            }
            z.apply(|v| *v = sigmoid(*v));
            a = z;
        }
        let correct = a
            .row_iter()
            .zip(&self.data.labels)
            .filter(|(row, &y)| row.transpose().argmax().0 == y)
            .count();
        Ok(correct as f64 / self.data.len() as f64)
    }
}

impl Problem for FcnProblem {
    fn shape(&self) -> (usize, usize) {
        (self.n_params(), 1)
    }

    /// Full-batch gradient over the whole dataset.
    fn gradient(&self, w: &Matrix) -> Result<(f64, Matrix)> {
        let all: Vec<usize> = (0..self.data.len()).collect();
        self.gradient_fcn(w, &all)
    }

    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::gaussian_blobs;
    use crate::rng;
    use rand::seq::index::sample;

    #[test]
    fn uniform_prediction_loss_and_bias_gradient() {
        let data = Dataset::new(Matrix::zeros(4, 3), vec![0, 1, 1, 9], 10).unwrap();
        let p = FcnProblem::new(vec![3, 5, 10], data).unwrap();
        let params = Matrix::zeros(p.n_params(), 1);
        let (loss, g) = p.gradient(&params).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-14);
        let bias = &g.as_slice()[p.n_params() - 10..];
        let mut expected = [0.1; 10];
        expected[0] -= 0.25;
        expected[1] -= 0.5;
        expected[9] -= 0.25;
        for (b, e) in bias.iter().zip(expected) {
            assert!((b - e).abs() < 1e-15, "{b} vs {e}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng::seeded(8);
        let data = gaussian_blobs(24, 6, 4, 0.7, &mut r).unwrap();
        let p = FcnProblem::new(vec![6, 8, 7, 4], data).unwrap();
        let params = p.init_params(&mut r);
        let batch: Vec<usize> = (0..24).collect();
        let (_, g) = p.gradient_fcn(&params, &batch).unwrap();
        let h = 1e-6;
        for i in sample(&mut r, p.n_params(), 100) {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (p.gradient_fcn(&plus, &batch).unwrap().0
                - p.gradient_fcn(&minus, &batch).unwrap().0)
                / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(f64::MIN_POSITIVE);
            assert!(rel <= 1e-5, "param {i}: {} vs {fd} (rel {rel})", g[i]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = Dataset::new(Matrix::zeros(2, 3), vec![0, 1], 2).unwrap();
        let p = FcnProblem::new(vec![3, 2], data.clone()).unwrap();
        let params = Matrix::zeros(p.n_params(), 1);
        assert!(matches!(
            p.gradient_fcn(&params, &[]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            p.gradient_fcn(&Matrix::zeros(3, 1), &[0]),
            Err(Error::Shape { .. })
        ));
        assert!(FcnProblem::new(vec![4, 2], data).is_err());
    }

    #[test]
    fn default_parameter_count() {
        let data = Dataset::new(Matrix::zeros(1, 784), vec![3], 10).unwrap();
        let p = FcnProblem::new(DEFAULT_LAYERS.to_vec(), data).unwrap();
        assert_eq!(
            p.n_params(),
            784 * 256 + 256 + 256 * 128 + 128 + 128 * 10 + 10
        );
    }
}
