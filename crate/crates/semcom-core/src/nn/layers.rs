//! Dense, layer-norm, and embedding layers.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use super::{cast, Activation, ParamRefMut, ParamView, Scalar};
use crate::rng::{he_normal, normal};

/// Fully connected layer applied to the last axis; inputs arrive flattened
/// as (rows, fan_in).
#[derive(Debug, Clone)]
pub struct Dense<F: Scalar> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
    pub grad_weight: Array2<F>,
    pub grad_bias: Array1<F>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache<F: Scalar> {
    input: Array2<F>,
    pre_activation: Option<Array2<F>>,
}

impl<F: Scalar> Dense<F> {
    /// He-normal kernel, zero bias (the default when no bias initializer is
    /// given).
    pub fn new(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let weight = Array2::from_shape_fn((fan_in, fan_out), |_| cast::<F>(he_normal(rng, fan_in)));
        Dense {
            weight,
            bias: Array1::zeros(fan_out),
            grad_weight: Array2::zeros((fan_in, fan_out)),
            grad_bias: Array1::zeros(fan_out),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    fn affine(&self, x: &Array2<F>) -> Array2<F> {
        let mut z = x.dot(&self.weight);
        z += &self.bias;
        z
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut z = self.affine(x);
        if self.activation == Activation::Relu {
            z.mapv_inplace(|v| v.max(F::zero()));
        }
        z
    }

    pub fn forward_train(&self, x: &Array2<F>) -> (Array2<F>, DenseCache<F>) {
        let mut z = self.affine(x);
        let pre_activation = match self.activation {
            Activation::Linear => None,
            Activation::Relu => {
                let pre = z.clone();
                z.mapv_inplace(|v| v.max(F::zero()));
                Some(pre)
            }
        };
        (
            z,
            DenseCache {
                input: x.clone(),
                pre_activation,
            },
        )
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the layer input.
    pub fn backward(&mut self, cache: &DenseCache<F>, grad_out: &Array2<F>) -> Array2<F> {
        let masked;
        let g: &Array2<F> = match &cache.pre_activation {
            Some(pre) => {
                let mut m = grad_out.clone();
                m.zip_mut_with(pre, |gv, &z| {
                    if z <= F::zero() {
                        *gv = F::zero();
                    }
                });
                masked = m;
                &masked
            }
            None => grad_out,
        };
        self.grad_weight += &cache.input.t().dot(g);
        self.grad_bias += &g.sum_axis(Axis(0));
        g.dot(&self.weight.t())
    }

    pub fn collect_params<'a>(&'a mut self, name: &str, out: &mut Vec<ParamRefMut<'a, F>>) {
        out.push(ParamRefMut {
            name: format!("{name}.weight"),
            value: self.weight.as_slice_mut().expect("standard layout"),
            grad: self.grad_weight.as_slice_mut().expect("standard layout"),
            trainable: true,
        });
        out.push(ParamRefMut {
            name: format!("{name}.bias"),
            value: self.bias.as_slice_mut().expect("standard layout"),
            grad: self.grad_bias.as_slice_mut().expect("standard layout"),
            trainable: true,
        });
    }

    pub fn collect_views<'a>(&'a self, name: &str, out: &mut Vec<ParamView<'a, F>>) {
        out.push(ParamView {
            name: format!("{name}.weight"),
            value: self.weight.as_slice().expect("standard layout"),
            grad: self.grad_weight.as_slice().expect("standard layout"),
            trainable: true,
        });
        out.push(ParamView {
            name: format!("{name}.bias"),
            value: self.bias.as_slice().expect("standard layout"),
            grad: self.grad_bias.as_slice().expect("standard layout"),
            trainable: true,
        });
    }
}

/// Layer normalization over the last axis.
#[derive(Debug, Clone)]
pub struct LayerNorm<F: Scalar> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub grad_gamma: Array1<F>,
    pub grad_beta: Array1<F>,
    eps: F,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<F: Scalar> {
    normalized: Array2<F>,
    inv_std: Array1<F>,
}

impl<F: Scalar> LayerNorm<F> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            grad_gamma: Array1::zeros(dim),
            grad_beta: Array1::zeros(dim),
            eps: cast(1e-5),
        }
    }

    fn normalize(&self, x: &Array2<F>) -> (Array2<F>, Array1<F>) {
        let dim = F::from_usize(x.ncols()).unwrap();
        let mut normalized = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, inv) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / dim;
            let mut var = F::zero();
            for v in row.iter() {
                let d = *v - mean;
                var = var + d * d;
            }
            var = var / dim;
            let inv_s = F::one() / (var + self.eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv_s;
            }
            *inv = inv_s;
        }
        (normalized, inv_std)
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let (normalized, _) = self.normalize(x);
        let mut y = normalized;
        y *= &self.gamma;
        y += &self.beta;
        y
    }

    pub fn forward_train(&self, x: &Array2<F>) -> (Array2<F>, LayerNormCache<F>) {
        let (normalized, inv_std) = self.normalize(x);
        let mut y = normalized.clone();
        y *= &self.gamma;
        y += &self.beta;
        (y, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache<F>, grad_out: &Array2<F>) -> Array2<F> {
        let dim = F::from_usize(grad_out.ncols()).unwrap();
        self.grad_gamma += &(grad_out * &cache.normalized).sum_axis(Axis(0));
        self.grad_beta += &grad_out.sum_axis(Axis(0));

        let mut grad_in = Array2::zeros(grad_out.raw_dim());
        for ((g_row, xhat_row), (mut out_row, &inv_s)) in grad_out
            .rows()
            .into_iter()
            .zip(cache.normalized.rows())
            .zip(grad_in.rows_mut().into_iter().zip(cache.inv_std.iter()))
        {
            let mut mean_dxhat = F::zero();
            let mut mean_dxhat_xhat = F::zero();
            for ((&g, &xh), &gamma) in g_row.iter().zip(xhat_row).zip(self.gamma.iter()) {
                let dxhat = g * gamma;
                mean_dxhat = mean_dxhat + dxhat;
                mean_dxhat_xhat = mean_dxhat_xhat + dxhat * xh;
            }
            mean_dxhat = mean_dxhat / dim;
            mean_dxhat_xhat = mean_dxhat_xhat / dim;
            for ((out, (&g, &xh)), &gamma) in out_row
                .iter_mut()
                .zip(g_row.iter().zip(xhat_row))
                .zip(self.gamma.iter())
            {
                let dxhat = g * gamma;
                *out = (dxhat - mean_dxhat - xh * mean_dxhat_xhat) * inv_s;
            }
        }
        grad_in
    }

    pub fn collect_params<'a>(&'a mut self, name: &str, out: &mut Vec<ParamRefMut<'a, F>>) {
        out.push(ParamRefMut {
            name: format!("{name}.gamma"),
            value: self.gamma.as_slice_mut().expect("standard layout"),
            grad: self.grad_gamma.as_slice_mut().expect("standard layout"),
            trainable: true,
        });
        out.push(ParamRefMut {
            name: format!("{name}.beta"),
            value: self.beta.as_slice_mut().expect("standard layout"),
            grad: self.grad_beta.as_slice_mut().expect("standard layout"),
            trainable: true,
        });
    }

    pub fn collect_views<'a>(&'a self, name: &str, out: &mut Vec<ParamView<'a, F>>) {
        out.push(ParamView {
            name: format!("{name}.gamma"),
            value: self.gamma.as_slice().expect("standard layout"),
            grad: self.grad_gamma.as_slice().expect("standard layout"),
            trainable: true,
        });
        out.push(ParamView {
            name: format!("{name}.beta"),
            value: self.beta.as_slice().expect("standard layout"),
            grad: self.grad_beta.as_slice().expect("standard layout"),
            trainable: true,
        });
    }
}

/// Integer-index embedding table.
#[derive(Debug, Clone)]
pub struct Embedding<F: Scalar> {
    pub table: Array2<F>,
    pub grad: Array2<F>,
}

impl<F: Scalar> Embedding<F> {
    /// Keras-style default init: uniform in [-0.05, 0.05].
    pub fn new(vocab_size: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let table = Array2::from_shape_fn((vocab_size, dim), |_| {
            // uniform via normal-free draw: reuse the stream uniformly
            cast::<F>(uniform_pm(rng, 0.05))
        });
        Embedding {
            table,
            grad: Array2::zeros((vocab_size, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.table.ncols()
    }

    /// Gathers rows for the flattened (row-major) index sequence.
    pub fn forward(&self, indices: &[usize]) -> Array2<F> {
        let mut out = Array2::zeros((indices.len(), self.dim()));
        for (i, &idx) in indices.iter().enumerate() {
            out.row_mut(i).assign(&self.table.row(idx));
        }
        out
    }

    pub fn backward(&mut self, indices: &[usize], grad_out: &Array2<F>) {
        for (i, &idx) in indices.iter().enumerate() {
            let mut row = self.grad.row_mut(idx);
            row += &grad_out.row(i);
        }
    }

    pub fn collect_params<'a>(&'a mut self, name: &str, out: &mut Vec<ParamRefMut<'a, F>>) {
        out.push(ParamRefMut {
            name: format!("{name}.table"),
            value: self.table.as_slice_mut().expect("standard layout"),
            grad: self.grad.as_slice_mut().expect("standard layout"),
            trainable: true,
        });
    }

    pub fn collect_views<'a>(&'a self, name: &str, out: &mut Vec<ParamView<'a, F>>) {
        out.push(ParamView {
            name: format!("{name}.table"),
            value: self.table.as_slice().expect("standard layout"),
            grad: self.grad.as_slice().expect("standard layout"),
            trainable: true,
        });
    }
}

fn uniform_pm(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    use rand::Rng;
    rng.gen_range(-half_width..half_width)
}

/// Draws a frozen noise vector b ~ N(0, variance · I).
pub fn noise_vector<F: Scalar>(len: usize, variance: f64, rng: &mut ChaCha8Rng) -> Array1<F> {
    let std_dev = variance.sqrt();
    Array1::from_shape_fn(len, |_| cast::<F>(normal(rng, std_dev)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, DOMAIN_MODEL_INIT};
    use ndarray::array;

    fn rng() -> ChaCha8Rng {
        derive_rng(3, DOMAIN_MODEL_INIT, 0, 0)
    }

    #[test]
    fn dense_relu_clamps_negative() {
        let mut d = Dense::<f64>::new(2, 2, Activation::Relu, &mut rng());
        d.weight = array![[1.0, 0.0], [0.0, 1.0]];
        let y = d.forward(&array![[-1.0, 2.0]]);
        assert_eq!(y, array![[0.0, 2.0]]);
    }

    #[test]
    fn layer_norm_rows_have_zero_mean_unit_var() {
        let ln = LayerNorm::<f64>::new(4);
        let y = ln.forward(&array![[1.0, 2.0, 3.0, 4.0]]);
        let mean = y.sum() / 4.0;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn embedding_gathers_rows() {
        let mut e = Embedding::<f64>::new(3, 2, &mut rng());
        e.table = array![[0.0, 0.0], [1.0, 2.0], [3.0, 4.0]];
        let out = e.forward(&[2, 1]);
        assert_eq!(out, array![[3.0, 4.0], [1.0, 2.0]]);
    }

    #[test]
    fn embedding_backward_scatter_adds() {
        let mut e = Embedding::<f64>::new(3, 2, &mut rng());
        let g = array![[1.0, 1.0], [2.0, 2.0]];
        e.backward(&[1, 1], &g);
        assert_eq!(e.grad.row(1).to_vec(), vec![3.0, 3.0]);
        assert_eq!(e.grad.row(0).sum(), 0.0);
    }

    /// Central finite differences against the analytic backward pass for a
    /// small dense+relu layer.
    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut d = Dense::<f64>::new(3, 2, Activation::Relu, &mut rng());
        let x = array![[0.3, -0.2, 0.5], [-0.1, 0.4, 0.2]];
        let loss = |d: &Dense<f64>| d.forward(&x).iter().map(|v| v * v).sum::<f64>();

        let (y, cache) = d.forward_train(&x);
        let grad_out = y.mapv(|v| 2.0 * v);
        let gx = d.backward(&cache, &grad_out);

        let h = 1e-6;
        for i in 0..d.weight.len() {
            let orig = d.weight.as_slice().unwrap()[i];
            d.weight.as_slice_mut().unwrap()[i] = orig + h;
            let up = loss(&d);
            d.weight.as_slice_mut().unwrap()[i] = orig - h;
            let down = loss(&d);
            d.weight.as_slice_mut().unwrap()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = d.grad_weight.as_slice().unwrap()[i];
            assert!((numeric - analytic).abs() < 1e-6, "weight {i}: {numeric} vs {analytic}");
        }
        // input gradient spot check
        let mut x2 = x.clone();
        let i = (1, 2);
        let orig = x2[i];
        x2[i] = orig + h;
        let up = d.forward(&x2).iter().map(|v| v * v).sum::<f64>();
        x2[i] = orig - h;
        let down = d.forward(&x2).iter().map(|v| v * v).sum::<f64>();
        let numeric = (up - down) / (2.0 * h);
        assert!((numeric - gx[i]).abs() < 1e-6);
    }

    #[test]
    fn layer_norm_gradients_match_finite_differences() {
        let mut ln = LayerNorm::<f64>::new(3);
        ln.gamma = array![1.2, 0.8, 1.0];
        ln.beta = array![0.1, -0.2, 0.0];
        let x = array![[0.5, -0.3, 0.8], [0.1, 0.9, -0.4]];
        let loss =
            |ln: &LayerNorm<f64>, x: &Array2<f64>| ln.forward(x).iter().map(|v| v * v).sum::<f64>();

        let (y, cache) = ln.forward_train(&x);
        let grad_out = y.mapv(|v| 2.0 * v);
        let gx = ln.backward(&cache, &grad_out);

        let h = 1e-6;
        for i in 0..3 {
            let orig = ln.gamma[i];
            ln.gamma[i] = orig + h;
            let up = loss(&ln, &x);
            ln.gamma[i] = orig - h;
            let down = loss(&ln, &x);
            ln.gamma[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            assert!((numeric - ln.grad_gamma[i]).abs() < 1e-5);
        }
        for i in [(0, 0), (0, 2), (1, 1)] {
            let mut x2 = x.clone();
            let orig = x2[i];
            x2[i] = orig + h;
            let up = loss(&ln, &x2);
            x2[i] = orig - h;
            let down = loss(&ln, &x2);
            let numeric = (up - down) / (2.0 * h);
            assert!((numeric - gx[i]).abs() < 1e-5, "input {i:?}");
        }
    }
}
