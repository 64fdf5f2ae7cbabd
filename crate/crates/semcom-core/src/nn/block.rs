//! Post-norm transformer block: self-attention + feedforward, residuals,
//! layer norm after each sublayer. The decoder variant is the same block
//! with causal self-attention and no cross-attention.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    cast, Activation, AttentionCache, Dense, DenseCache, LayerNorm, LayerNormCache,
    MultiHeadAttention, ParamRefMut, ParamView, Scalar,
};
use crate::exec::ExecMode;

#[derive(Debug, Clone)]
pub struct TransformerBlock<F: Scalar> {
    pub attention: MultiHeadAttention<F>,
    pub norm_attention: LayerNorm<F>,
    pub ffn_hidden: Dense<F>,
    pub ffn_out: Dense<F>,
    pub norm_ffn: LayerNorm<F>,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct BlockCache<F: Scalar> {
    attention: AttentionCache<F>,
    norm_attention: LayerNormCache<F>,
    ffn_hidden: DenseCache<F>,
    ffn_out: DenseCache<F>,
    norm_ffn: LayerNormCache<F>,
    attention_mask: Option<Array2<F>>,
    ffn_mask: Option<Array2<F>>,
}

impl<F: Scalar> TransformerBlock<F> {
    /// `dim`-wide block with an `ffn_dim` feedforward hidden layer. The
    /// feedforward intermediate activation is linear.
    pub fn new(
        dim: usize,
        ffn_dim: usize,
        heads: usize,
        causal: bool,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        TransformerBlock {
            attention: MultiHeadAttention::new(dim, heads, causal, rng),
            norm_attention: LayerNorm::new(dim),
            ffn_hidden: Dense::new(dim, ffn_dim, Activation::Linear, rng),
            ffn_out: Dense::new(ffn_dim, dim, Activation::Linear, rng),
            norm_ffn: LayerNorm::new(dim),
            dropout,
        }
    }

    fn sample_mask(&self, shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<F> {
        let keep = 1.0 - self.dropout;
        let scale = 1.0 / keep;
        Array2::from_shape_fn(shape, |_| {
            if rng.gen_bool(keep) {
                cast::<F>(scale)
            } else {
                F::zero()
            }
        })
    }

    pub fn forward(&self, x: &Array2<F>, batch: usize, seq: usize, mode: ExecMode) -> Array2<F> {
        let attn = self.attention.forward(x, batch, seq, mode);
        let h = self.norm_attention.forward(&(x + &attn));
        let ffn = self.ffn_out.forward(&self.ffn_hidden.forward(&h));
        self.norm_ffn.forward(&(&h + &ffn))
    }

    /// Training forward; dropout masks are sampled only when the rate is
    /// nonzero and an RNG is supplied.
    pub fn forward_train(
        &self,
        x: &Array2<F>,
        batch: usize,
        seq: usize,
        mode: ExecMode,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<F>, BlockCache<F>) {
        let (mut attn, attention_cache) = self.attention.forward_train(x, batch, seq, mode);
        let mut attention_mask = None;
        let mut ffn_mask = None;
        let mut rng = dropout_rng;
        if self.dropout > 0.0 {
            if let Some(rng) = rng.as_deref_mut() {
                let mask = self.sample_mask(attn.dim(), rng);
                attn *= &mask;
                attention_mask = Some(mask);
            }
        }
        let (h, norm_attention_cache) = self.norm_attention.forward_train(&(x + &attn));
        let (mid, ffn_hidden_cache) = self.ffn_hidden.forward_train(&h);
        let (mut ffn, ffn_out_cache) = self.ffn_out.forward_train(&mid);
        if self.dropout > 0.0 {
            if let Some(rng) = rng.as_deref_mut() {
                let mask = self.sample_mask(ffn.dim(), rng);
                ffn *= &mask;
                ffn_mask = Some(mask);
            }
        }
        let (y, norm_ffn_cache) = self.norm_ffn.forward_train(&(&h + &ffn));
        (
            y,
            BlockCache {
                attention: attention_cache,
                norm_attention: norm_attention_cache,
                ffn_hidden: ffn_hidden_cache,
                ffn_out: ffn_out_cache,
                norm_ffn: norm_ffn_cache,
                attention_mask,
                ffn_mask,
            },
        )
    }

    pub fn backward(
        &mut self,
        cache: &BlockCache<F>,
        grad_out: &Array2<F>,
        batch: usize,
        seq: usize,
        mode: ExecMode,
    ) -> Array2<F> {
        // Through the second residual: both the skip path and the ffn path
        // receive the norm gradient.
        let grad_res2 = self.norm_ffn.backward(&cache.norm_ffn, grad_out);
        let mut grad_ffn = grad_res2.clone();
        if let Some(mask) = &cache.ffn_mask {
            grad_ffn *= mask;
        }
        let grad_mid = self.ffn_out.backward(&cache.ffn_out, &grad_ffn);
        let grad_h_ffn = self.ffn_hidden.backward(&cache.ffn_hidden, &grad_mid);
        let grad_h = grad_res2 + grad_h_ffn;

        let grad_res1 = self.norm_attention.backward(&cache.norm_attention, &grad_h);
        let mut grad_attn = grad_res1.clone();
        if let Some(mask) = &cache.attention_mask {
            grad_attn *= mask;
        }
        let grad_x_attn = self
            .attention
            .backward(&cache.attention, &grad_attn, batch, seq, mode);
        grad_res1 + grad_x_attn
    }

    pub fn collect_params<'a>(&'a mut self, name: &str, out: &mut Vec<ParamRefMut<'a, F>>) {
        self.attention.collect_params(&format!("{name}.attention"), out);
        self.norm_attention
            .collect_params(&format!("{name}.norm_attention"), out);
        self.ffn_hidden.collect_params(&format!("{name}.ffn_hidden"), out);
        self.ffn_out.collect_params(&format!("{name}.ffn_out"), out);
        self.norm_ffn.collect_params(&format!("{name}.norm_ffn"), out);
    }

    pub fn collect_views<'a>(&'a self, name: &str, out: &mut Vec<ParamView<'a, F>>) {
        self.attention.collect_views(&format!("{name}.attention"), out);
        self.norm_attention
            .collect_views(&format!("{name}.norm_attention"), out);
        self.ffn_hidden.collect_views(&format!("{name}.ffn_hidden"), out);
        self.ffn_out.collect_views(&format!("{name}.ffn_out"), out);
        self.norm_ffn.collect_views(&format!("{name}.norm_ffn"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, DOMAIN_DROPOUT, DOMAIN_MODEL_INIT};

    #[test]
    fn block_gradients_match_finite_differences() {
        let mut rng = derive_rng(9, DOMAIN_MODEL_INIT, 0, 0);
        let mut block = TransformerBlock::<f64>::new(4, 6, 2, false, 0.0, &mut rng);
        let x = Array2::from_shape_fn((2 * 3, 4), |(i, j)| ((i * 5 + j) as f64 * 0.13).cos());
        let loss = |b: &TransformerBlock<f64>, x: &Array2<f64>| {
            b.forward(x, 2, 3, ExecMode::Sequential)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
        };

        let (y, cache) = block.forward_train(&x, 2, 3, ExecMode::Sequential, None);
        let grad_out = y.mapv(|v| 2.0 * v);
        let gx = block.backward(&cache, &grad_out, 2, 3, ExecMode::Sequential);

        let h = 1e-6;
        for i in [(0, 0), (1, 2), (4, 3), (5, 1)] {
            let mut x2 = x.clone();
            let orig = x2[i];
            x2[i] = orig + h;
            let up = loss(&block, &x2);
            x2[i] = orig - h;
            let down = loss(&block, &x2);
            let numeric = (up - down) / (2.0 * h);
            assert!((numeric - gx[i]).abs() < 1e-5, "input {i:?}: {numeric} vs {}", gx[i]);
        }
        // ffn weight spot check
        let idx = 7;
        let orig = block.ffn_hidden.weight.as_slice().unwrap()[idx];
        block.ffn_hidden.weight.as_slice_mut().unwrap()[idx] = orig + h;
        let up = loss(&block, &x);
        block.ffn_hidden.weight.as_slice_mut().unwrap()[idx] = orig - h;
        let down = loss(&block, &x);
        block.ffn_hidden.weight.as_slice_mut().unwrap()[idx] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = block.ffn_hidden.grad_weight.as_slice().unwrap()[idx];
        assert!((numeric - analytic).abs() < 1e-5);
    }

    #[test]
    fn dropout_zero_never_samples_and_inference_ignores_masks() {
        let mut rng = derive_rng(9, DOMAIN_MODEL_INIT, 1, 0);
        let block = TransformerBlock::<f32>::new(4, 4, 2, false, 0.0, &mut rng);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f32 * 0.1);
        let mut drop_rng = derive_rng(1, DOMAIN_DROPOUT, 0, 0);
        let (y_train, cache) = block.forward_train(&x, 1, 3, ExecMode::Sequential, Some(&mut drop_rng));
        let y_infer = block.forward(&x, 1, 3, ExecMode::Sequential);
        assert_eq!(y_train, y_infer);
        assert!(cache.attention_mask.is_none());
    }

    #[test]
    fn dropout_masks_scale_kept_units() {
        let mut rng = derive_rng(9, DOMAIN_MODEL_INIT, 2, 0);
        let block = TransformerBlock::<f32>::new(4, 4, 2, false, 0.5, &mut rng);
        let x = Array2::from_shape_fn((8, 4), |(i, j)| (i * j) as f32 * 0.05 + 0.1);
        let mut drop_rng = derive_rng(2, DOMAIN_DROPOUT, 0, 0);
        let (_, cache) = block.forward_train(&x, 2, 4, ExecMode::Sequential, Some(&mut drop_rng));
        let mask = cache.attention_mask.as_ref().unwrap();
        assert!(mask.iter().all(|&m| m == 0.0 || (m - 2.0).abs() < 1e-6));
        assert!(mask.iter().any(|&m| m == 0.0));
        assert!(mask.iter().any(|&m| m != 0.0));
    }
}
