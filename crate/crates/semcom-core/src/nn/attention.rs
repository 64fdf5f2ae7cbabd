//! Multi-head self-attention.

use ndarray::{s, Array2, Array3, Array4};
use rand_chacha::ChaCha8Rng;

use super::{cast, softmax_rows, Activation, Dense, DenseCache, ParamRefMut, ParamView, Scalar};
use crate::exec::{self, ExecMode};

/// Self-attention over sequences presented as (batch·seq, dim) matrices.
/// With `causal` set, position i attends only to positions ≤ i.
///
/// The per-head width is `dim / heads` rounded down (the Keras convention),
/// so `dim` need not be divisible by `heads`: Q/K/V project to
/// `heads · head_dim` and the output projection maps back to `dim`.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention<F: Scalar> {
    pub query: Dense<F>,
    pub key: Dense<F>,
    pub value: Dense<F>,
    pub output: Dense<F>,
    pub heads: usize,
    pub causal: bool,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<F: Scalar> {
    query_cache: DenseCache<F>,
    key_cache: DenseCache<F>,
    value_cache: DenseCache<F>,
    output_cache: DenseCache<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    probs: Array4<F>, // (batch, head, seq, seq)
}

impl<F: Scalar> MultiHeadAttention<F> {
    pub fn new(dim: usize, heads: usize, causal: bool, rng: &mut ChaCha8Rng) -> Self {
        assert!(dim >= heads, "need at least one dimension per head");
        let width = (dim / heads) * heads;
        MultiHeadAttention {
            query: Dense::new(dim, width, Activation::Linear, rng),
            key: Dense::new(dim, width, Activation::Linear, rng),
            value: Dense::new(dim, width, Activation::Linear, rng),
            output: Dense::new(width, dim, Activation::Linear, rng),
            heads,
            causal,
        }
    }

    fn head_dim(&self) -> usize {
        self.query.fan_out() / self.heads
    }

    /// Attention probabilities and context for one batch row.
    fn attend_row(
        &self,
        q: &Array2<F>,
        k: &Array2<F>,
        v: &Array2<F>,
        row: usize,
        seq: usize,
    ) -> (Array2<F>, Array3<F>) {
        let dim = self.query.fan_out();
        let head_dim = self.head_dim();
        let scale = cast::<F>(1.0 / (head_dim as f64).sqrt());
        let rows = row * seq..(row + 1) * seq;
        let mut context = Array2::zeros((seq, dim));
        let mut probs = Array3::zeros((self.heads, seq, seq));
        for h in 0..self.heads {
            let cols = h * head_dim..(h + 1) * head_dim;
            let qh = q.slice(s![rows.clone(), cols.clone()]);
            let kh = k.slice(s![rows.clone(), cols.clone()]);
            let vh = v.slice(s![rows.clone(), cols.clone()]);
            let mut scores = qh.dot(&kh.t());
            scores.mapv_inplace(|x| x * scale);
            if self.causal {
                for i in 0..seq {
                    for j in i + 1..seq {
                        scores[(i, j)] = F::neg_infinity();
                    }
                }
            }
            softmax_rows(&mut scores);
            context
                .slice_mut(s![.., cols.clone()])
                .assign(&scores.dot(&vh));
            probs.slice_mut(s![h, .., ..]).assign(&scores);
        }
        (context, probs)
    }

    fn project(&self, x: &Array2<F>) -> (Array2<F>, Array2<F>, Array2<F>) {
        (
            self.query.forward(x),
            self.key.forward(x),
            self.value.forward(x),
        )
    }

    pub fn forward(&self, x: &Array2<F>, batch: usize, seq: usize, mode: ExecMode) -> Array2<F> {
        let (q, k, v) = self.project(x);
        let dim = self.query.fan_out();
        let per_row = exec::map_indexed(mode, batch, |b| self.attend_row(&q, &k, &v, b, seq).0);
        let mut context = Array2::zeros((batch * seq, dim));
        for (b, ctx) in per_row.into_iter().enumerate() {
            context.slice_mut(s![b * seq..(b + 1) * seq, ..]).assign(&ctx);
        }
        self.output.forward(&context)
    }

    pub fn forward_train(
        &self,
        x: &Array2<F>,
        batch: usize,
        seq: usize,
        mode: ExecMode,
    ) -> (Array2<F>, AttentionCache<F>) {
        let (q, query_cache) = self.query.forward_train(x);
        let (k, key_cache) = self.key.forward_train(x);
        let (v, value_cache) = self.value.forward_train(x);
        let dim = self.query.fan_out();

        let per_row = exec::map_indexed(mode, batch, |b| self.attend_row(&q, &k, &v, b, seq));
        let mut context = Array2::zeros((batch * seq, dim));
        let mut probs = Array4::zeros((batch, self.heads, seq, seq));
        for (b, (ctx, p)) in per_row.into_iter().enumerate() {
            context.slice_mut(s![b * seq..(b + 1) * seq, ..]).assign(&ctx);
            probs.slice_mut(s![b, .., .., ..]).assign(&p);
        }
        let (out, output_cache) = self.output.forward_train(&context);
        (
            out,
            AttentionCache {
                query_cache,
                key_cache,
                value_cache,
                output_cache,
                q,
                k,
                v,
                probs,
            },
        )
    }

    pub fn backward(
        &mut self,
        cache: &AttentionCache<F>,
        grad_out: &Array2<F>,
        batch: usize,
        seq: usize,
        mode: ExecMode,
    ) -> Array2<F> {
        let head_dim = self.head_dim();
        let heads = self.heads;
        let dim = self.query.fan_out();
        let scale = cast::<F>(1.0 / (head_dim as f64).sqrt());

        let grad_context = self.output.backward(&cache.output_cache, grad_out);

        let per_row = exec::map_indexed(mode, batch, |b| {
            let rows = b * seq..(b + 1) * seq;
            let mut gq = Array2::zeros((seq, dim));
            let mut gk = Array2::zeros((seq, dim));
            let mut gv = Array2::zeros((seq, dim));
            for h in 0..heads {
                let cols = h * head_dim..(h + 1) * head_dim;
                let p = cache.probs.slice(s![b, h, .., ..]);
                let g_ctx = grad_context.slice(s![rows.clone(), cols.clone()]);
                let qh = cache.q.slice(s![rows.clone(), cols.clone()]);
                let kh = cache.k.slice(s![rows.clone(), cols.clone()]);
                let vh = cache.v.slice(s![rows.clone(), cols.clone()]);

                let gp = g_ctx.dot(&vh.t());
                // softmax backward: gs = p ⊙ (gp − rowsum(gp ⊙ p))
                let mut gs = Array2::zeros((seq, seq));
                for i in 0..seq {
                    let mut dot = F::zero();
                    for j in 0..seq {
                        dot = dot + gp[(i, j)] * p[(i, j)];
                    }
                    for j in 0..seq {
                        gs[(i, j)] = p[(i, j)] * (gp[(i, j)] - dot);
                    }
                }
                let mut gqh = gs.dot(&kh);
                gqh.mapv_inplace(|x| x * scale);
                let mut gkh = gs.t().dot(&qh);
                gkh.mapv_inplace(|x| x * scale);
                let gvh = p.t().dot(&g_ctx);
                gq.slice_mut(s![.., cols.clone()]).assign(&gqh);
                gk.slice_mut(s![.., cols.clone()]).assign(&gkh);
                gv.slice_mut(s![.., cols.clone()]).assign(&gvh);
            }
            (gq, gk, gv)
        });

        let mut gq = Array2::zeros((batch * seq, dim));
        let mut gk = Array2::zeros((batch * seq, dim));
        let mut gv = Array2::zeros((batch * seq, dim));
        for (b, (q_part, k_part, v_part)) in per_row.into_iter().enumerate() {
            let rows = s![b * seq..(b + 1) * seq, ..];
            gq.slice_mut(rows).assign(&q_part);
            gk.slice_mut(rows).assign(&k_part);
            gv.slice_mut(rows).assign(&v_part);
        }

        let mut grad_in = self.query.backward(&cache.query_cache, &gq);
        grad_in += &self.key.backward(&cache.key_cache, &gk);
        grad_in += &self.value.backward(&cache.value_cache, &gv);
        grad_in
    }

    pub fn collect_params<'a>(&'a mut self, name: &str, out: &mut Vec<ParamRefMut<'a, F>>) {
        self.query.collect_params(&format!("{name}.query"), out);
        self.key.collect_params(&format!("{name}.key"), out);
        self.value.collect_params(&format!("{name}.value"), out);
        self.output.collect_params(&format!("{name}.output"), out);
    }

    pub fn collect_views<'a>(&'a self, name: &str, out: &mut Vec<ParamView<'a, F>>) {
        self.query.collect_views(&format!("{name}.query"), out);
        self.key.collect_views(&format!("{name}.key"), out);
        self.value.collect_views(&format!("{name}.value"), out);
        self.output.collect_views(&format!("{name}.output"), out);
    }
}
