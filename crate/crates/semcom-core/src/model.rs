//! The transceiver model: embedding → stacked transformer encoders →
//! two-layer dense channel encoder → reshape to a symbol vector → frozen
//! linear noise layer (identity weights, fixed bias) → reshape → two-layer
//! dense channel decoder → stacked transformer decoders (causal
//! self-attention, no cross-attention) → softmax projection over the
//! vocabulary.
//!
//! A sentence of `L` words maps to `K·L` semantic symbols; the noise layer
//! and interference injection both act on that flat symbol vector.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, Array3};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::nn::{
    cast, softmax_rows, Activation, BlockCache, Dense, DenseCache, Embedding, ParamRefMut,
    ParamView, Scalar, TransformerBlock,
};
use crate::rng::{derive_rng, DOMAIN_AWGN_BIAS, DOMAIN_MODEL_INIT, DOMAIN_NOISE};

pub const ENCODER_LAYERS: usize = 3;
pub const DECODER_LAYERS: usize = 3;
pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 8] = b"SEMCOMCK";

/// Architecture and channel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Words per sentence (L).
    pub sentence_len: usize,
    /// Embedding dimension (E).
    pub embed_dim: usize,
    /// Semantic symbols per word (K).
    pub symbols_per_word: usize,
    /// Attention heads (H); per-head width is `embed_dim / attention_heads`
    /// rounded down, so the head count may not exceed `embed_dim`.
    pub attention_heads: usize,
    /// Feedforward hidden width of the transformer blocks (V).
    pub ffn_hidden: usize,
    /// Channel noise standard deviation (amplitude).
    pub sigma: f64,
    /// Variance of the frozen noise-layer bias draw; defaults to sigma².
    #[serde(default)]
    pub awgn_bias_variance: Option<f64>,
    /// Hidden width of the two-layer channel coders; defaults to `embed_dim`.
    #[serde(default)]
    pub channel_hidden: Option<usize>,
    /// Additive sinusoidal positional encoding (off by default; the source
    /// architecture has none).
    #[serde(default)]
    pub positional_encoding: bool,
    /// Causal masking in decoder self-attention.
    #[serde(default = "default_true")]
    pub causal_decoder: bool,
    /// Dropout rate inside transformer blocks.
    #[serde(default)]
    pub dropout: f64,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn new(
        vocab_size: usize,
        sentence_len: usize,
        embed_dim: usize,
        symbols_per_word: usize,
        attention_heads: usize,
        ffn_hidden: usize,
    ) -> Self {
        ModelConfig {
            vocab_size,
            sentence_len,
            embed_dim,
            symbols_per_word,
            attention_heads,
            ffn_hidden,
            sigma: 0.1,
            awgn_bias_variance: None,
            channel_hidden: None,
            positional_encoding: false,
            causal_decoder: true,
            dropout: 0.0,
        }
    }

    /// The narrow configuration: (K, H, V, E, L) = (8, 10, 32, 32, 30).
    pub fn narrow(vocab_size: usize) -> Self {
        ModelConfig::new(vocab_size, 30, 32, 8, 10, 32)
    }

    /// The relatively wide configuration: (K, H, V, E, L) = (8, 10, 32, 64, 30).
    pub fn wide(vocab_size: usize) -> Self {
        ModelConfig::new(vocab_size, 30, 64, 8, 10, 32)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("sentence_len", self.sentence_len),
            ("embed_dim", self.embed_dim),
            ("symbols_per_word", self.symbols_per_word),
            ("attention_heads", self.attention_heads),
            ("ffn_hidden", self.ffn_hidden),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::InvalidModelConfig {
                    reason: format!("{name} must be at least 1"),
                });
            }
        }
        if self.embed_dim < self.attention_heads {
            return Err(Error::InvalidModelConfig {
                reason: format!(
                    "attention_heads {} exceeds embed_dim {} (need at least one \
                     dimension per head)",
                    self.attention_heads, self.embed_dim
                ),
            });
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidModelConfig {
                reason: "sigma must be non-negative".into(),
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidModelConfig {
                reason: "dropout must be in [0, 1)".into(),
            });
        }
        Ok(())
    }

    /// Symbol-vector length K·L.
    pub fn symbol_len(&self) -> usize {
        self.symbols_per_word * self.sentence_len
    }

    pub fn bias_variance(&self) -> f64 {
        self.awgn_bias_variance.unwrap_or(self.sigma * self.sigma)
    }

    pub fn channel_hidden_dim(&self) -> usize {
        self.channel_hidden.unwrap_or(self.embed_dim)
    }
}

/// How the frozen noise stage behaves during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    /// Add the stored bias drawn once at build time.
    FrozenBias,
    /// Add a fresh n ~ N(0, σ²·I) derived from this seed (one draw per
    /// forward call, broadcast across the batch).
    Resampled { seed: u64 },
}

/// Anything that maps token rows to per-position vocabulary distributions.
/// Implemented by the model itself and by interference-injected views.
pub trait ForwardModel {
    fn forward_probs(&self, tokens: &Array2<usize>) -> Result<Array3<f32>>;
    fn symbol_len(&self) -> usize;
}

#[derive(Debug, Clone)]
pub struct DeepScModel<F: Scalar = f32> {
    config: ModelConfig,
    embedding: Embedding<F>,
    positional: Option<Array2<F>>,
    encoder: Vec<TransformerBlock<F>>,
    tx_hidden: Dense<F>,
    tx_symbols: Dense<F>,
    awgn_weight: Array2<F>,
    awgn_weight_grad: Array2<F>,
    awgn_bias: Array1<F>,
    awgn_bias_grad: Array1<F>,
    rx_hidden: Dense<F>,
    rx_embed: Dense<F>,
    decoder: Vec<TransformerBlock<F>>,
    head: Dense<F>,
}

/// Intermediate activations of one training forward pass.
pub struct ModelCache<F: Scalar> {
    batch: usize,
    flat_tokens: Vec<usize>,
    encoder: Vec<BlockCache<F>>,
    tx_hidden: DenseCache<F>,
    tx_symbols: DenseCache<F>,
    rx_hidden: DenseCache<F>,
    rx_embed: DenseCache<F>,
    decoder: Vec<BlockCache<F>>,
    head: DenseCache<F>,
}

fn sinusoidal_table<F: Scalar>(seq: usize, dim: usize) -> Array2<F> {
    Array2::from_shape_fn((seq, dim), |(pos, i)| {
        let exponent = 2.0 * ((i / 2) as f64) / dim as f64;
        let angle = pos as f64 / 10_000f64.powf(exponent);
        cast::<F>(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Builds a freshly initialized model: He-normal transformer and dense
/// kernels, zero biases, Keras-default uniform embedding, identity noise
/// layer with a bias drawn once from N(0, bias_variance).
pub fn build_model<F: Scalar>(config: &ModelConfig, seed: u64) -> Result<DeepScModel<F>> {
    config.validate()?;
    let mut rng = derive_rng(seed, DOMAIN_MODEL_INIT, 0, 0);
    let e = config.embed_dim;
    let k = config.symbols_per_word;
    let kl = config.symbol_len();
    let hidden = config.channel_hidden_dim();

    let embedding = Embedding::new(config.vocab_size, e, &mut rng);
    let encoder = (0..ENCODER_LAYERS)
        .map(|_| {
            TransformerBlock::new(
                e,
                config.ffn_hidden,
                config.attention_heads,
                false,
                config.dropout,
                &mut rng,
            )
        })
        .collect();
    let tx_hidden = Dense::new(e, hidden, Activation::Relu, &mut rng);
    let tx_symbols = Dense::new(hidden, k, Activation::Relu, &mut rng);

    let mut bias_rng = derive_rng(seed, DOMAIN_AWGN_BIAS, 0, 0);
    let awgn_bias = crate::nn::noise_vector(kl, config.bias_variance(), &mut bias_rng);

    let rx_hidden = Dense::new(k, hidden, Activation::Relu, &mut rng);
    let rx_embed = Dense::new(hidden, e, Activation::Relu, &mut rng);
    let decoder = (0..DECODER_LAYERS)
        .map(|_| {
            TransformerBlock::new(
                e,
                config.ffn_hidden,
                config.attention_heads,
                config.causal_decoder,
                config.dropout,
                &mut rng,
            )
        })
        .collect();
    let head = Dense::new(e, config.vocab_size, Activation::Linear, &mut rng);

    Ok(DeepScModel {
        positional: config
            .positional_encoding
            .then(|| sinusoidal_table(config.sentence_len, e)),
        embedding,
        encoder,
        tx_hidden,
        tx_symbols,
        awgn_weight: Array2::eye(kl),
        awgn_weight_grad: Array2::zeros((kl, kl)),
        awgn_bias,
        awgn_bias_grad: Array1::zeros(kl),
        rx_hidden,
        rx_embed,
        decoder,
        head,
        config: config.clone(),
    })
}

impl<F: Scalar> DeepScModel<F> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn symbol_len(&self) -> usize {
        self.config.symbol_len()
    }

    fn check_tokens(&self, tokens: &Array2<usize>) -> Result<()> {
        if tokens.ncols() != self.config.sentence_len {
            return Err(Error::ShapeMismatch {
                expected: format!("(_, {})", self.config.sentence_len),
                actual: format!("({}, {})", tokens.nrows(), tokens.ncols()),
            });
        }
        for &t in tokens.iter() {
            if t >= self.config.vocab_size {
                return Err(Error::IndexOutOfRange {
                    index: t,
                    vocab_size: self.config.vocab_size,
                });
            }
        }
        Ok(())
    }

    fn embed(&self, tokens: &Array2<usize>) -> (Vec<usize>, Array2<F>) {
        let flat: Vec<usize> = tokens.iter().copied().collect();
        let mut embedded = self.embedding.forward(&flat);
        if let Some(pe) = &self.positional {
            let seq = self.config.sentence_len;
            for (i, mut row) in embedded.rows_mut().into_iter().enumerate() {
                row += &pe.row(i % seq);
            }
        }
        (flat, embedded)
    }

    /// Channel noise for one forward pass: either the frozen bias or a
    /// freshly derived n ~ N(0, σ²·I).
    fn noise_vector_for(&self, mode: NoiseMode) -> Array1<F> {
        match mode {
            NoiseMode::FrozenBias => self.awgn_bias.clone(),
            NoiseMode::Resampled { seed } => {
                let mut rng = derive_rng(seed, DOMAIN_NOISE, 0, 0);
                crate::nn::noise_vector(
                    self.symbol_len(),
                    self.config.sigma * self.config.sigma,
                    &mut rng,
                )
            }
        }
    }

    fn front_half(&self, embedded: &Array2<F>, batch: usize) -> Array2<F> {
        let seq = self.config.sentence_len;
        let mode = exec::default_mode();
        let mut x = embedded.clone();
        for block in &self.encoder {
            x = block.forward(&x, batch, seq, mode);
        }
        let x = self.tx_symbols.forward(&self.tx_hidden.forward(&x));
        // (B·L, K) -> (B, K·L); row-major layout makes this a free reshape.
        x.into_shape_with_order((batch, self.symbol_len()))
            .expect("row count is batch * sentence_len")
    }

    fn back_half(&self, received: &Array2<F>, batch: usize) -> Array2<F> {
        let seq = self.config.sentence_len;
        let mode = exec::default_mode();
        let x = received
            .to_owned()
            .into_shape_with_order((batch * seq, self.config.symbols_per_word))
            .expect("symbol vector length is K * L");
        let mut x = self.rx_embed.forward(&self.rx_hidden.forward(&x));
        for block in &self.decoder {
            x = block.forward(&x, batch, seq, mode);
        }
        self.head.forward(&x)
    }

    /// Inference forward pass; returns per-position probability rows.
    pub fn forward(&self, tokens: &Array2<usize>, noise: NoiseMode) -> Result<Array3<F>> {
        self.forward_with_symbol_bias(tokens, None, noise)
    }

    /// Forward pass with an optional extra bias added to the symbol vector
    /// after the channel-encoder reshape and before the noise layer — the
    /// interference injection point.
    pub(crate) fn forward_with_symbol_bias(
        &self,
        tokens: &Array2<usize>,
        symbol_bias: Option<&Array1<F>>,
        noise: NoiseMode,
    ) -> Result<Array3<F>> {
        self.check_tokens(tokens)?;
        let batch = tokens.nrows();
        let (_, embedded) = self.embed(tokens);
        let mut symbols = self.front_half(&embedded, batch);
        if let Some(bias) = symbol_bias {
            if bias.len() != self.symbol_len() {
                return Err(Error::InterferenceLength {
                    interference: bias.len(),
                    model: self.symbol_len(),
                });
            }
            symbols += bias;
        }
        symbols += &self.noise_vector_for(noise);
        let mut logits = self.back_half(&symbols, batch);
        softmax_rows(&mut logits);
        let seq = self.config.sentence_len;
        Ok(logits
            .into_shape_with_order((batch, seq, self.config.vocab_size))
            .expect("head output is batch*seq rows"))
    }

    /// The symbol vector x ∈ R^(B × K·L) produced before the channel; ReLU
    /// output, so entries are non-negative.
    pub fn encode_to_symbols(&self, tokens: &Array2<usize>) -> Result<Array2<F>> {
        self.check_tokens(tokens)?;
        let batch = tokens.nrows();
        let (_, embedded) = self.embed(tokens);
        Ok(self.front_half(&embedded, batch))
    }

    /// Decodes received symbol vectors (post-channel) to probability rows.
    pub fn decode_from_symbols(&self, received: &Array2<F>) -> Result<Array3<F>> {
        if received.ncols() != self.symbol_len() {
            return Err(Error::ShapeMismatch {
                expected: format!("(_, {})", self.symbol_len()),
                actual: format!("({}, {})", received.nrows(), received.ncols()),
            });
        }
        let batch = received.nrows();
        let mut logits = self.back_half(received, batch);
        softmax_rows(&mut logits);
        Ok(logits
            .into_shape_with_order((batch, self.config.sentence_len, self.config.vocab_size))
            .expect("head output is batch*seq rows"))
    }

    /// Training forward pass; returns raw logits and the activation cache
    /// that `backward` consumes.
    pub fn forward_train(
        &self,
        tokens: &Array2<usize>,
        noise: NoiseMode,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array3<F>, ModelCache<F>)> {
        self.check_tokens(tokens)?;
        let batch = tokens.nrows();
        let seq = self.config.sentence_len;
        let mode = exec::default_mode();

        let (flat_tokens, embedded) = self.embed(tokens);
        let mut x = embedded;
        let mut encoder_caches = Vec::with_capacity(self.encoder.len());
        for block in &self.encoder {
            let (next, cache) = block.forward_train(&x, batch, seq, mode, dropout_rng.as_deref_mut());
            x = next;
            encoder_caches.push(cache);
        }
        let (hidden, tx_hidden_cache) = self.tx_hidden.forward_train(&x);
        let (symbols_3d, tx_symbols_cache) = self.tx_symbols.forward_train(&hidden);
        let mut symbols = symbols_3d
            .into_shape_with_order((batch, self.symbol_len()))
            .expect("row count is batch * sentence_len");
        symbols += &self.noise_vector_for(noise);
        let received = symbols
            .into_shape_with_order((batch * seq, self.config.symbols_per_word))
            .expect("symbol vector length is K * L");
        let (rx_hidden_out, rx_hidden_cache) = self.rx_hidden.forward_train(&received);
        let (mut x, rx_embed_cache) = self.rx_embed.forward_train(&rx_hidden_out);
        let mut decoder_caches = Vec::with_capacity(self.decoder.len());
        for block in &self.decoder {
            let (next, cache) = block.forward_train(&x, batch, seq, mode, dropout_rng.as_deref_mut());
            x = next;
            decoder_caches.push(cache);
        }
        let (logits, head_cache) = self.head.forward_train(&x);
        let logits = logits
            .into_shape_with_order((batch, seq, self.config.vocab_size))
            .expect("head output is batch*seq rows");
        Ok((
            logits,
            ModelCache {
                batch,
                flat_tokens,
                encoder: encoder_caches,
                tx_hidden: tx_hidden_cache,
                tx_symbols: tx_symbols_cache,
                rx_hidden: rx_hidden_cache,
                rx_embed: rx_embed_cache,
                decoder: decoder_caches,
                head: head_cache,
            },
        ))
    }

    /// Accumulates parameter gradients for one batch. The noise layer is
    /// a frozen affine stage, so gradients pass through it unchanged and
    /// its parameters receive none.
    pub fn backward(&mut self, cache: &ModelCache<F>, grad_logits: &Array3<F>) {
        let batch = cache.batch;
        let seq = self.config.sentence_len;
        let mode = exec::default_mode();
        let grad = grad_logits
            .to_owned()
            .into_shape_with_order((batch * seq, self.config.vocab_size))
            .expect("grad matches logits shape");
        let mut grad = self.head.backward(&cache.head, &grad);
        for (block, block_cache) in self.decoder.iter_mut().zip(&cache.decoder).rev() {
            grad = block.backward(block_cache, &grad, batch, seq, mode);
        }
        let grad = self.rx_embed.backward(&cache.rx_embed, &grad);
        let grad = self.rx_hidden.backward(&cache.rx_hidden, &grad);
        // Reshapes and the frozen additive noise stage are gradient
        // pass-throughs: (B·L, K) and (B, K·L) share memory layout.
        let mut grad = self.tx_symbols.backward(&cache.tx_symbols, &grad);
        grad = self.tx_hidden.backward(&cache.tx_hidden, &grad);
        for (block, block_cache) in self.encoder.iter_mut().zip(&cache.encoder).rev() {
            grad = block.backward(block_cache, &grad, batch, seq, mode);
        }
        self.embedding.backward(&cache.flat_tokens, &grad);
    }

    pub fn collect_params(&mut self) -> Vec<ParamRefMut<'_, F>> {
        let mut out = Vec::new();
        self.embedding.collect_params("embedding", &mut out);
        for (i, block) in self.encoder.iter_mut().enumerate() {
            block.collect_params(&format!("encoder.{i}"), &mut out);
        }
        self.tx_hidden.collect_params("channel_encoder.hidden", &mut out);
        self.tx_symbols.collect_params("channel_encoder.symbols", &mut out);
        out.push(ParamRefMut {
            name: "awgn.weight".into(),
            value: self.awgn_weight.as_slice_mut().expect("standard layout"),
            grad: self.awgn_weight_grad.as_slice_mut().expect("standard layout"),
            trainable: false,
        });
        out.push(ParamRefMut {
            name: "awgn.bias".into(),
            value: self.awgn_bias.as_slice_mut().expect("standard layout"),
            grad: self.awgn_bias_grad.as_slice_mut().expect("standard layout"),
            trainable: false,
        });
        self.rx_hidden.collect_params("channel_decoder.hidden", &mut out);
        self.rx_embed.collect_params("channel_decoder.embed", &mut out);
        for (i, block) in self.decoder.iter_mut().enumerate() {
            block.collect_params(&format!("decoder.{i}"), &mut out);
        }
        self.head.collect_params("head", &mut out);
        out
    }

    pub fn collect_views(&self) -> Vec<ParamView<'_, F>> {
        let mut out = Vec::new();
        self.embedding.collect_views("embedding", &mut out);
        for (i, block) in self.encoder.iter().enumerate() {
            block.collect_views(&format!("encoder.{i}"), &mut out);
        }
        self.tx_hidden.collect_views("channel_encoder.hidden", &mut out);
        self.tx_symbols.collect_views("channel_encoder.symbols", &mut out);
        out.push(ParamView {
            name: "awgn.weight".into(),
            value: self.awgn_weight.as_slice().expect("standard layout"),
            grad: self.awgn_weight_grad.as_slice().expect("standard layout"),
            trainable: false,
        });
        out.push(ParamView {
            name: "awgn.bias".into(),
            value: self.awgn_bias.as_slice().expect("standard layout"),
            grad: self.awgn_bias_grad.as_slice().expect("standard layout"),
            trainable: false,
        });
        self.rx_hidden.collect_views("channel_decoder.hidden", &mut out);
        self.rx_embed.collect_views("channel_decoder.embed", &mut out);
        for (i, block) in self.decoder.iter().enumerate() {
            block.collect_views(&format!("decoder.{i}"), &mut out);
        }
        self.head.collect_views("head", &mut out);
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.collect_params() {
            p.grad.fill(F::zero());
        }
    }

    /// All parameters flattened in traversal order (frozen ones included).
    pub fn param_vector(&self) -> Vec<F> {
        self.collect_views()
            .iter()
            .flat_map(|v| v.value.iter().copied())
            .collect()
    }

    /// Gradients aligned with [`Self::param_vector`].
    pub fn grad_vector(&self) -> Vec<F> {
        self.collect_views()
            .iter()
            .flat_map(|v| v.grad.iter().copied())
            .collect()
    }

    pub fn set_param_vector(&mut self, values: &[F]) {
        let mut offset = 0;
        for p in self.collect_params() {
            p.value.copy_from_slice(&values[offset..offset + p.value.len()]);
            offset += p.value.len();
        }
        assert_eq!(offset, values.len(), "parameter vector length mismatch");
    }

    /// (name, flat range, trainable) for each parameter tensor, aligned with
    /// [`Self::param_vector`].
    pub fn named_param_ranges(&self) -> Vec<(String, std::ops::Range<usize>, bool)> {
        let mut out = Vec::new();
        let mut offset = 0;
        for v in self.collect_views() {
            out.push((v.name.clone(), offset..offset + v.value.len(), v.trainable));
            offset += v.value.len();
        }
        out
    }

    /// The frozen noise-layer parameters (identity weight, bias).
    pub fn awgn_parameters(&self) -> (&Array2<F>, &Array1<F>) {
        (&self.awgn_weight, &self.awgn_bias)
    }
}

impl ForwardModel for DeepScModel<f32> {
    fn forward_probs(&self, tokens: &Array2<usize>) -> Result<Array3<f32>> {
        self.forward(tokens, NoiseMode::FrozenBias)
    }

    fn symbol_len(&self) -> usize {
        self.config.symbol_len()
    }
}

// ---------------------------------------------------------------------------
// Checkpoint I/O (f32 on disk, bit-exact round trip)
// ---------------------------------------------------------------------------

impl DeepScModel<f32> {
    /// Writes a self-describing checkpoint: magic, format version, config
    /// JSON, then every parameter tensor by name.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let write = |w: &mut std::io::BufWriter<fs::File>| -> std::io::Result<()> {
            w.write_all(CHECKPOINT_MAGIC)?;
            w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
            let config = serde_json::to_vec(&self.config).expect("config serializes");
            w.write_u32::<LittleEndian>(config.len() as u32)?;
            w.write_all(&config)?;
            let views = self.collect_views();
            w.write_u32::<LittleEndian>(views.len() as u32)?;
            for v in views {
                w.write_u32::<LittleEndian>(v.name.len() as u32)?;
                w.write_all(v.name.as_bytes())?;
                w.write_u64::<LittleEndian>(v.value.len() as u64)?;
                for &x in v.value {
                    w.write_u32::<LittleEndian>(x.to_bits())?;
                }
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint written by [`Self::save`], rejecting unknown
    /// versions, corrupt layouts, and mismatched tensor sets.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = std::io::BufReader::new(file);

        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointFormat {
                reason: "bad magic bytes".into(),
            });
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let config_len = read_u32(&mut r)? as usize;
        let mut config_bytes = vec![0u8; config_len];
        read_exact(&mut r, &mut config_bytes)?;
        let config: ModelConfig =
            serde_json::from_slice(&config_bytes).map_err(|e| Error::CheckpointFormat {
                reason: format!("bad config json: {e}"),
            })?;

        let mut model = build_model::<f32>(&config, 0)?;
        let tensor_count = read_u32(&mut r)? as usize;
        {
            let params = model.collect_params();
            if tensor_count != params.len() {
                return Err(Error::CheckpointFormat {
                    reason: format!(
                        "checkpoint has {tensor_count} tensors, architecture needs {}",
                        params.len()
                    ),
                });
            }
            for p in params {
                let name_len = read_u32(&mut r)? as usize;
                let mut name = vec![0u8; name_len];
                read_exact(&mut r, &mut name)?;
                let name = String::from_utf8(name).map_err(|_| Error::CheckpointFormat {
                    reason: "tensor name is not utf-8".into(),
                })?;
                if name != p.name {
                    return Err(Error::CheckpointFormat {
                        reason: format!("tensor {name:?} does not match expected {:?}", p.name),
                    });
                }
                let len = read_u64(&mut r)? as usize;
                if len != p.value.len() {
                    return Err(Error::CheckpointFormat {
                        reason: format!(
                            "tensor {name:?} has {len} values, architecture needs {}",
                            p.value.len()
                        ),
                    });
                }
                for slot in p.value.iter_mut() {
                    *slot = f32::from_bits(read_u32(&mut r)?);
                }
            }
        }
        Ok(model)
    }

    /// Checks that a loaded checkpoint fits the artifacts it will be used
    /// with (tokenizer vocabulary, encoded sentence length).
    pub fn ensure_compatible(&self, vocab_size: usize, sentence_len: usize) -> Result<()> {
        if self.config.vocab_size != vocab_size {
            return Err(Error::ConfigMismatch {
                reason: format!(
                    "checkpoint vocab_size {} vs expected {vocab_size}",
                    self.config.vocab_size
                ),
            });
        }
        if self.config.sentence_len != sentence_len {
            return Err(Error::ConfigMismatch {
                reason: format!(
                    "checkpoint sentence_len {} vs expected {sentence_len}",
                    self.config.sentence_len
                ),
            });
        }
        Ok(())
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::CheckpointFormat {
        reason: format!("truncated checkpoint: {e}"),
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    r.read_u32::<LittleEndian>()
        .map_err(|e| Error::CheckpointFormat {
            reason: format!("truncated checkpoint: {e}"),
        })
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    r.read_u64::<LittleEndian>()
        .map_err(|e| Error::CheckpointFormat {
            reason: format!("truncated checkpoint: {e}"),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_config() -> ModelConfig {
        let mut cfg = ModelConfig::new(40, 12, 16, 4, 2, 32);
        cfg.sigma = 0.1;
        cfg
    }

    fn tokens(batch: usize, seq: usize, vocab: usize) -> Array2<usize> {
        Array2::from_shape_fn((batch, seq), |(b, l)| (b * 7 + l * 3 + 1) % vocab)
    }

    #[test]
    fn desk_forward_shape_and_probability_rows() {
        let model = build_model::<f32>(&desk_config(), 1).unwrap();
        let x = tokens(2, 12, 40);
        let probs = model.forward(&x, NoiseMode::FrozenBias).unwrap();
        assert_eq!(probs.shape(), &[2, 12, 40]);
        for b in 0..2 {
            for l in 0..12 {
                let s: f32 = (0..40).map(|v| probs[(b, l, v)]).sum();
                assert!((s - 1.0).abs() < 1e-5, "row ({b},{l}) sums to {s}");
            }
        }
    }

    #[test]
    fn frozen_bias_forward_is_bit_deterministic() {
        let model = build_model::<f32>(&desk_config(), 2).unwrap();
        let x = tokens(3, 12, 40);
        let a = model.forward(&x, NoiseMode::FrozenBias).unwrap();
        let b = model.forward(&x, NoiseMode::FrozenBias).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn resampled_noise_is_seed_deterministic_and_differs_from_frozen() {
        let model = build_model::<f32>(&desk_config(), 3).unwrap();
        let x = tokens(2, 12, 40);
        let a = model.forward(&x, NoiseMode::Resampled { seed: 9 }).unwrap();
        let b = model.forward(&x, NoiseMode::Resampled { seed: 9 }).unwrap();
        let c = model.forward(&x, NoiseMode::Resampled { seed: 10 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sigma_zero_forward_equals_noiseless_composition() {
        let mut cfg = desk_config();
        cfg.sigma = 0.0;
        let model = build_model::<f32>(&cfg, 4).unwrap();
        assert!(model.awgn_parameters().1.iter().all(|&b| b == 0.0));
        let x = tokens(2, 12, 40);
        let direct = model.forward(&x, NoiseMode::FrozenBias).unwrap();
        let composed = model
            .decode_from_symbols(&model.encode_to_symbols(&x).unwrap())
            .unwrap();
        assert_eq!(direct, composed);
    }

    #[test]
    fn symbols_are_nonnegative_with_expected_shape() {
        let model = build_model::<f32>(&desk_config(), 5).unwrap();
        let x = tokens(3, 12, 40);
        let symbols = model.encode_to_symbols(&x).unwrap();
        assert_eq!(symbols.shape(), &[3, 48]);
        assert!(symbols.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn paper_scale_configs_build_with_expected_symbol_len() {
        for cfg in [ModelConfig::narrow(100), ModelConfig::wide(100)] {
            let model = build_model::<f32>(&cfg, 6).unwrap();
            assert_eq!(model.symbol_len(), 240);
            let x = tokens(1, 30, 100);
            let symbols = model.encode_to_symbols(&x).unwrap();
            assert_eq!(symbols.shape(), &[1, 240]);
        }
    }

    #[test]
    fn config_rejects_more_heads_than_dims() {
        let cfg = ModelConfig::new(10, 4, 2, 2, 3, 8);
        assert!(matches!(
            build_model::<f32>(&cfg, 0),
            Err(Error::InvalidModelConfig { .. })
        ));
    }

    #[test]
    fn paper_head_count_floors_per_head_width() {
        // (K,H,V,E,L) = (8,10,32,32,30): E/H floors to 3, Q/K/V width 30.
        let model = build_model::<f32>(&ModelConfig::narrow(50), 12).unwrap();
        let x = tokens(2, 30, 50);
        let probs = model.forward(&x, NoiseMode::FrozenBias).unwrap();
        assert_eq!(probs.shape(), &[2, 30, 50]);
    }

    #[test]
    fn forward_rejects_out_of_range_tokens_and_bad_shape() {
        let model = build_model::<f32>(&desk_config(), 7).unwrap();
        let bad = Array2::from_elem((1, 12), 40usize);
        assert!(matches!(
            model.forward(&bad, NoiseMode::FrozenBias),
            Err(Error::IndexOutOfRange { .. })
        ));
        let wrong_len = Array2::from_elem((1, 5), 1usize);
        assert!(matches!(
            model.forward(&wrong_len, NoiseMode::FrozenBias),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = build_model::<f32>(&desk_config(), 8).unwrap();
        model.save(&path).unwrap();
        let loaded = DeepScModel::<f32>::load(&path).unwrap();
        assert_eq!(model.param_vector(), loaded.param_vector());
        let x = tokens(2, 12, 40);
        assert_eq!(
            model.forward(&x, NoiseMode::FrozenBias).unwrap(),
            loaded.forward(&x, NoiseMode::FrozenBias).unwrap()
        );
    }

    #[test]
    fn checkpoint_load_errors_are_explicit() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            DeepScModel::<f32>::load(dir.path().join("missing.ckpt")),
            Err(Error::Io { .. })
        ));

        let path = dir.path().join("model.ckpt");
        let model = build_model::<f32>(&desk_config(), 9).unwrap();
        model.save(&path).unwrap();

        // corrupt: truncate the file
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            DeepScModel::<f32>::load(&path),
            Err(Error::CheckpointFormat { .. })
        ));

        // version bump
        let mut bytes2 = bytes.clone();
        bytes2[8] = 99;
        fs::write(&path, &bytes2).unwrap();
        assert!(matches!(
            DeepScModel::<f32>::load(&path),
            Err(Error::CheckpointVersion { found: 99, .. })
        ));

        // config mismatch against expected artifacts
        fs::write(&path, &bytes).unwrap();
        let loaded = DeepScModel::<f32>::load(&path).unwrap();
        assert!(matches!(
            loaded.ensure_compatible(9999, 12),
            Err(Error::ConfigMismatch { .. })
        ));
    }

    #[test]
    fn param_vector_round_trips_and_ranges_align() {
        let mut model = build_model::<f32>(&desk_config(), 10).unwrap();
        let params = model.param_vector();
        let ranges = model.named_param_ranges();
        assert_eq!(ranges.last().unwrap().1.end, params.len());
        let awgn_frozen = ranges
            .iter()
            .filter(|(name, _, trainable)| name.starts_with("awgn.") && !trainable)
            .count();
        assert_eq!(awgn_frozen, 2);
        let mut modified = params.clone();
        modified[0] += 1.0;
        model.set_param_vector(&modified);
        assert_eq!(model.param_vector(), modified);
    }

    #[test]
    fn positional_encoding_changes_output_when_enabled() {
        let mut cfg = desk_config();
        let base = build_model::<f32>(&cfg, 11).unwrap();
        cfg.positional_encoding = true;
        let with_pe = build_model::<f32>(&cfg, 11).unwrap();
        let x = tokens(1, 12, 40);
        let a = base.forward(&x, NoiseMode::FrozenBias).unwrap();
        let b = with_pe.forward(&x, NoiseMode::FrozenBias).unwrap();
        assert_ne!(a, b);
    }
}
