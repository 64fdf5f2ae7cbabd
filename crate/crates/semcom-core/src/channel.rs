//! Stochastic channel machinery: AWGN sampling and slot-varying Gaussian
//! multi-interferer RFI received over per-slot fading.
//!
//! Each interferer u contributes g_u · v_u to a slot, where g_u ~ N(0, 1)
//! is a scalar fading coefficient held constant for the whole symbol vector
//! and v_u has i.i.d. N(0, power) entries. Every draw is fully determined
//! by the `(seed, slot, interferer)` triple, so sweeps over the interferer
//! count reuse no randomness and slots can be evaluated in parallel or in
//! any order with identical results.

use ndarray::{Array1, Array2, Array3};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{DeepScModel, ForwardModel, NoiseMode};
use crate::rng::{derive_rng, normal, standard_normal, DOMAIN_RFI};

/// Default per-interferer signal power in watts.
pub const DEFAULT_RFI_POWER: f64 = 10.0;

/// Draws a zero-mean Gaussian noise vector with variance sigma² per entry.
pub fn awgn_sample(sigma: f64, len: usize, rng: &mut ChaCha8Rng) -> Array1<f32> {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    Array1::from_shape_fn(len, |_| normal(rng, sigma) as f32)
}

/// Interference scenario: `interferers` emitters of the given power hitting
/// a symbol vector of length `symbol_len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfiSpec {
    pub interferers: usize,
    pub power: f64,
    pub symbol_len: usize,
}

impl RfiSpec {
    pub fn new(interferers: usize, symbol_len: usize) -> Self {
        RfiSpec {
            interferers,
            power: DEFAULT_RFI_POWER,
            symbol_len,
        }
    }
}

/// The interference hitting one time slot: per-interferer fading
/// coefficients, per-interferer signal vectors, and their weighted sum.
#[derive(Debug, Clone)]
pub struct SlotInterference {
    pub slot: u64,
    /// g_u ~ N(0, 1), one per interferer, constant across the slot.
    pub fading: Vec<f32>,
    /// v_u rows of i.i.d. N(0, power) entries, one row per interferer.
    pub signals: Array2<f32>,
    /// Σ_u g_u · v_u.
    pub total: Array1<f32>,
}

/// Generates the total interference for one slot. With zero interferers the
/// total is the zero vector.
pub fn total_rfi(spec: &RfiSpec, slot: u64, seed: u64) -> SlotInterference {
    assert!(spec.power > 0.0, "interferer power must be positive");
    let kl = spec.symbol_len;
    let amplitude = spec.power.sqrt();
    let mut fading = Vec::with_capacity(spec.interferers);
    let mut signals = Array2::zeros((spec.interferers, kl));
    let mut total = vec![0.0f64; kl];
    for u in 0..spec.interferers {
        let mut rng = derive_rng(seed, DOMAIN_RFI, slot, u as u64);
        let g = standard_normal(&mut rng);
        fading.push(g as f32);
        for i in 0..kl {
            let v = amplitude * standard_normal(&mut rng);
            signals[(u, i)] = v as f32;
            total[i] += f64::from(g as f32) * f64::from(v as f32);
        }
    }
    SlotInterference {
        slot,
        fading,
        signals,
        total: total.into_iter().map(|x| x as f32).collect(),
    }
}

/// y = x + total + n, with the interference total and the noise vector
/// broadcast across the rows of x.
pub fn apply_channel(
    x: &Array2<f32>,
    interference: &SlotInterference,
    noise: &Array1<f32>,
) -> Result<Array2<f32>> {
    let kl = x.ncols();
    if interference.total.len() != kl || noise.len() != kl {
        return Err(Error::ShapeMismatch {
            expected: format!("interference and noise of length {kl}"),
            actual: format!(
                "interference {}, noise {}",
                interference.total.len(),
                noise.len()
            ),
        });
    }
    let mut y = x.clone();
    y += &interference.total;
    y += noise;
    Ok(y)
}

/// Evaluation view of a trained model with one slot's interference added to
/// the symbol vector after the channel-encoder reshape and before the frozen
/// noise layer. The wrapped model is never mutated; replace the bias once
/// per slot via [`InjectedModel::set_interference`].
pub struct InjectedModel<'a> {
    model: &'a DeepScModel<f32>,
    bias: Array1<f32>,
}

/// Builds the injected view for one slot.
pub fn inject_rfi<'a>(
    model: &'a DeepScModel<f32>,
    interference: &SlotInterference,
) -> Result<InjectedModel<'a>> {
    let mut view = InjectedModel {
        model,
        bias: Array1::zeros(model.symbol_len()),
    };
    view.set_interference(interference)?;
    Ok(view)
}

impl<'a> InjectedModel<'a> {
    pub fn set_interference(&mut self, interference: &SlotInterference) -> Result<()> {
        if interference.total.len() != self.model.symbol_len() {
            return Err(Error::InterferenceLength {
                interference: interference.total.len(),
                model: self.model.symbol_len(),
            });
        }
        self.bias = interference.total.clone();
        Ok(())
    }

    pub fn forward(&self, tokens: &Array2<usize>) -> Result<Array3<f32>> {
        self.model
            .forward_with_symbol_bias(tokens, Some(&self.bias), NoiseMode::FrozenBias)
    }
}

impl ForwardModel for InjectedModel<'_> {
    fn forward_probs(&self, tokens: &Array2<usize>) -> Result<Array3<f32>> {
        self.forward(tokens)
    }

    fn symbol_len(&self) -> usize {
        self.model.symbol_len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{self, ExecMode};
    use crate::model::{build_model, ModelConfig};
    use crate::rng::DOMAIN_NOISE;

    #[test]
    fn awgn_sigma_zero_is_exactly_zero() {
        let mut rng = derive_rng(1, DOMAIN_NOISE, 0, 0);
        let v = awgn_sample(0.0, 64, &mut rng);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn awgn_is_seed_reproducible() {
        let a = awgn_sample(0.1, 32, &mut derive_rng(2, DOMAIN_NOISE, 0, 0));
        let b = awgn_sample(0.1, 32, &mut derive_rng(2, DOMAIN_NOISE, 0, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn awgn_empirical_variance_tracks_sigma_squared() {
        let mut rng = derive_rng(3, DOMAIN_NOISE, 0, 0);
        let n = 1_000_000;
        let v = awgn_sample(0.1, n, &mut rng);
        let var = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>() / n as f64;
        assert!((var - 0.01).abs() < 0.01 * 0.05, "var = {var}");
    }

    #[test]
    fn zero_interferers_give_zero_total() {
        let spec = RfiSpec::new(0, 48);
        let slot = total_rfi(&spec, 5, 9);
        assert!(slot.total.iter().all(|&x| x == 0.0));
        assert!(slot.fading.is_empty());
    }

    #[test]
    fn total_is_exactly_the_weighted_sum_of_signals() {
        let spec = RfiSpec::new(7, 24);
        let slot = total_rfi(&spec, 3, 4);
        for i in 0..24 {
            let mut acc = 0.0f64;
            for u in 0..7 {
                acc += f64::from(slot.fading[u]) * f64::from(slot.signals[(u, i)]);
            }
            assert_eq!(acc as f32, slot.total[i]);
        }
    }

    #[test]
    fn fading_is_constant_within_a_slot() {
        // With one interferer, total / signal recovers g elementwise.
        let spec = RfiSpec::new(1, 16);
        let slot = total_rfi(&spec, 11, 7);
        let g = slot.fading[0];
        for i in 0..16 {
            let ratio = slot.total[i] / slot.signals[(0, i)];
            assert!((ratio - g).abs() < 1e-5, "ratio {ratio} vs g {g}");
        }
    }

    #[test]
    fn unconditional_variance_is_power_times_interferers() {
        // Law of total variance: Var(Σ g_u v_u) = U · power per element.
        let slots = 10_000u64;
        for interferers in [1usize, 5] {
            let spec = RfiSpec::new(interferers, 16);
            let sums: Vec<f64> = exec::map_indexed(ExecMode::Parallel, slots as usize, |t| {
                let slot = total_rfi(&spec, t as u64, 1234);
                slot.total.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>()
            });
            let var = sums.iter().sum::<f64>() / (slots as f64 * 16.0);
            let expected = spec.power * interferers as f64;
            assert!(
                (var - expected).abs() < expected * 0.05,
                "U={interferers}: var {var} vs {expected}"
            );
        }
    }

    #[test]
    fn distinct_slots_are_uncorrelated() {
        let spec = RfiSpec::new(2, 8);
        let slots = 10_000;
        let a: Vec<f64> = (0..slots)
            .map(|t| f64::from(total_rfi(&spec, t as u64, 5).total[0]))
            .collect();
        let b: Vec<f64> = (0..slots)
            .map(|t| f64::from(total_rfi(&spec, (t + 1) as u64, 5).total[0]))
            .collect();
        let mean_a = a.iter().sum::<f64>() / slots as f64;
        let mean_b = b.iter().sum::<f64>() / slots as f64;
        let mut cov = 0.0;
        let mut var_a = 0.0;
        let mut var_b = 0.0;
        for i in 0..slots {
            cov += (a[i] - mean_a) * (b[i] - mean_b);
            var_a += (a[i] - mean_a).powi(2);
            var_b += (b[i] - mean_b).powi(2);
        }
        let corr = cov / (var_a.sqrt() * var_b.sqrt());
        assert!(corr.abs() < 0.05, "corr = {corr}");
    }

    #[test]
    fn apply_channel_identity_and_additivity() {
        let x = Array2::from_shape_fn((3, 8), |(i, j)| (i * 8 + j) as f32 * 0.25);
        let zero_i = total_rfi(&RfiSpec::new(0, 8), 0, 0);
        let zero_n = Array1::zeros(8);
        assert_eq!(apply_channel(&x, &zero_i, &zero_n).unwrap(), x);

        let i = total_rfi(&RfiSpec::new(3, 8), 1, 2);
        let n = awgn_sample(0.1, 8, &mut derive_rng(0, DOMAIN_NOISE, 1, 0));
        let zeros = Array2::zeros((3, 8));
        let with_x = apply_channel(&x, &i, &n).unwrap();
        let without_x = apply_channel(&zeros, &i, &n).unwrap();
        let diff = &with_x - &without_x;
        for (d, v) in diff.iter().zip(x.iter()) {
            assert!((d - v).abs() < 1e-5, "additivity off: {d} vs {v}");
        }
        // x = 0, U = 0 -> y = n rowwise
        let only_noise = apply_channel(&zeros, &zero_i, &n).unwrap();
        for row in only_noise.rows() {
            assert_eq!(row.to_vec(), n.to_vec());
        }
    }

    #[test]
    fn apply_channel_rejects_mismatched_lengths() {
        let x = Array2::<f32>::zeros((1, 8));
        let i = total_rfi(&RfiSpec::new(1, 4), 0, 0);
        assert!(apply_channel(&x, &i, &Array1::zeros(8)).is_err());
    }

    fn desk_model() -> DeepScModel<f32> {
        let cfg = ModelConfig::new(40, 12, 16, 4, 2, 32);
        build_model(&cfg, 21).unwrap()
    }

    fn tokens() -> Array2<usize> {
        Array2::from_shape_fn((2, 12), |(b, l)| (b * 5 + l + 1) % 40)
    }

    #[test]
    fn zero_interference_view_is_bit_equal_to_the_model() {
        let model = desk_model();
        let zero = total_rfi(&RfiSpec::new(0, model.symbol_len()), 0, 0);
        let view = inject_rfi(&model, &zero).unwrap();
        let x = tokens();
        assert_eq!(
            view.forward(&x).unwrap(),
            model.forward(&x, NoiseMode::FrozenBias).unwrap()
        );
    }

    #[test]
    fn heavy_interference_perturbs_the_output() {
        let model = desk_model();
        let slot = total_rfi(&RfiSpec::new(50, model.symbol_len()), 1, 3);
        let view = inject_rfi(&model, &slot).unwrap();
        let x = tokens();
        let clean = model.forward(&x, NoiseMode::FrozenBias).unwrap();
        let hit = view.forward(&x).unwrap();
        let max_dev = clean
            .iter()
            .zip(hit.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_dev > 0.0);
    }

    #[test]
    fn distinct_slots_inject_distinct_biases() {
        let spec = RfiSpec::new(2, 16);
        let a = total_rfi(&spec, 1, 3);
        let b = total_rfi(&spec, 2, 3);
        assert_ne!(a.total, b.total);
    }

    #[test]
    fn injection_never_mutates_the_wrapped_model() {
        let model = desk_model();
        let before = model.param_vector();
        let slot = total_rfi(&RfiSpec::new(50, model.symbol_len()), 2, 5);
        let view = inject_rfi(&model, &slot).unwrap();
        let _ = view.forward(&tokens()).unwrap();
        drop(view);
        assert_eq!(model.param_vector(), before);
    }

    #[test]
    fn injection_rejects_length_mismatch() {
        let model = desk_model();
        let slot = total_rfi(&RfiSpec::new(1, 7), 0, 0);
        assert!(matches!(
            inject_rfi(&model, &slot),
            Err(Error::InterferenceLength { .. })
        ));
    }

    #[test]
    fn forward_equals_encode_apply_decode_route() {
        // Same computation through the explicit channel pieces: the frozen
        // bias plays the role of the noise vector, interference is added
        // first, exactly like the injected view.
        let model = desk_model();
        let x = tokens();
        let slot = total_rfi(&RfiSpec::new(3, model.symbol_len()), 4, 6);
        let view = inject_rfi(&model, &slot).unwrap();
        let via_view = view.forward(&x).unwrap();

        let symbols = model.encode_to_symbols(&x).unwrap();
        let received = apply_channel(&symbols, &slot, model.awgn_parameters().1).unwrap();
        let via_pieces = model.decode_from_symbols(&received).unwrap();
        assert_eq!(via_view, via_pieces);
    }
}
