//! First-order optimizers over flattened parameter lists.

use serde::{Deserialize, Serialize};

use super::{ParamRefMut, Scalar};

/// Optimizer family and its hyperparameters (learning rate is passed per
/// step so schedule callbacks can change it mid-training).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    SgdMomentum {
        momentum: f64,
    },
    RmsProp {
        rho: f64,
        epsilon: f64,
    },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl OptimizerKind {
    pub fn sgd_momentum() -> Self {
        OptimizerKind::SgdMomentum { momentum: 0.9 }
    }

    pub fn rms_prop() -> Self {
        OptimizerKind::RmsProp {
            rho: 0.9,
            epsilon: 1e-7,
        }
    }
}

struct Slot<F> {
    first: Vec<F>,
    second: Vec<F>,
}

/// Stateful optimizer. Slots are allocated on the first step and keyed by
/// traversal order, which is stable for a given model architecture.
pub struct Optimizer<F: Scalar> {
    kind: OptimizerKind,
    step_count: u64,
    slots: Vec<Slot<F>>,
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            step_count: 0,
            slots: Vec::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Applies one update with the given learning rate; frozen parameters
    /// are skipped but keep their slot positions.
    pub fn step(&mut self, params: &mut [ParamRefMut<'_, F>], learning_rate: f64) {
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|p| Slot {
                    first: vec![F::zero(); p.value.len()],
                    second: vec![F::zero(); p.value.len()],
                })
                .collect();
        }
        assert_eq!(self.slots.len(), params.len(), "parameter layout changed");
        self.step_count += 1;
        let lr = F::from_f64(learning_rate).unwrap();
        match self.kind {
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let b1 = F::from_f64(beta1).unwrap();
                let b2 = F::from_f64(beta2).unwrap();
                let eps = F::from_f64(epsilon).unwrap();
                let t = self.step_count as i32;
                let bias1 = F::one() - b1.powi(t);
                let bias2 = F::one() - b2.powi(t);
                for (p, slot) in params.iter_mut().zip(&mut self.slots) {
                    if !p.trainable {
                        continue;
                    }
                    for ((w, &g), (m, v)) in p
                        .value
                        .iter_mut()
                        .zip(p.grad.iter())
                        .zip(slot.first.iter_mut().zip(slot.second.iter_mut()))
                    {
                        *m = b1 * *m + (F::one() - b1) * g;
                        *v = b2 * *v + (F::one() - b2) * g * g;
                        let m_hat = *m / bias1;
                        let v_hat = *v / bias2;
                        *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            OptimizerKind::SgdMomentum { momentum } => {
                let mu = F::from_f64(momentum).unwrap();
                for (p, slot) in params.iter_mut().zip(&mut self.slots) {
                    if !p.trainable {
                        continue;
                    }
                    for ((w, &g), vel) in p
                        .value
                        .iter_mut()
                        .zip(p.grad.iter())
                        .zip(slot.first.iter_mut())
                    {
                        *vel = mu * *vel - lr * g;
                        *w = *w + *vel;
                    }
                }
            }
            OptimizerKind::RmsProp { rho, epsilon } => {
                let rho = F::from_f64(rho).unwrap();
                let eps = F::from_f64(epsilon).unwrap();
                for (p, slot) in params.iter_mut().zip(&mut self.slots) {
                    if !p.trainable {
                        continue;
                    }
                    for ((w, &g), acc) in p
                        .value
                        .iter_mut()
                        .zip(p.grad.iter())
                        .zip(slot.second.iter_mut())
                    {
                        *acc = rho * *acc + (F::one() - rho) * g * g;
                        *w = *w - lr * g / (acc.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Scales all trainable gradients so their global L2 norm is at most
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm<F: Scalar>(params: &mut [ParamRefMut<'_, F>], max_norm: f64) -> f64 {
    let mut sum_sq = 0.0f64;
    for p in params.iter() {
        if !p.trainable {
            continue;
        }
        for &g in p.grad.iter() {
            let g = g.to_f64().unwrap();
            sum_sq += g * g;
        }
    }
    let norm = sum_sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = F::from_f64(max_norm / norm).unwrap();
        for p in params.iter_mut() {
            if !p.trainable {
                continue;
            }
            for g in p.grad.iter_mut() {
                *g = *g * scale;
            }
        }
    }
    norm
}
