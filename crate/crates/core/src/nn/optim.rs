//! Adam with decoupled weight decay and a triangular cyclic learning-rate
//! schedule whose amplitude halves (by the configured decay) each cycle.

use super::tensor::Tensor2;
use super::NnError;

/// Triangular schedule: starts at `base_lr`, peaks mid-cycle, returns to
/// `base_lr` at cycle end. The peak of cycle `k` is
/// `base_lr + (max_lr − base_lr)·decay^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicLrSchedule {
    pub base_lr: f64,
    pub max_lr: f64,
    pub steps_per_cycle: usize,
    pub decay: f64,
}

impl CyclicLrSchedule {
    pub fn new(base_lr: f64, max_lr: f64, steps_per_cycle: usize, decay: f64) -> Self {
        assert!(base_lr > 0.0 && max_lr >= base_lr && steps_per_cycle > 0 && decay > 0.0);
        CyclicLrSchedule {
            base_lr,
            max_lr,
            steps_per_cycle,
            decay,
        }
    }

    /// Constant learning rate, for tests and simple optimization.
    pub fn constant(lr: f64) -> Self {
        CyclicLrSchedule::new(lr, lr, 1, 1.0)
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        let cycle = step / self.steps_per_cycle as u64;
        let pos = (step % self.steps_per_cycle as u64) as f64 / self.steps_per_cycle as f64;
        let triangle = 1.0 - (2.0 * pos - 1.0).abs();
        let amplitude = (self.max_lr - self.base_lr) * self.decay.powi(cycle as i32);
        self.base_lr + amplitude * triangle
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled (AdamW-style) decay, applied as `p ← p·(1 − lr·wd)`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Optimizer state for a fixed, ordered list of parameter tensors. The
/// ordering must match the order in which the model visits its tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub schedule: CyclicLrSchedule,
    pub step: u64,
    pub moments: Vec<MomentPair>,
}

impl AdamState {
    pub fn new(config: AdamConfig, schedule: CyclicLrSchedule, shapes: &[usize]) -> Self {
        let moments = shapes
            .iter()
            .map(|&n| MomentPair {
                m: vec![0.0; n],
                v: vec![0.0; n],
            })
            .collect();
        AdamState {
            config,
            schedule,
            step: 0,
            moments,
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.schedule.lr_at(self.step)
    }

    /// One update over all tensors, reading each tensor's accumulated
    /// gradient buffer. The learning rate is taken from the schedule at the
    /// pre-increment step counter, so step 0 uses `base_lr`.
    pub fn step_params(&mut self, params: &mut [&mut Tensor2]) -> Result<(), NnError> {
        if params.len() != self.moments.len() {
            return Err(NnError::ShapeMismatch {
                context: "adam_step tensor count",
                expected: (self.moments.len(), 0),
                got: (params.len(), 0),
            });
        }
        let lr = self.schedule.lr_at(self.step);
        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);

        for (tensor, moment) in params.iter_mut().zip(self.moments.iter_mut()) {
            let n = tensor.data().len();
            if moment.m.len() != n {
                return Err(NnError::ShapeMismatch {
                    context: "adam_step moment shape",
                    expected: (moment.m.len(), 0),
                    got: (n, 0),
                });
            }
            let grad = tensor
                .grad()
                .ok_or(NnError::NonFinite {
                    context: "adam_step missing gradient",
                })?
                .to_vec();
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(NnError::NonFinite {
                    context: "adam_step gradient",
                });
            }
            let data = tensor.data_mut();
            for i in 0..n {
                data[i] *= 1.0 - lr * c.weight_decay;
                let g = grad[i];
                moment.m[i] = c.beta1 * moment.m[i] + (1.0 - c.beta1) * g;
                moment.v[i] = c.beta2 * moment.v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = moment.m[i] / bias1;
                let v_hat = moment.v[i] / bias2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}
