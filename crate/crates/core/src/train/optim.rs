use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Parameter;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Coupled L2 penalty: `λθ` is added to the gradient before the moments.
    pub weight_decay: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f32| (0.0..1.0).contains(&b);
        if !unit(self.beta1) || !unit(self.beta2) || !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// Adam with bias correction. Moment buffers are created lazily on the
/// first step, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Updates every parameter that carries a gradient; parameters without
    /// one are left untouched. Fails if no parameter has a gradient.
    pub fn step(&mut self, params: &mut [Parameter], lr: f32) -> Result<()> {
        if params.iter().all(|p| p.tensor.grad().is_none()) {
            return Err(Error::Empty("optimizer step without gradients".into()));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.tensor.numel())
        {
            return Err(Error::invalid("optimizer state does not match the parameter layout"));
        }
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - libm::powf(beta1, self.step as f32);
        let bc2 = 1.0 - libm::powf(beta2, self.step as f32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(grad) = p.tensor.grad().map(<[f32]>::to_vec) else {
                continue;
            };
            let theta = p.tensor.data_mut();
            for i in 0..theta.len() {
                let g = grad[i] + weight_decay * theta[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr * m_hat / (libm::sqrtf(v_hat) + eps);
            }
        }
        Ok(())
    }
}

/// Step decay: `lr(e) = initial · gamma^floor(e / step)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f32,
    pub gamma: f32,
    pub step_epochs: usize,
    pub epochs: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 1e-4,
            gamma: 0.1,
            step_epochs: 160,
            epochs: 200,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f32 {
        let k = (epoch / self.step_epochs.max(1)) as i32;
        (self.initial as f64 * libm::pow(self.gamma as f64, k as f64)) as f32
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0) || !(self.gamma > 0.0) || self.step_epochs == 0 || self.epochs == 0 {
            return Err(Error::Config(format!("invalid learning-rate schedule {self:?}")));
        }
        Ok(())
    }
}
