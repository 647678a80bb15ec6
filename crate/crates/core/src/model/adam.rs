use serde::{Deserialize, Serialize};

use super::params::LstmParams;
use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one entry per parameter.
#[derive(Debug, Clone)]
pub struct Adam<T = f32> {
    pub config: AdamConfig,
    m: LstmParams<T>,
    v: LstmParams<T>,
    step: u32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &LstmParams<T>, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    pub fn first_moment(&self) -> &LstmParams<T> {
        &self.m
    }

    pub fn second_moment(&self) -> &LstmParams<T> {
        &self.v
    }

    /// Applies one bias-corrected update `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut LstmParams<T>, grads: &LstmParams<T>) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
        let lr_t = T::of(learning_rate / c1);
        let sqrt_c2 = T::of(c2.sqrt());
        let eps = T::of(epsilon);

        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *p = *p - lr_t * *m / (v.sqrt() / sqrt_c2 + eps);
            }
        }
    }
}
