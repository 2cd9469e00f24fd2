use serde::{Deserialize, Serialize};

use crate::nn::{GqaNet, ParamGroup};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for every parameter of a [`GqaNet`]; only `groups` are updated.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: GqaNet<T>,
    v: GqaNet<T>,
    groups: Vec<ParamGroup>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &GqaNet<T>, config: AdamConfig, groups: &[ParamGroup]) -> Self {
        Adam { config, step: 0, m: net.zeros_like(), v: net.zeros_like(), groups: groups.to_vec() }
    }

    pub fn update(&mut self, net: &mut GqaNet<T>, grad: &GqaNet<T>) {
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::one() - T::lit(c.beta1.powi(self.step as i32));
        let bc2 = T::one() - T::lit(c.beta2.powi(self.step as i32));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let params = net.params_mut();
        let grads = grad.params();
        let ms = self.m.params_mut();
        let vs = self.v.params_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(ms).zip(vs) {
            if !self.groups.contains(&p.1) {
                continue;
            }
            let it = p.2.data_mut().iter_mut().zip(g.2.data()).zip(m.2.data_mut()).zip(v.2.data_mut());
            for (((w, &g), m), v) in it {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            }
        }
    }

    pub fn first_moment(&self) -> &GqaNet<T> {
        &self.m
    }
}
