use serde::{Deserialize, Serialize};

use super::layer::ParamGrad;
use super::network::Network;

/// Floor on the infinity-norm estimate before dividing.
pub const U_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamaxConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamaxConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

/// Adamax moments for one parameter slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub u: Vec<f64>,
}

impl Moments {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            u: vec![0.0; n],
        }
    }

    /// One update of `theta` with step-size `lr_t = alpha / (1 - beta1^t)`.
    pub fn apply(&mut self, cfg: &AdamaxConfig, lr_t: f64, theta: &mut [f64], g: &[f64]) {
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        for (((th, &g), m), u) in theta
            .iter_mut()
            .zip(g)
            .zip(self.m.iter_mut())
            .zip(self.u.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *u = (b2 * *u).max(g.abs());
            *th -= lr_t * *m / u.max(U_FLOOR);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adamax {
    pub config: AdamaxConfig,
    pub t: u64,
    /// Weight and bias moments for each parametric layer, in order.
    pub state: Vec<(Moments, Moments)>,
}

impl Adamax {
    pub fn new(net: &Network, config: AdamaxConfig) -> Self {
        let state = net
            .layers()
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| (Moments::new(w.len()), Moments::new(b.len())))
            .collect();
        Self {
            config,
            t: 0,
            state,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.config.learning_rate / (1.0 - self.config.beta1.powi(self.t as i32))
    }

    pub fn step(&mut self, net: &mut Network, grads: &[ParamGrad]) {
        self.t += 1;
        let lr_t = self.step_size();
        let cfg = self.config;
        for (((w, b), g), (mw, mb)) in net.params_with_grads(grads).zip(self.state.iter_mut()) {
            mw.apply(&cfg, lr_t, w, &g.w);
            mb.apply(&cfg, lr_t, b, &g.b);
        }
    }
}
