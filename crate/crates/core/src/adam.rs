//! ADAM with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter from its gradient buffer.
    /// A parameter without a gradient buffer is treated as having zero
    /// gradient. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [(String, &mut Tensor)]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::shape(
                format!("{} parameters", self.m.len()),
                format!("{} parameters", params.len()),
            ));
        }
        for ((name, p), m) in params.iter().zip(&self.m) {
            if p.len() != m.len() {
                return Err(Error::shape(
                    format!("{} values in `{name}`", m.len()),
                    format!("{} values", p.len()),
                ));
            }
            if let Some(g) = p.grad() {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteGradient { param: name.clone() });
                }
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for (((_, p), m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad().map(<[f32]>::to_vec);
            let values = p.values_mut();
            for i in 0..values.len() {
                let g = grad.as_ref().map_or(0.0, |g| g[i] as f64);
                let mi = beta1 * m[i] as f64 + (1.0 - beta1) * g;
                let vi = beta2 * v[i] as f64 + (1.0 - beta2) * g * g;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = lr * (mi / bias1) / ((vi / bias2).sqrt() + eps);
                values[i] = (values[i] as f64 - update) as f32;
            }
        }
        Ok(())
    }
}
