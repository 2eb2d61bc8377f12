use std::collections::BTreeMap;

use autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
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

/// Adam without weight decay; moments are shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &BTreeMap<String, Tensor>) -> Self {
        let zeros = || params.iter().map(|(k, t)| (k.clone(), vec![0.0; t.numel()])).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update. Parameters without a gradient entry are left alone.
    pub fn update(&mut self, params: &mut BTreeMap<String, Tensor>, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        self.step += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        for (name, g) in grads {
            let (Some(p), Some(m), Some(v)) = (params.get_mut(name), self.m.get_mut(name), self.v.get_mut(name)) else {
                return Err(invalid(format!("gradient for unknown parameter {name}")));
            };
            if g.shape() != p.shape() {
                return Err(invalid(format!("gradient shape mismatch for {name}")));
            }
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *w -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> BTreeMap<String, Tensor> {
        [("w".to_string(), Tensor::from_vec(vec![1.0, -2.0, 3.0]))].into_iter().collect()
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut p = params();
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let g = [("w".to_string(), Tensor::zeros(&[3]))].into_iter().collect();
        for _ in 0..5 {
            adam.update(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = params();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let g = [("w".to_string(), Tensor::from_vec(vec![0.5, -4.0, 1e-3]))].into_iter().collect();
        adam.update(&mut p, &g).unwrap();
        let moved: Vec<f64> = p["w"].data().iter().zip([1.0, -2.0, 3.0]).map(|(a, b)| a - b).collect();
        assert!((moved[0] + 1e-3).abs() < 1e-9);
        assert!((moved[1] - 1e-3).abs() < 1e-9);
        assert!((moved[2] + 1e-3).abs() < 1e-7);
    }
}
