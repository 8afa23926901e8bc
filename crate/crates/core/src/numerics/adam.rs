use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// First/second moment buffers, one per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Result<Self> {
        config.validate()?;
        let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Ok(AdamState {
            config,
            step_count: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "adam: {} parameter tensors, {} gradients, {} state slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != self.m[i].len() || params.tensors()[i].len() != g.len() {
                return Err(Error::Dimension(format!(
                    "adam: gradient {i} has {} entries, parameter has {}",
                    g.len(),
                    params.tensors()[i].len()
                )));
            }
        }
        self.step_count += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - beta2.powi(self.step_count as i32);
        for (i, tensor) in params.tensors_mut().iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, p) in tensor.data_mut().iter_mut().enumerate() {
                let g = grads[i][j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn single(value: f64) -> ParamSet {
        let mut p = ParamSet::default();
        p.push("p", Tensor::vector(vec![value]));
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = single(0.25);
        let mut s = AdamState::new(AdamConfig::default(), &p).unwrap();
        s.step(&mut p, &[vec![0.0]]).unwrap();
        assert_eq!(p.tensors()[0].data(), &[0.25]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = single(0.0);
        let mut s = AdamState::new(AdamConfig::default(), &p).unwrap();
        s.step(&mut p, &[vec![1.0]]).unwrap();
        // m̂ = v̂ = 1 after bias correction.
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.tensors()[0].data()[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = single(0.0);
        let mut s = AdamState::new(AdamConfig::default(), &p).unwrap();
        assert!(matches!(
            s.step(&mut p, &[vec![1.0, 2.0]]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn invalid_hyperparameters() {
        let p = single(0.0);
        for cfg in [
            AdamConfig { lr: 0.0, ..Default::default() },
            AdamConfig { beta1: 1.0, ..Default::default() },
            AdamConfig { beta2: -0.1, ..Default::default() },
            AdamConfig { eps: 0.0, ..Default::default() },
        ] {
            assert!(AdamState::new(cfg, &p).is_err());
        }
    }
}
