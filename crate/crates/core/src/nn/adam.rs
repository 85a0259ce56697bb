//! Adaptive-moment optimizer over flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize, cfg: AdamConfig) -> AdamState {
        AdamState {
            cfg,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. Non-finite gradients abort the step with an
    /// error and leave both the parameters and the moments untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(idx) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient entry {idx} is {}",
                grads[idx]
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut state = AdamState::new(3, AdamConfig::with_lr(0.1));
        let mut params = vec![1.0, -2.0, 0.5];
        state.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_one_learning_rate_long() {
        let mut state = AdamState::new(1, AdamConfig::with_lr(0.1));
        let mut params = vec![0.0];
        state.step(&mut params, &[1.0]).unwrap();
        // bias-corrected m/sqrt(v) is exactly 1 on the first step
        assert_abs_diff_eq!(params[0], -0.1, epsilon = 1e-8);
    }

    #[test]
    fn nonfinite_gradient_aborts_without_mutation() {
        let mut state = AdamState::new(2, AdamConfig::with_lr(0.1));
        let mut params = vec![1.0, 2.0];
        state.step(&mut params, &[0.5, -0.5]).unwrap();
        let snapshot = params.clone();
        let before = state.clone();
        let err = state.step(&mut params, &[f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(params, snapshot);
        assert_eq!(state, before);
    }

    /// Five steps on a quadratic against an independent transcription of the
    /// published update rule.
    #[test]
    fn trajectory_matches_reference_implementation() {
        let cfg = AdamConfig {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let grad = |x: f64| 2.0 * (x - 3.0); // d/dx (x-3)^2

        let mut state = AdamState::new(1, cfg);
        let mut params = vec![0.0];
        let mut trace = Vec::new();
        for _ in 0..5 {
            let g = grad(params[0]);
            state.step(&mut params, &[g]).unwrap();
            trace.push(params[0]);
        }

        // reference: scalar loop written from the algorithm statement
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=5 {
            let g = grad(x);
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            x -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            assert_abs_diff_eq!(trace[(t - 1) as usize], x, epsilon = 1e-10);
        }
    }
}
