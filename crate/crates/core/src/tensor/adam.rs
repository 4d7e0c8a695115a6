use alloc::vec;
use alloc::vec::Vec;

use super::mlp::{Gradients, MlpParams};
use crate::error::{check_len, Error, Result};

/// Bias-corrected Adam moments for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn for_params(params: &MlpParams, lr: f64) -> Self {
        Self::new(params.num_params(), lr)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One Adam step. A non-finite gradient leaves both the parameters and
    /// the optimizer state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_len("adam parameters", self.m.len(), params.len())?;
        check_len("adam gradients", self.m.len(), grads.len())?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adam gradient"));
        }
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - libm::pow(self.beta1, t);
        let bc2 = 1.0 - libm::pow(self.beta2, t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
        Ok(())
    }
}

pub fn adam_update(params: &mut MlpParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    state.step(params.as_mut_slice(), grads.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Activation;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = MlpParams::zeros(&[2, 2], Activation::Tanh, Activation::Identity);
        p.as_mut_slice()[0] = 0.3;
        let before = p.clone();
        let mut s = AdamState::for_params(&p, 1e-4);
        let zero = Gradients::zeros_like(&p);
        adam_update(&mut p, &zero, &mut s).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut theta = [0.0];
        let mut s = AdamState::new(1, 1e-4);
        s.step(&mut theta, &[1.0]).unwrap();
        assert!((theta[0] + 1e-4).abs() < 1e-12);
        let prev = theta[0];
        s.step(&mut theta, &[1.0]).unwrap();
        let delta = (theta[0] - prev).abs();
        assert!((0.9e-4..=1.1e-4).contains(&delta));
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_mutation() {
        let mut theta = [0.5, 0.5];
        let mut s = AdamState::new(2, 1e-3);
        assert!(s.step(&mut theta, &[1.0, f64::NAN]).is_err());
        assert_eq!(theta, [0.5, 0.5]);
        assert_eq!(s.step_count(), 0);
        assert!(s.first_moment().iter().all(|&m| m == 0.0));
    }
}
