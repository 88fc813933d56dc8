use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam optimizer state with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state has {} entries, params {}, gradient {}",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64]) -> Result<()> {
    state.step(params, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..5 {
            s.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert!(s.m.iter().chain(&s.v).all(|&x| x == 0.0));
        assert_eq!(s.t, 5);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = AdamState::new(3, 0.01);
        let mut p = vec![0.0; 3];
        s.step(&mut p, &[3.0, -0.2, 1e3]).unwrap();
        for (x, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - sign * 0.01).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_loss_moves_monotonically() {
        let mut s = AdamState::new(1, 0.05);
        let mut p = vec![1.0];
        s.step(&mut p, &[2.0]).unwrap();
        let p1 = p[0];
        s.step(&mut p, &[2.0]).unwrap();
        assert!(p1 < 1.0 && p[0] < p1);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let mut s = AdamState::new(2, 0.1);
        let mut p = vec![0.0; 2];
        assert!(matches!(s.step(&mut p, &[1.0]), Err(Error::Shape(_))));
    }
}
