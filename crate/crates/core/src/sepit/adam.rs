//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(params: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; params], v: vec![0.0; params] }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of `params` against `grad` at learning rate `lr`.
    pub fn update<T: Scalar>(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            let g = g.as_f64();
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let step = lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            *p = T::of(p.as_f64() - step);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = Adam::new(2);
        let mut p = vec![1.0f64, -1.0];
        opt.update(&mut p, &[0.5, -3.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Adam::new(3);
        let mut p = vec![0.25f32, 0.0, -2.0];
        for _ in 0..10 {
            opt.update(&mut p, &[0.0; 3], 1e-3);
        }
        assert_eq!(p, vec![0.25, 0.0, -2.0]);
    }

    #[test]
    fn minimises_quadratic() {
        let mut opt = Adam::new(1);
        let mut p = vec![5.0f64];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.5)];
            opt.update(&mut p, &g, 0.05);
        }
        assert!((p[0] - 1.5).abs() < 1e-2);
    }
}
