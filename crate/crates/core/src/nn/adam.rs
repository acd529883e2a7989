use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::math;

/// Adam with bias correction. Gradients are cleared after every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    pub fn step(&self, store: &mut ParamStore) {
        store.step_count += 1;
        let t = store.step_count;
        let c1 = 1.0 - math::powi(self.beta1, t);
        let c2 = 1.0 - math::powi(self.beta2, t);
        for p in store.iter_mut() {
            let value = &mut p.value.data;
            let grad = &mut p.grad.data;
            let m = &mut p.adam_m.data;
            let v = &mut p.adam_v.data;
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                value[i] -= self.lr * m_hat / (math::sqrt(v_hat) + self.eps);
                grad[i] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use alloc::vec;

    fn store(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::vector(vec![value])).unwrap();
        s.grad_mut(id)[0] = grad;
        s
    }

    #[test]
    fn first_step_is_sign_of_gradient() {
        for g in [3.0, -0.02, 1e-3] {
            let mut s = store(0.0, g);
            let adam = Adam::new(1e-3);
            adam.step(&mut s);
            let w = s.get("w").unwrap();
            let expect = -1e-3 * g.signum();
            assert!((w.value.data[0] - expect).abs() <= 1e-3 * 1e-8 / g.abs() + 1e-18);
            assert_eq!(w.grad.data[0], 0.0);
            assert_eq!(s.step_count, 1);
        }
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let mut s = store(0.7, 0.0);
        Adam::default().step(&mut s);
        assert_eq!(s.get("w").unwrap().value.data[0], 0.7);
    }

    #[test]
    fn zero_lr_is_bitwise_noop() {
        let mut s = store(0.123456789, 5.0);
        Adam::new(0.0).step(&mut s);
        assert_eq!(s.get("w").unwrap().value.data[0].to_bits(), 0.123456789f64.to_bits());
    }

    #[test]
    fn deterministic() {
        let mut a = store(0.5, 0.25);
        let mut b = store(0.5, 0.25);
        for _ in 0..5 {
            a.get_mut("w").unwrap().grad.data[0] = 0.1;
            b.get_mut("w").unwrap().grad.data[0] = 0.1;
            Adam::default().step(&mut a);
            Adam::default().step(&mut b);
        }
        assert_eq!(a, b);
    }
}
