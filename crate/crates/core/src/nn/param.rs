use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blob;

/// A trainable parameter block with its Adam moments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    #[serde(with = "blob")]
    value: Vec<f64>,
    #[serde(with = "blob")]
    m: Vec<f64>,
    #[serde(with = "blob")]
    v: Vec<f64>,
    #[serde(skip)]
    grad: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let n = value.len();
        Self {
            value,
            m: vec![0.0; n],
            v: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(len: usize, bound: f64, rng: &mut impl Rng) -> Self {
        Self::new((0..len).map(|_| rng.random_range(-bound..=bound)).collect())
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }
    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
    pub fn value(&self) -> &[f64] {
        &self.value
    }
    pub fn value_mut(&mut self) -> &mut [f64] {
        &mut self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        }
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad_mut().fill(0.0);
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
        }
    }

    pub fn update<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Param>) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for p in params {
            p.grad_mut();
            for i in 0..p.value.len() {
                let g = p.grad[i];
                p.m[i] = self.beta1 * p.m[i] + (1.0 - self.beta1) * g;
                p.v[i] = self.beta2 * p.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = p.m[i] / bc1;
                let v_hat = p.v[i] / bc2;
                p.value[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Param::new(vec![1.0, -1.0]);
        p.grad_mut().copy_from_slice(&[3.0, -0.5]);
        let mut opt = Adam::new(0.1);
        opt.update([&mut p]);
        assert!((p.value()[0] - 0.9).abs() < 1e-6);
        assert!((p.value()[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn grad_is_restored_after_deserialize() {
        let p = Param::new(vec![1.0; 3]);
        let json = serde_json::to_string(&p).unwrap();
        let mut back: Param = serde_json::from_str(&json).unwrap();
        assert_eq!(back.grad_mut().len(), 3);
    }
}
