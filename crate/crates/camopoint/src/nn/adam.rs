//! Adam optimizer with bias correction.

use super::tensor::Param;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Applies one update from the accumulated gradients and clears them.
    ///
    /// The parameter list must be identical (same order, same shapes) on
    /// every call; moment buffers are keyed by position.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer state mismatch");
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, param) in params.iter_mut().enumerate() {
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            assert_eq!(m.len(), param.len(), "optimizer state mismatch");
            let grads = param.grad.data().to_vec();
            let values = param.value.data_mut();
            for i in 0..values.len() {
                let g = grads[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / b1t;
                let v_hat = v[i] / b2t;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            param.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn minimizes_a_quadratic() {
        // f(x) = (x - 3)^2, df/dx = 2(x - 3)
        let mut p = Param::new("x", Tensor::from_vec(&[1], vec![0.0]));
        let mut opt = Adam::new(0.1);
        for _ in 0..300 {
            let x = p.value.data()[0];
            p.grad.data_mut()[0] = 2.0 * (x - 3.0);
            opt.step(&mut [&mut p]);
        }
        assert!((p.value.data()[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut p = Param::new("x", Tensor::from_vec(&[2], vec![1.5, -0.5]));
        let before = p.value.data().to_vec();
        let mut opt = Adam::new(0.0);
        for _ in 0..5 {
            p.grad.data_mut().copy_from_slice(&[1.0, -2.0]);
            opt.step(&mut [&mut p]);
        }
        assert_eq!(p.value.data(), &before[..]);
    }
}
