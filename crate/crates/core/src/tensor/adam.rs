//! Adam with bias-corrected moment estimates, plus global-norm clipping.

use super::{ParamSet, TensorError, TensorResult};

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, params: &ParamSet) -> Self {
        let m = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        let v = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over every parameter. Parameters without a gradient
    /// buffer are treated as having zero gradient.
    pub fn step(&mut self, params: &mut ParamSet) -> TensorResult<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (idx, (name, tensor)) in params.iter_mut().enumerate() {
            let n = tensor.numel();
            let grad: Vec<f64> = match tensor.grad() {
                Some(g) => g.to_vec(),
                None => vec![0.0; n],
            };
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(TensorError::NonFiniteGradient { param: name.into() });
            }
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let values = tensor.values_mut();
            for i in 0..n {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// A `max_norm` of 0 disables clipping. Returns the pre-clip norm.
pub fn clip_global_norm(params: &mut ParamSet, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for (_, t) in params.iter() {
        if let Some(g) = t.grad() {
            for &x in g {
                sq += x * x;
            }
        }
    }
    let norm = sq.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for (_, t) in params.iter_mut() {
            let n = t.numel();
            if t.grad().is_some() {
                let scaled: Vec<f64> = t.grad().unwrap().iter().map(|g| g * scale).collect();
                t.zero_grad();
                let _ = t.add_grad(&scaled);
                debug_assert_eq!(n, scaled.len());
            }
        }
    }
    norm
}
