use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step_count: 0, first_moment: Vec::new(), second_moment: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every parameter, then zeroes the gradients.
    ///
    /// Every parameter must carry a gradient; the parameter list must keep
    /// the same order and shapes between calls.
    pub fn step(&mut self, params: &mut [(&str, &mut Tensor)]) -> Result<()> {
        if let Some((name, _)) = params.iter().find(|(_, t)| t.grad.is_none()) {
            return Err(Error::MissingGradient(name.to_string()));
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len()
            || self.first_moment.iter().zip(params.iter()).any(|(m, (_, t))| m.len() != t.len())
        {
            return Err(Error::shape("adam_step", "parameter set changed between steps"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, (_, p)) in params.iter_mut().enumerate() {
            let grad = p.grad.take().expect("checked above");
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for (j, value) in p.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *value -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}
