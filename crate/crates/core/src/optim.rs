//! Adam with decoupled weight decay over flat parameter buffers.

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.98, eps: 1e-8, weight_decay: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub step: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, cfg: AdamConfig) -> Self {
        Adam { cfg, step: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    /// One update with bias correction; weight decay is applied directly to
    /// the parameters, not through the moments.
    pub fn step(&mut self, lr: f64, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer/parameter size mismatch");
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let t = self.step as f64;
        let AdamConfig { beta1, beta2, eps, weight_decay } = self.cfg;
        let bc1 = 1.0 - beta1.powf(t);
        let bc2 = 1.0 - beta2.powf(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * params[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_zero_decay_leave_params_fixed() {
        let mut adam = Adam::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        let orig = p.clone();
        for _ in 0..10 {
            adam.step(1e-3, &mut p, &[0.0, 0.0, 0.0]);
        }
        assert_eq!(p, orig);
    }

    #[test]
    fn first_step_moves_by_lr_sign() {
        // with bias correction the first update is lr * g / (|g| + eps)
        let mut adam = Adam::new(2, AdamConfig::default());
        let mut p = vec![0.0, 0.0];
        adam.step(0.1, &mut p, &[1.0, -3.0]);
        assert!((p[0] + 0.1).abs() < 1e-6);
        assert!((p[1] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn hand_computed_second_step() {
        let cfg = AdamConfig { beta1: 0.9, beta2: 0.98, eps: 1e-8, weight_decay: 0.0 };
        let mut adam = Adam::new(1, cfg);
        let mut p = vec![0.5];
        let (g1, g2) = (0.2, -0.4);
        adam.step(0.01, &mut p, &[g1]);
        adam.step(0.01, &mut p, &[g2]);
        // replay by hand
        let mut m = 0.0;
        let mut v = 0.0;
        let mut q = 0.5;
        for (t, g) in [(1, g1), (2, g2)] {
            m = 0.9 * m + 0.1 * g;
            v = 0.98 * v + 0.02 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.98f64.powi(t));
            q -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p[0] - q).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_shrinks_without_gradient() {
        let cfg = AdamConfig { weight_decay: 0.1, ..AdamConfig::default() };
        let mut adam = Adam::new(1, cfg);
        let mut p = vec![1.0];
        adam.step(0.1, &mut p, &[0.0]);
        assert!((p[0] - (1.0 - 0.1 * 0.1)).abs() < 1e-12);
    }
}
