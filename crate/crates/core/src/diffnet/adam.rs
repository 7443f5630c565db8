use serde::{Deserialize, Serialize};

use super::{NetError, ParamSet, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-5,
        }
    }
}

/// Adam moments for one [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) -> Result<(), NetError> {
        if !params.same_layout(grads) {
            return Err(NetError::ShapeMismatch {
                node: "adam: gradients".into(),
                expected: params.numel(),
                got: grads.numel(),
            });
        }
        if !params.same_layout(&self.m) {
            return Err(NetError::ShapeMismatch {
                node: "adam: moments".into(),
                expected: params.numel(),
                got: self.m.numel(),
            });
        }
        self.t += 1;
        let c = self.config;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let bc1 = T::lit(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.t as i32));
        let lr = T::lit(c.learning_rate);
        let eps = T::lit(c.epsilon);

        let m_entries = self.m.entries_mut();
        let v_entries = self.v.entries_mut();
        let p_entries = params.entries_mut();
        for (((p, g), m), v) in p_entries
            .iter_mut()
            .zip(grads.entries())
            .zip(m_entries.iter_mut())
            .zip(v_entries.iter_mut())
        {
            for i in 0..p.values.len() {
                let gi = g.values[i];
                let mi = b1 * m.values[i] + (one - b1) * gi;
                let vi = b2 * v.values[i] + (one - b2) * gi * gi;
                m.values[i] = mi;
                v.values[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                p.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ParamSet<f32> {
        let mut p = ParamSet::new();
        p.push("w", vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        p
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = params();
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        let zero = p.zeros_like();
        for _ in 0..50 {
            adam.step(&mut p, &zero).unwrap();
        }
        assert!(p.bitwise_eq(&before));
        assert_eq!(adam.t, 50);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        let mut p = params();
        let before = p.flatten();
        let mut g = p.zeros_like();
        g.entries_mut()[0].values = vec![0.3, -2.0, 1e-2];
        let cfg = AdamConfig::default();
        let mut adam = AdamState::new(cfg, &p);
        adam.step(&mut p, &g).unwrap();
        let after = p.flatten();
        for (i, s) in [1.0f32, -1.0, 1.0].iter().enumerate() {
            let delta = after[i] - before[i];
            assert!((delta + cfg.learning_rate as f32 * s).abs() < 1e-6, "{delta}");
        }
    }

    #[test]
    fn default_learning_rate() {
        assert_eq!(AdamConfig::default().learning_rate, 5e-4);
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let mut p = params();
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        let mut wrong = ParamSet::new();
        wrong.push("w", vec![2], vec![0.0, 0.0]).unwrap();
        assert!(adam.step(&mut p, &wrong).is_err());
    }
}
