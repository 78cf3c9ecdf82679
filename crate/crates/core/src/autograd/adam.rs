//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::AutogradError;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Moment buffers for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            step: 0,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            config,
        }
    }

    /// One in-place update of `param` from `grad`.
    pub fn step(&mut self, param: &mut [T], grad: &[T]) -> Result<(), AutogradError> {
        if param.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(AutogradError::ShapeMismatch {
                op: "adam_step",
                lhs: vec![param.len()],
                rhs: vec![grad.len()],
            });
        }
        if !(self.config.lr > 0.0) {
            return Err(AutogradError::InvalidArgument {
                op: "adam_step",
                detail: format!("learning rate must be positive, got {}", self.config.lr),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(AutogradError::NonFinite {
                what: format!("gradient entry {i}"),
            });
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powf(t));
        let bc2 = T::of(1.0 - c.beta2.powf(t));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        for ((p, &g), (m, v)) in param.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_normalized_gradient() {
        let cfg = AdamConfig::with_lr(0.01);
        let mut st = AdamState::<f64>::new(3, cfg);
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.3, -4.0, 1e-3];
        st.step(&mut p, &g).unwrap();
        // m_hat = g, v_hat = g^2 at step 1
        for (i, (&pi, &gi)) in p.iter().zip(&g).enumerate() {
            let start = [1.0, -2.0, 0.5][i];
            let expected = start - 0.01 * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-15, "{pi} vs {expected}");
        }
    }

    #[test]
    fn zero_gradient_leaves_param() {
        let mut st = AdamState::<f64>::new(2, AdamConfig::default());
        let mut p = vec![0.25, 4.0];
        st.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.25, 4.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut st = AdamState::<f64>::new(2, AdamConfig::with_lr(0.1));
            let mut p = vec![0.1, 0.2];
            for k in 0..5 {
                st.step(&mut p, &[k as f64 - 2.0, 0.5]).unwrap();
            }
            (p, st)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_non_finite_gradient_and_bad_lr() {
        let mut st = AdamState::<f64>::new(1, AdamConfig::default());
        let mut p = vec![0.0];
        assert!(matches!(st.step(&mut p, &[f64::NAN]), Err(AutogradError::NonFinite { .. })));
        let mut st = AdamState::<f64>::new(1, AdamConfig::with_lr(0.0));
        assert!(st.step(&mut p, &[1.0]).is_err());
    }

    #[test]
    fn second_step_uses_bias_correction() {
        let cfg = AdamConfig::with_lr(1.0);
        let mut st = AdamState::<f64>::new(1, cfg);
        let mut p = vec![0.0];
        st.step(&mut p, &[2.0]).unwrap();
        st.step(&mut p, &[1.0]).unwrap();
        let m = 0.9 * 0.2 + 0.1 * 1.0;
        let v = 0.999 * 0.004 + 0.001 * 1.0;
        let upd = (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert!((p[0] - (-1.0 * 2.0 / (2.0 + 1e-8) - upd)).abs() < 1e-12);
    }
}
