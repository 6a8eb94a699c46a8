//! Bias-corrected Adam.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First/second moment buffers for a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        let v = m.clone();
        Self { config, m, v, t: 0 }
    }

    /// One Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            p.check_same_shape(g)?;
            p.check_same_shape(m)?;
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.t.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let pd = p.data_mut();
            for (((pv, &gv), mv), vv) in pd.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut state = AdamState::new(AdamConfig::default(), [&p]);
        state.step(&mut [&mut p], &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::zeros(&[4]);
        let g = Tensor::from_vec(&[4], vec![1e-3, -5.0, 250.0, 0.2]).unwrap();
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(cfg, [&p]);
        state.step(&mut [&mut p], &[g.clone()]).unwrap();
        for (pv, gv) in p.data().iter().zip(g.data()) {
            let expected = -cfg.lr * gv / (gv.abs() + cfg.eps);
            assert!((pv - expected).abs() < 1e-15, "{pv} vs {expected}");
            assert!((pv.abs() - cfg.lr).abs() < 1e-7);
        }
    }

    #[test]
    fn repeated_steps_are_bit_identical() {
        let run = || {
            let mut p = Tensor::from_vec(&[2], vec![0.3, 0.7]).unwrap();
            let mut state = AdamState::new(AdamConfig::with_lr(0.05), [&p]);
            for k in 0..10 {
                let g = Tensor::from_vec(&[2], vec![(k as f64).sin(), 0.1 * k as f64]).unwrap();
                state.step(&mut [&mut p], &[g]).unwrap();
            }
            (p, state)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::zeros(&[2]);
        let mut state = AdamState::new(AdamConfig::default(), [&p]);
        assert!(matches!(
            state.step(&mut [&mut p], &[Tensor::zeros(&[3])]),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
