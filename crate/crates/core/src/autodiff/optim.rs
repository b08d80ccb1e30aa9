use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(
            "adam_step",
            format!(
                "{} params, {} grads, {} state slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (idx, p) in params.iter_mut().enumerate() {
        let g = grads[idx];
        if p.shape() != g.shape() || p.shape() != state.m[idx].shape() {
            return Err(Error::dim(
                "adam_step",
                format!(
                    "param {:?} vs grad {:?} vs state {:?}",
                    p.shape(),
                    g.shape(),
                    state.m[idx].shape()
                ),
            ));
        }
        let m = state.m[idx].data_mut();
        let v = state.v[idx].data_mut();
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *pv -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_fresh_state_leaves_params() {
        let mut p = Tensor::vector(vec![1.0, -2.0]).unwrap();
        let before = p.clone();
        let g = Tensor::zeros(&[2]);
        let mut st = AdamState::new(&[&p]);
        adam_step(&mut [&mut p], &[&g], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = Tensor::scalar(0.5);
        let mut st = AdamState::new(&[&p]);
        let cfg = AdamConfig::default();
        adam_step(&mut [&mut p], &[&Tensor::scalar(2.0)], &mut st, &cfg).unwrap();
        let (m1, v1) = (st.m[0].item(), st.v[0].item());
        adam_step(&mut [&mut p], &[&Tensor::scalar(0.0)], &mut st, &cfg).unwrap();
        assert_eq!(st.m[0].item(), 0.9 * m1);
        assert_eq!(st.v[0].item(), 0.999 * v1);
    }

    #[test]
    fn scalar_step_matches_hand_computation() {
        // State after some history: step 3, m = 0.2, v = 0.05. Gradient 0.4.
        let cfg = AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut p = Tensor::scalar(1.0);
        let mut st = AdamState {
            step: 3,
            m: vec![Tensor::scalar(0.2)],
            v: vec![Tensor::scalar(0.05)],
        };
        adam_step(&mut [&mut p], &[&Tensor::scalar(0.4)], &mut st, &cfg).unwrap();
        let m = 0.9 * 0.2 + 0.1 * 0.4; // 0.22
        let v = 0.999 * 0.05 + 0.001 * 0.16; // 0.05011
        let mhat = m / (1.0 - 0.9f64.powi(4));
        let vhat = v / (1.0 - 0.999f64.powi(4));
        let expected = 1.0 - 0.01 * mhat / (vhat.sqrt() + 1e-8);
        assert!((p.item() - expected).abs() < 1e-15);
        assert!((st.m[0].item() - 0.22).abs() < 1e-15);
        assert!((st.v[0].item() - 0.05011).abs() < 1e-15);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = Tensor::vector(vec![0.3, 0.7, -1.1]).unwrap();
            let mut st = AdamState::new(&[&p]);
            for k in 0..10 {
                let g = p.map(|x| x * (k as f64 + 1.0) - 0.1);
                adam_step(&mut [&mut p], &[&g], &mut st, &AdamConfig::default()).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = Tensor::zeros(&[2]);
        let mut st = AdamState::new(&[&p]);
        let g = Tensor::zeros(&[3]);
        assert!(adam_step(&mut [&mut p], &[&g], &mut st, &AdamConfig::default()).is_err());
    }
}
