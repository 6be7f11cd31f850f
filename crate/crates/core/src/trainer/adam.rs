use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f32], grads: &[f32], state: &mut AdamState, lr: f32, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::Dimensions(alloc::format!(
            "adam: {} params, {} grads, {} state",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: "gradient",
            index,
        });
    }
    state.t += 1;
    let c1 = (1.0 - libm::pow(cfg.beta1 as f64, state.t as f64)) as f32;
    let c2 = (1.0 - libm::pow(cfg.beta2 as f64, state.t as f64)) as f32;
    for i in 0..params.len() {
        let g = grads[i];
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let m_hat = m / c1;
        let v_hat = v / c2;
        params[i] -= lr * m_hat / (libm::sqrtf(v_hat) + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_learning_rate() {
        // m_hat = g and v_hat = g^2 after one step, so the update is
        // -lr * g / (|g| + eps).
        let grads = [0.3f32, -2.0, 1e-3];
        let mut p = [1.0f32, 1.0, 1.0];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &grads, &mut st, 0.01, &AdamConfig::default()).unwrap();
        for (i, g) in grads.iter().enumerate() {
            let expect = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((p[i] - expect).abs() < 1e-6, "{i}: {} vs {expect}", p[i]);
        }
    }

    #[test]
    fn zero_gradients_do_nothing() {
        let mut p = [0.5f32, -0.25];
        let mut st = AdamState::new(2);
        for _ in 0..10 {
            adam_step(&mut p, &[0.0, 0.0], &mut st, 0.1, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, [0.5, -0.25]);
    }

    #[test]
    fn rejects_non_finite() {
        let mut p = [0.0f32; 2];
        let mut st = AdamState::new(2);
        let err = adam_step(&mut p, &[0.0, f32::NAN], &mut st, 0.1, &AdamConfig::default()).unwrap_err();
        assert_eq!(
            err,
            Error::NonFinite {
                what: "gradient",
                index: 1
            }
        );
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut p = [0.1f32, 0.2, 0.3];
            let mut st = AdamState::new(3);
            for k in 0..50 {
                let g = [p[0] - 1.0, (k as f32).sin() * p[1], p[2] * p[2]];
                adam_step(&mut p, &g, &mut st, 0.01, &AdamConfig::default()).unwrap();
            }
            p
        };
        assert_eq!(run().map(f32::to_bits), run().map(f32::to_bits));
    }
}
