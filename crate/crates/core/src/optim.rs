//! Adam with bias correction. Moment buffers are keyed by parameter name so
//! they can be checkpointed; non-finite gradients abort the run rather than
//! being skipped — reproducibility beats robustness at this scale.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::Params;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug)]
pub struct Adam {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    /// name → (first moment, second moment), stored in f64 regardless of the
    /// parameter dtype so checkpoints are exact.
    pub moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(alpha: f64, beta1: f64, beta2: f64) -> Self {
        Adam { alpha, beta1, beta2, eps: 1e-8, step_count: 0, moments: BTreeMap::new() }
    }

    /// One update over every parameter the model exposes.
    pub fn step<S: Scalar>(&mut self, model: &mut dyn Params<S>) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t as i32);
        let bc2 = 1.0 - b2.powi(t as i32);
        let (alpha, eps) = (self.alpha, self.eps);
        let moments = &mut self.moments;
        let mut bad: Option<String> = None;
        model.visit_params("", &mut |name: &str, v: &mut Tensor<S>, g: &mut Tensor<S>| {
            if bad.is_some() {
                return;
            }
            let n = v.numel();
            let (m, s) = moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            if m.len() != n {
                bad = Some(format!("moment buffer for {name} has stale shape"));
                return;
            }
            for i in 0..n {
                let gi = g.data()[i].to_f64();
                if !gi.is_finite() {
                    bad = Some(format!("non-finite gradient in {name} at index {i}: {gi}"));
                    return;
                }
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                s[i] = b2 * s[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let s_hat = s[i] / bc2;
                let upd = alpha * m_hat / (s_hat.sqrt() + eps);
                let cur = v.data()[i].to_f64();
                v.data_mut()[i] = S::from_f64(cur - upd);
            }
        });
        match bad {
            Some(msg) => Err(Error::NonFinite(msg)),
            None => Ok(()),
        }
    }
}
