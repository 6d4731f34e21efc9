//! Uniform access to trainable parameters and persistent buffers.
//!
//! Optimizers, checkpoints, and the finite-difference checker all walk the
//! same visitation order, so parameter identity is positional and named.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Anything holding trainable parameters (value + gradient pairs) and,
/// optionally, non-trainable buffers that must persist across checkpoints
/// (e.g. power-iteration vectors).
pub trait Params<S: Scalar> {
    /// Visit every `(name, value, grad)` triple in a fixed order.
    /// `prefix` scopes names hierarchically ("stage3.f.conv0.w").
    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>),
    );

    /// Visit persistent non-trainable buffers. Default: none.
    fn visit_buffers(&mut self, _prefix: &str, _f: &mut dyn FnMut(&str, &mut Tensor<S>)) {}

    fn zero_grad(&mut self) {
        self.visit_params("", &mut |_, _, g| {
            for v in g.data_mut() {
                *v = S::zero();
            }
        });
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, v, _| n += v.numel());
        n
    }
}

/// Concatenate all parameters into one f64 vector (visitation order).
pub fn params_flat<S: Scalar>(p: &mut dyn Params<S>) -> Vec<f64> {
    let mut out = Vec::new();
    p.visit_params("", &mut |_, v, _| {
        out.extend(v.data().iter().map(|&x| Scalar::to_f64(x)))
    });
    out
}

/// Write a flat f64 vector back into the parameters (visitation order).
pub fn set_params_flat<S: Scalar>(p: &mut dyn Params<S>, flat: &[f64]) {
    let mut i = 0;
    p.visit_params("", &mut |_, v, _| {
        for x in v.data_mut() {
            *x = S::from_f64(flat[i]);
            i += 1;
        }
    });
    assert_eq!(i, flat.len(), "flat parameter vector length mismatch");
}

/// Concatenate all gradients into one f64 vector (visitation order).
pub fn grads_flat<S: Scalar>(p: &mut dyn Params<S>) -> Vec<f64> {
    let mut out = Vec::new();
    p.visit_params("", &mut |_, _, g| {
        out.extend(g.data().iter().map(|&x| Scalar::to_f64(x)))
    });
    out
}

/// Parameter names in visitation order, one entry per tensor (not per element).
pub fn param_names<S: Scalar>(p: &mut dyn Params<S>) -> Vec<String> {
    let mut out = Vec::new();
    p.visit_params("", &mut |name, _, _| out.push(name.to_string()));
    out
}

/// Join a prefix and a leaf name with a dot, skipping empty prefixes.
pub fn scoped(prefix: &str, leaf: &str) -> String {
    if prefix.is_empty() {
        leaf.to_string()
    } else {
        format!("{prefix}.{leaf}")
    }
}
