//! Differentiable parameterized primitives — dense, convolution, spectral
//! normalization, and the ReLU family — each with a hand-written backward
//! pass that returns the input gradient and accumulates parameter gradients.

use crate::error::{Error, Result};
use crate::memprobe::ActBuf;
use crate::params::{scoped, Params};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{
    conv2d, conv2d_backward_input, conv2d_backward_weights, matmul, Tensor,
};

// ── Activations ──────────────────────────────────────────────────────────────

/// y = max(x, 0)
pub fn relu_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// dx = dy where x > 0 else 0 (subgradient 0 at the kink).
pub fn relu_backward<S: Scalar>(x: &Tensor<S>, dy: &Tensor<S>) -> Result<Tensor<S>> {
    if x.shape() != dy.shape() {
        return Err(Error::Shape(format!(
            "relu_backward: x {:?} vs dy {:?}",
            x.shape(),
            dy.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&xv, &dv)| if xv > S::zero() { dv } else { S::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Concatenated ReLU along the last axis: x → (max(x,0), max(−x,0)),
/// doubling the feature width.
pub fn crelu_forward<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let rank = x.shape().len();
    if rank == 0 {
        return Err(Error::Shape("crelu on rank-0 tensor".into()));
    }
    let c = x.shape()[rank - 1];
    let outer = x.numel() / c;
    let mut shape = x.shape().to_vec();
    shape[rank - 1] = 2 * c;
    let mut data = vec![S::zero(); outer * 2 * c];
    for o in 0..outer {
        for j in 0..c {
            let v = x.data()[o * c + j];
            if v > S::zero() {
                data[o * 2 * c + j] = v;
            } else {
                data[o * 2 * c + c + j] = -v;
            }
        }
    }
    Tensor::from_vec(&shape, data)
}

/// dx_j = dy_j·1[x_j>0] − dy_{c+j}·1[x_j<0]
pub fn crelu_backward<S: Scalar>(x: &Tensor<S>, dy: &Tensor<S>) -> Result<Tensor<S>> {
    let rank = x.shape().len();
    let c = x.shape()[rank - 1];
    let mut want = x.shape().to_vec();
    want[rank - 1] = 2 * c;
    if dy.shape() != want {
        return Err(Error::Shape(format!(
            "crelu_backward: dy {:?}, want {:?}",
            dy.shape(),
            want
        )));
    }
    let outer = x.numel() / c;
    let mut data = vec![S::zero(); x.numel()];
    for o in 0..outer {
        for j in 0..c {
            let v = x.data()[o * c + j];
            if v > S::zero() {
                data[o * c + j] = dy.data()[o * 2 * c + j];
            } else if v < S::zero() {
                data[o * c + j] = -dy.data()[o * 2 * c + c + j];
            }
        }
    }
    Tensor::from_vec(x.shape(), data)
}

// ── Dense ────────────────────────────────────────────────────────────────────

/// Affine layer y = x·Wᵀ + b for batched rows x[n×in].
#[derive(Debug)]
pub struct Dense<S: Scalar> {
    pub w: Tensor<S>, // [out×in]
    pub b: Tensor<S>, // [out]
    pub gw: Tensor<S>,
    pub gb: Tensor<S>,
    cache: Option<ActBuf<S>>,
}

impl<S: Scalar> Dense<S> {
    /// Weights ~ N(0, 1/fan_in), biases 0.
    pub fn new(rng: &mut Rng, in_dim: usize, out_dim: usize) -> Self {
        let std = (1.0 / in_dim as f64).sqrt();
        let w = Tensor::sample_normal(rng, &[out_dim, in_dim], 0.0, std)
            .expect("positive std");
        Dense {
            gw: Tensor::zeros(w.shape()),
            w,
            b: Tensor::zeros(&[out_dim]),
            gb: Tensor::zeros(&[out_dim]),
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    fn affine(&self, x: &Tensor<S>, w: &Tensor<S>) -> Result<Tensor<S>> {
        let mut y = matmul(x, &w.t2()?)?;
        let [n, out] = y.dims2()?;
        for i in 0..n {
            for j in 0..out {
                y.data_mut()[i * out + j] += self.b.data()[j];
            }
        }
        Ok(y)
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.affine(x, &self.w)
    }

    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let y = self.forward(x)?;
        self.cache = Some(ActBuf::new(x.clone()));
        Ok(y)
    }

    /// Consumes the cached input; accumulates gw/gb; returns dL/dx.
    pub fn backward(&mut self, dy: &Tensor<S>) -> Result<Tensor<S>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::Shape("Dense::backward without forward_train".into()))?
            .into_inner();
        self.accumulate_grads(&x, dy, &self.w.clone())
    }

    /// Shared with SpectralNorm: grads for y = x·Wᵀ + b at the given weight.
    fn accumulate_grads(&mut self, x: &Tensor<S>, dy: &Tensor<S>, w: &Tensor<S>) -> Result<Tensor<S>> {
        let dx = matmul(dy, w)?;
        let dw = matmul(&dy.t2()?, x)?;
        self.gw.add_scaled(&dw, S::one())?;
        let [n, out] = dy.dims2()?;
        for i in 0..n {
            for j in 0..out {
                let g = self.gb.data_mut();
                g[j] += dy.data()[i * out + j];
            }
        }
        Ok(dx)
    }
}

impl<S: Scalar> Params<S> for Dense<S> {
    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>),
    ) {
        f(&scoped(prefix, "w"), &mut self.w, &mut self.gw);
        f(&scoped(prefix, "b"), &mut self.b, &mut self.gb);
    }
}

// ── Convolution ──────────────────────────────────────────────────────────────

/// Same-padding 2-D convolution layer.
#[derive(Debug)]
pub struct Conv<S: Scalar> {
    pub w: Tensor<S>, // [O×C×k×k]
    pub b: Tensor<S>, // [O]
    pub gw: Tensor<S>,
    pub gb: Tensor<S>,
    pub pad: usize,
    cache: Option<ActBuf<S>>,
}

impl<S: Scalar> Conv<S> {
    /// Weights ~ N(0, 1/(C·k·k)), biases 0, pad (k−1)/2.
    pub fn new(rng: &mut Rng, in_ch: usize, out_ch: usize, k: usize) -> Self {
        assert!(k % 2 == 1, "kernel extent must be odd");
        let std = (1.0 / (in_ch * k * k) as f64).sqrt();
        let w = Tensor::sample_normal(rng, &[out_ch, in_ch, k, k], 0.0, std)
            .expect("positive std");
        Conv {
            gw: Tensor::zeros(w.shape()),
            w,
            b: Tensor::zeros(&[out_ch]),
            gb: Tensor::zeros(&[out_ch]),
            pad: (k - 1) / 2,
            cache: None,
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        conv2d(x, &self.w, Some(&self.b), self.pad)
    }

    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let y = self.forward(x)?;
        self.cache = Some(ActBuf::new(x.clone()));
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<S>) -> Result<Tensor<S>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::Shape("Conv::backward without forward_train".into()))?
            .into_inner();
        let [_, _, h, wd] = x.dims4()?;
        let [_, _, kh, kw] = self.w.dims4()?;
        let dx = conv2d_backward_input(dy, &self.w, self.pad, (h, wd))?;
        let (dw, db) = conv2d_backward_weights(&x, dy, self.pad, (kh, kw))?;
        self.gw.add_scaled(&dw, S::one())?;
        self.gb.add_scaled(&db, S::one())?;
        Ok(dx)
    }
}

impl<S: Scalar> Params<S> for Conv<S> {
    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>),
    ) {
        f(&scoped(prefix, "w"), &mut self.w, &mut self.gw);
        f(&scoped(prefix, "b"), &mut self.b, &mut self.gb);
    }
}

// ── Spectral normalization ───────────────────────────────────────────────────

fn matvec<S: Scalar>(w: &Tensor<S>, x: &[S]) -> Vec<S> {
    let [out, inp] = w.dims2().expect("matvec wants rank 2");
    let mut y = vec![S::zero(); out];
    for i in 0..out {
        let row = &w.data()[i * inp..(i + 1) * inp];
        let mut acc = S::zero();
        for (a, b) in row.iter().zip(x) {
            acc += *a * *b;
        }
        y[i] = acc;
    }
    y
}

fn matvec_t<S: Scalar>(w: &Tensor<S>, y: &[S]) -> Vec<S> {
    let [out, inp] = w.dims2().expect("matvec_t wants rank 2");
    let mut x = vec![S::zero(); inp];
    for i in 0..out {
        let row = &w.data()[i * inp..(i + 1) * inp];
        let yi = y[i];
        for (xj, &wj) in x.iter_mut().zip(row) {
            *xj += wj * yi;
        }
    }
    x
}

fn normalize_in_place<S: Scalar>(v: &mut [S]) -> Result<()> {
    let mut norm = S::zero();
    for &x in v.iter() {
        norm += x * x;
    }
    let norm = norm.sqrt();
    if !(norm > S::zero()) {
        return Err(Error::NonFinite(
            "power iteration hit a zero vector — spectral norm undefined (zero weight matrix?)"
                .into(),
        ));
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

/// Dense layer whose effective weight is W/σ̂, with σ̂ estimated by power
/// iteration (default one update per forward pass). `u`, `v` are persistent
/// buffers, not parameters; the backward pass differentiates through W/σ̂
/// holding u, v constant.
#[derive(Debug)]
pub struct SpectralNorm<S: Scalar> {
    pub dense: Dense<S>,
    pub u: Tensor<S>, // [out], unit norm after every forward
    pub v: Tensor<S>, // [in]
    pub iterations: usize,
    cache: Option<(ActBuf<S>, S)>,
}

impl<S: Scalar> SpectralNorm<S> {
    pub fn new(rng: &mut Rng, dense: Dense<S>) -> Self {
        let out = dense.out_dim();
        let mut u = Tensor::sample_normal(rng, &[out], 0.0, 1.0).expect("positive std");
        normalize_in_place(u.data_mut()).expect("nonzero init vector");
        let v = Tensor::zeros(&[dense.in_dim()]);
        SpectralNorm { dense, u, v, iterations: 1, cache: None }
    }

    /// v ← normalize(Wᵀu); u ← normalize(Wv), `k` times.
    pub fn power_iterate(&mut self, k: usize) -> Result<()> {
        for _ in 0..k {
            let mut v = matvec_t(&self.dense.w, self.u.data());
            normalize_in_place(&mut v)?;
            let mut u = matvec(&self.dense.w, &v);
            normalize_in_place(&mut u)?;
            self.v = Tensor::from_vec(&[v.len()], v)?;
            self.u = Tensor::from_vec(&[u.len()], u)?;
        }
        Ok(())
    }

    /// σ̂ = uᵀWv with the current u, v.
    pub fn sigma_hat(&self) -> S {
        let wv = matvec(&self.dense.w, self.v.data());
        let mut acc = S::zero();
        for (&ui, &wvi) in self.u.data().iter().zip(&wv) {
            acc += ui * wvi;
        }
        acc
    }

    /// Effective weight W/σ̂ (requires at least one prior power iteration).
    pub fn effective_weight(&self) -> Result<Tensor<S>> {
        let sig = self.sigma_hat();
        if !(sig.abs() > S::zero()) || !sig.is_finite() {
            return Err(Error::NonFinite(format!(
                "spectral norm estimate σ̂ = {sig} is unusable (zero weight matrix?)"
            )));
        }
        Ok(self.dense.w.scale(S::one() / sig))
    }

    fn forward_inner(&mut self, x: &Tensor<S>, train: bool) -> Result<Tensor<S>> {
        self.power_iterate(self.iterations)?;
        let w_eff = self.effective_weight()?;
        let y = self.dense.affine(x, &w_eff)?;
        if train {
            self.cache = Some((ActBuf::new(x.clone()), self.sigma_hat()));
        }
        Ok(y)
    }

    /// Updates u/v (`iterations` power steps) even outside training.
    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.forward_inner(x, false)
    }

    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.forward_inner(x, true)
    }

    /// Gradient through W/σ̂ with u, v frozen:
    /// dW = (dW_eff − ⟨dW_eff, W_eff⟩·u·vᵀ) / σ̂.
    pub fn backward(&mut self, dy: &Tensor<S>) -> Result<Tensor<S>> {
        let (x, sig) = self
            .cache
            .take()
            .ok_or_else(|| Error::Shape("SpectralNorm::backward without forward_train".into()))?;
        let x = x.into_inner();
        let w_eff = self.dense.w.scale(S::one() / sig);
        let dx = matmul(dy, &w_eff)?;
        let dw_eff = matmul(&dy.t2()?, &x)?;
        // ⟨dW_eff, W_eff⟩
        let mut inner = S::zero();
        for (&g, &w) in dw_eff.data().iter().zip(w_eff.data()) {
            inner += g * w;
        }
        // dW accumulation
        let out = self.dense.out_dim();
        let inp = self.dense.in_dim();
        for i in 0..out {
            for j in 0..inp {
                let correction = inner * self.u.data()[i] * self.v.data()[j];
                let g = (dw_eff.data()[i * inp + j] - correction) / sig;
                self.dense.gw.data_mut()[i * inp + j] += g;
            }
        }
        let [n, outd] = dy.dims2()?;
        for i in 0..n {
            for j in 0..outd {
                self.dense.gb.data_mut()[j] += dy.data()[i * outd + j];
            }
        }
        Ok(dx)
    }
}

impl<S: Scalar> Params<S> for SpectralNorm<S> {
    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>),
    ) {
        self.dense.visit_params(prefix, f);
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        f(&scoped(prefix, "u"), &mut self.u);
        f(&scoped(prefix, "v"), &mut self.v);
    }
}
