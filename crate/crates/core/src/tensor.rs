//! Dense row-major tensors and the primitive kernels built on them.
//!
//! Images follow the channels-first N×C×H×W convention. Every kernel has a
//! fixed summation order so results are bit-identical run to run; nothing
//! here is threaded.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    // ── Construction and access ─────────────────────────────────────────────

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![S::zero(); n] }
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// Gaussian-filled tensor. `std` must be ≥ 0; `std == 0` yields `mean` exactly.
    pub fn sample_normal(rng: &mut Rng, shape: &[usize], mean: f64, std: f64) -> Result<Self> {
        if std < 0.0 {
            return Err(Error::Shape(format!("negative std {std} in sample_normal")));
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(S::from_f64(mean + std * rng.normal()));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Error if any element is NaN or infinite. `what` names the tensor in
    /// the message so divergence reports point at the culprit.
    pub fn validate_finite(&self, what: &str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{what}[{i}] = {v}")));
            }
        }
        Ok(())
    }

    // ── Shape manipulation ──────────────────────────────────────────────────

    /// Same data, new shape. Bit-exact: the buffer is moved, not copied.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) to {:?}",
                self.shape,
                self.data.len(),
                shape
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data: self.data })
    }

    /// Concatenate along `axis`. All other extents must agree.
    pub fn concat(axis: usize, parts: &[&Tensor<S>]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
        let rank = first.shape.len();
        if axis >= rank {
            return Err(Error::Shape(format!("concat axis {axis} out of rank {rank}")));
        }
        let mut axis_total = 0;
        for p in parts {
            if p.shape.len() != rank {
                return Err(Error::Shape("concat rank mismatch".into()));
            }
            for (d, (&a, &b)) in p.shape.iter().zip(&first.shape).enumerate() {
                if d != axis && a != b {
                    return Err(Error::Shape(format!(
                        "concat extent mismatch at dim {d}: {a} vs {b}"
                    )));
                }
            }
            axis_total += p.shape[axis];
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut shape = first.shape.clone();
        shape[axis] = axis_total;
        let mut data = Vec::with_capacity(outer * axis_total * inner);
        for o in 0..outer {
            for p in parts {
                let block = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * block..(o + 1) * block]);
            }
        }
        Ok(Tensor { shape, data })
    }

    /// Split along `axis` into pieces of the given extents (must sum to the full extent).
    pub fn split(&self, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor<S>>> {
        let rank = self.shape.len();
        if axis >= rank {
            return Err(Error::Shape(format!("split axis {axis} out of rank {rank}")));
        }
        if sizes.iter().sum::<usize>() != self.shape[axis] {
            return Err(Error::Shape(format!(
                "split sizes {:?} do not sum to extent {}",
                sizes, self.shape[axis]
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let full_block = self.shape[axis] * inner;
        let mut out = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for &sz in sizes {
            let mut shape = self.shape.clone();
            shape[axis] = sz;
            let mut data = Vec::with_capacity(outer * sz * inner);
            for o in 0..outer {
                let start = o * full_block + offset * inner;
                data.extend_from_slice(&self.data[start..start + sz * inner]);
            }
            out.push(Tensor { shape, data });
            offset += sz;
        }
        Ok(out)
    }

    /// Transpose of a 2-D tensor (explicit copy).
    pub fn t2(&self) -> Result<Tensor<S>> {
        let [m, n] = self.dims2()?;
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(out)
    }

    pub fn dims2(&self) -> Result<[usize; 2]> {
        match self.shape[..] {
            [a, b] => Ok([a, b]),
            _ => Err(Error::Shape(format!("expected rank 2, got {:?}", self.shape))),
        }
    }

    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.shape[..] {
            [a, b, c, d] => Ok([a, b, c, d]),
            _ => Err(Error::Shape(format!("expected rank 4, got {:?}", self.shape))),
        }
    }

    // ── Elementwise and reductions ──────────────────────────────────────────

    fn zip_check(&self, other: &Tensor<S>, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{op}: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_check(other, "add")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn sub(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_check(other, "sub")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_check(other, "mul")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    /// self += alpha · other, in place.
    pub fn add_scaled(&mut self, other: &Tensor<S>, alpha: S) -> Result<()> {
        self.zip_check(other, "add_scaled")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
        Ok(())
    }

    pub fn scale(&self, alpha: S) -> Tensor<S> {
        let data = self.data.iter().map(|&a| a * alpha).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn add_scalar(&self, alpha: S) -> Tensor<S> {
        let data = self.data.iter().map(|&a| a + alpha).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        let data = self.data.iter().map(|&a| f(a)).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        let data = self.data.iter().map(|&a| a.to_f64()).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn sum(&self) -> S {
        let mut acc = S::zero();
        for &v in &self.data {
            acc = acc + v;
        }
        acc
    }

    pub fn mean(&self) -> S {
        if self.data.is_empty() {
            return S::zero();
        }
        self.sum() / S::from_f64(self.data.len() as f64)
    }

    pub fn l2_norm(&self) -> S {
        let mut acc = S::zero();
        for &v in &self.data {
            acc = acc + v * v;
        }
        acc.sqrt()
    }

    /// Column-wise sample standard deviation of a 2-D [n×d] tensor
    /// (two-pass, denominator n−1; a single row gives all zeros).
    pub fn column_std(&self) -> Result<Tensor<S>> {
        let [n, d] = self.dims2()?;
        let mut means = vec![S::zero(); d];
        for i in 0..n {
            for j in 0..d {
                means[j] = means[j] + self.data[i * d + j];
            }
        }
        let nf = S::from_f64(n as f64);
        for m in means.iter_mut() {
            *m = *m / nf;
        }
        let mut out = vec![S::zero(); d];
        if n > 1 {
            for i in 0..n {
                for j in 0..d {
                    let c = self.data[i * d + j] - means[j];
                    out[j] = out[j] + c * c;
                }
            }
            let denom = S::from_f64((n - 1) as f64);
            for v in out.iter_mut() {
                *v = (*v / denom).sqrt();
            }
        }
        Tensor::from_vec(&[d], out)
    }

    /// Column-wise mean of a 2-D [n×d] tensor.
    pub fn column_mean(&self) -> Result<Tensor<S>> {
        let [n, d] = self.dims2()?;
        if n == 0 {
            return Err(Error::Shape("column_mean of empty tensor".into()));
        }
        let mut means = vec![S::zero(); d];
        for i in 0..n {
            for j in 0..d {
                means[j] = means[j] + self.data[i * d + j];
            }
        }
        let nf = S::from_f64(n as f64);
        for m in means.iter_mut() {
            *m = *m / nf;
        }
        Tensor::from_vec(&[d], means)
    }
}

// ── Matrix multiply ──────────────────────────────────────────────────────────

/// Standard matrix product, accumulation over the inner index in ascending
/// order for every output element.
pub fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let [m, k] = a.dims2()?;
    let [k2, n] = b.dims2()?;
    if k != k2 {
        return Err(Error::Shape(format!("matmul inner dims {k} vs {k2}")));
    }
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for l in 0..k {
            let av = a.data[i * k + l];
            let b_row = &b.data[l * n..(l + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
    Ok(out)
}

// ── 2-D convolution (cross-correlation convention) ──────────────────────────

fn conv_out_extent(input: usize, k: usize, pad: usize) -> Result<usize> {
    (input + 2 * pad).checked_sub(k - 1).filter(|&v| v > 0).ok_or_else(|| {
        Error::Shape(format!("kernel {k} with pad {pad} exceeds input extent {input}"))
    })
}

/// Forward convolution: x[N×C×H×W] ⋆ w[O×C×kh×kw] (+ bias[O]) with symmetric
/// zero padding. `pad = (k−1)/2` keeps the spatial size ("same" convolution).
pub fn conv2d<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    pad: usize,
) -> Result<Tensor<S>> {
    let [n, c, h, wd] = x.dims4()?;
    let [o, c2, kh, kw] = w.dims4()?;
    if c != c2 {
        return Err(Error::Shape(format!("conv2d channels {c} vs kernel {c2}")));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Shape(format!("conv2d kernel extents must be odd, got {kh}×{kw}")));
    }
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(Error::Shape(format!("conv2d bias shape {:?}, want [{o}]", b.shape())));
        }
    }
    let oh = conv_out_extent(h, kh, pad)?;
    let ow = conv_out_extent(wd, kw, pad)?;
    let mut out = Tensor::zeros(&[n, o, oh, ow]);
    for ni in 0..n {
        for oi in 0..o {
            let out_plane = &mut out.data[(ni * o + oi) * oh * ow..(ni * o + oi + 1) * oh * ow];
            if let Some(b) = bias {
                let bv = b.data[oi];
                for v in out_plane.iter_mut() {
                    *v = bv;
                }
            }
            for ci in 0..c {
                let x_plane = &x.data[(ni * c + ci) * h * wd..(ni * c + ci + 1) * h * wd];
                for ki in 0..kh {
                    for kj in 0..kw {
                        let wv = w.data[((oi * c + ci) * kh + ki) * kw + kj];
                        // ih = row + ki − pad must land in [0, h)
                        let row_lo = pad.saturating_sub(ki);
                        let row_hi = (h + pad - ki).min(oh);
                        let col_lo = pad.saturating_sub(kj);
                        let col_hi = (wd + pad - kj).min(ow);
                        if col_lo >= col_hi {
                            continue;
                        }
                        for r in row_lo..row_hi {
                            let ih = r + ki - pad;
                            let src = &x_plane[ih * wd + col_lo + kj - pad..ih * wd + col_hi + kj - pad];
                            let dst = &mut out_plane[r * ow + col_lo..r * ow + col_hi];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d = *d + wv * s;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of conv2d w.r.t. its input.
pub fn conv2d_backward_input<S: Scalar>(
    dy: &Tensor<S>,
    w: &Tensor<S>,
    pad: usize,
    input_hw: (usize, usize),
) -> Result<Tensor<S>> {
    let [n, o, oh, ow] = dy.dims4()?;
    let [o2, c, kh, kw] = w.dims4()?;
    if o != o2 {
        return Err(Error::Shape(format!("conv2d_backward_input out-channels {o} vs {o2}")));
    }
    let (h, wd) = input_hw;
    let mut dx = Tensor::zeros(&[n, c, h, wd]);
    for ni in 0..n {
        for oi in 0..o {
            let dy_plane = &dy.data[(ni * o + oi) * oh * ow..(ni * o + oi + 1) * oh * ow];
            for ci in 0..c {
                let dx_plane = &mut dx.data[(ni * c + ci) * h * wd..(ni * c + ci + 1) * h * wd];
                for ki in 0..kh {
                    for kj in 0..kw {
                        let wv = w.data[((oi * c + ci) * kh + ki) * kw + kj];
                        let row_lo = pad.saturating_sub(ki);
                        let row_hi = (h + pad - ki).min(oh);
                        let col_lo = pad.saturating_sub(kj);
                        let col_hi = (wd + pad - kj).min(ow);
                        if col_lo >= col_hi {
                            continue;
                        }
                        for r in row_lo..row_hi {
                            let ih = r + ki - pad;
                            let src = &dy_plane[r * ow + col_lo..r * ow + col_hi];
                            let dst = &mut dx_plane
                                [ih * wd + col_lo + kj - pad..ih * wd + col_hi + kj - pad];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d = *d + wv * s;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Gradients of conv2d w.r.t. weights and bias.
pub fn conv2d_backward_weights<S: Scalar>(
    x: &Tensor<S>,
    dy: &Tensor<S>,
    pad: usize,
    kernel_hw: (usize, usize),
) -> Result<(Tensor<S>, Tensor<S>)> {
    let [n, c, h, wd] = x.dims4()?;
    let [n2, o, oh, ow] = dy.dims4()?;
    if n != n2 {
        return Err(Error::Shape(format!("conv2d_backward_weights batch {n} vs {n2}")));
    }
    let (kh, kw) = kernel_hw;
    let mut dw = Tensor::zeros(&[o, c, kh, kw]);
    let mut db = Tensor::zeros(&[o]);
    for ni in 0..n {
        for oi in 0..o {
            let dy_plane = &dy.data[(ni * o + oi) * oh * ow..(ni * o + oi + 1) * ow * oh];
            let mut bacc = S::zero();
            for &v in dy_plane {
                bacc = bacc + v;
            }
            db.data[oi] = db.data[oi] + bacc;
            for ci in 0..c {
                let x_plane = &x.data[(ni * c + ci) * h * wd..(ni * c + ci + 1) * h * wd];
                for ki in 0..kh {
                    for kj in 0..kw {
                        let row_lo = pad.saturating_sub(ki);
                        let row_hi = (h + pad - ki).min(oh);
                        let col_lo = pad.saturating_sub(kj);
                        let col_hi = (wd + pad - kj).min(ow);
                        if col_lo >= col_hi {
                            continue;
                        }
                        let mut acc = S::zero();
                        for r in row_lo..row_hi {
                            let ih = r + ki - pad;
                            let xs = &x_plane[ih * wd + col_lo + kj - pad..ih * wd + col_hi + kj - pad];
                            let ds = &dy_plane[r * ow + col_lo..r * ow + col_hi];
                            for (&xv, &dv) in xs.iter().zip(ds) {
                                acc = acc + xv * dv;
                            }
                        }
                        let idx = ((oi * c + ci) * kh + ki) * kw + kj;
                        dw.data[idx] = dw.data[idx] + acc;
                    }
                }
            }
        }
    }
    Ok((dw, db))
}
