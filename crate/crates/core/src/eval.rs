//! Evaluation: Fréchet distance between Gaussian feature fits, a small
//! fixed-seed classifier whose penultimate layer provides the feature map,
//! sample generation, interpolation, latent traversal, effective-dimension
//! counts, and grayscale grid assembly for PNG emission.

use crate::error::{Error, Result};
use crate::latent::{clip_to_prior, sample_prior, ClassPrior, ClassPriors, PriorSpec};
use crate::layers::{relu_backward, relu_forward, Dense};
use crate::linalg::sym_eig;
use crate::optim::Adam;
use crate::params::{scoped, Params};
use crate::revnet::InvertibleNet;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{matmul, Tensor};

// ── Gaussian fits and the Fréchet distance ───────────────────────────────────

#[derive(Debug, Clone)]
pub struct GaussianFit {
    pub mean: Tensor<f64>,      // [d]
    pub cov: Tensor<f64>,       // [d×d]
}

/// Empirical mean and unbiased covariance of feature rows [n×d].
pub fn fit_gaussian(feats: &Tensor<f64>) -> Result<GaussianFit> {
    let [n, d] = feats.dims2()?;
    if n < 2 {
        return Err(Error::Data(format!("need ≥ 2 samples for a Gaussian fit, got {n}")));
    }
    let mean = feats.column_mean()?;
    let mut centered = feats.clone();
    for r in 0..n {
        for c in 0..d {
            centered.data_mut()[r * d + c] -= mean.data()[c];
        }
    }
    let cov = matmul(&centered.t2()?, &centered)?.scale(1.0 / (n as f64 - 1.0));
    Ok(GaussianFit { mean, cov })
}

fn psd_eig(name: &str, m: &Tensor<f64>) -> Result<(Vec<f64>, Tensor<f64>)> {
    let (vals, vecs) = sym_eig(m)?;
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-8 * max.max(1.0);
    if let Some(&min) = vals.iter().min_by(|a, b| a.partial_cmp(b).unwrap()) {
        if min < -tol {
            return Err(Error::Data(format!(
                "{name} is indefinite beyond tolerance: eigenvalue {min}"
            )));
        }
    }
    Ok((vals, vecs))
}

fn sqrt_from_eig(vals: &[f64], vecs: &Tensor<f64>) -> Result<Tensor<f64>> {
    let d = vals.len();
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    let clamp = 1e-10 * max;
    let mut scaled = vecs.clone(); // columns scaled by √λ
    for c in 0..d {
        let lam = vals[c];
        let s = if lam > clamp { lam.sqrt() } else { 0.0 };
        for r in 0..d {
            scaled.data_mut()[r * d + c] *= s;
        }
    }
    matmul(&scaled, &vecs.t2()?)
}

/// Squared Fréchet distance between two Gaussians:
/// ‖μ_a − μ_b‖² + Tr(Σ_a + Σ_b − 2·(Σ_a Σ_b)^{1/2}), with the cross term
/// computed as Tr √(A Σ_b A) for A = √Σ_a. A slightly negative total (pure
/// float noise) clamps to zero.
pub fn frechet_distance(a: &GaussianFit, b: &GaussianFit) -> Result<f64> {
    let d = a.mean.numel();
    if b.mean.numel() != d || a.cov.shape() != [d, d] || b.cov.shape() != [d, d] {
        return Err(Error::Shape("Gaussian fits have mismatched dimensions".into()));
    }
    let (va, ua) = psd_eig("covariance a", &a.cov)?;
    let (_, _) = psd_eig("covariance b", &b.cov)?;
    let root_a = sqrt_from_eig(&va, &ua)?;
    let inner = matmul(&matmul(&root_a, &b.cov)?, &root_a)?;
    // Symmetrize against float drift before decomposing.
    let inner_t = inner.t2()?;
    let inner = inner.add(&inner_t)?.scale(0.5);
    let (vals, _) = sym_eig(&inner)?;
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    let clamp = 1e-10 * max.max(0.0);
    let tr_cross: f64 = vals.iter().map(|&l| if l > clamp { l.sqrt() } else { 0.0 }).sum();
    let tr_a: f64 = (0..d).map(|i| a.cov.data()[i * d + i]).sum();
    let tr_b: f64 = (0..d).map(|i| b.cov.data()[i * d + i]).sum();
    let mean_gap: f64 = a
        .mean
        .data()
        .iter()
        .zip(b.mean.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok((mean_gap + tr_a + tr_b - 2.0 * tr_cross).max(0.0))
}

/// Fit a Gaussian to arbitrary images through a feature map.
pub fn feature_fit<S: Scalar>(
    images: &Tensor<S>,
    feature_fn: impl Fn(&Tensor<S>) -> Result<Tensor<f64>>,
) -> Result<GaussianFit> {
    fit_gaussian(&feature_fn(images)?)
}

/// The identity feature map: flatten pixels to rows, cast to f64.
pub fn identity_features<S: Scalar>(images: &Tensor<S>) -> Result<Tensor<f64>> {
    let [n, c, h, w] = images.dims4()?;
    images.to_f64().reshape(&[n, c * h * w])
}

// ── Small fixed-seed classifier (feature map + class assignment) ─────────────

/// Flattened-input MLP: d → 256 relu → 128 relu → classes. The penultimate
/// activations are the evaluation feature space.
#[derive(Debug)]
pub struct Classifier<S: Scalar> {
    pub f1: Dense<S>,
    pub f2: Dense<S>,
    pub out: Dense<S>,
}

impl<S: Scalar> Classifier<S> {
    pub fn new(rng: &mut Rng, input: usize, classes: usize) -> Self {
        Classifier {
            f1: Dense::new(rng, input, 256),
            f2: Dense::new(rng, 256, 128),
            out: Dense::new(rng, 128, classes),
        }
    }

    fn flatten(images: &Tensor<S>) -> Result<Tensor<S>> {
        let [n, c, h, w] = images.dims4()?;
        images.clone().reshape(&[n, c * h * w])
    }

    /// Penultimate-layer features [n×128].
    pub fn features(&self, images: &Tensor<S>) -> Result<Tensor<f64>> {
        let x = Self::flatten(images)?;
        let h1 = relu_forward(&self.f1.forward(&x)?);
        Ok(relu_forward(&self.f2.forward(&h1)?).to_f64())
    }

    pub fn logits(&self, images: &Tensor<S>) -> Result<Tensor<S>> {
        let x = Self::flatten(images)?;
        let h1 = relu_forward(&self.f1.forward(&x)?);
        let h2 = relu_forward(&self.f2.forward(&h1)?);
        self.out.forward(&h2)
    }

    pub fn predict(&self, images: &Tensor<S>) -> Result<Vec<usize>> {
        let logits = self.logits(images)?;
        let [n, k] = logits.dims2()?;
        Ok((0..n)
            .map(|r| {
                let row = &logits.data()[r * k..(r + 1) * k];
                let mut best = 0;
                for j in 1..k {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    pub fn accuracy(&self, images: &Tensor<S>, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(images)?;
        let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

impl<S: Scalar> Params<S> for Classifier<S> {
    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>),
    ) {
        self.f1.visit_params(&scoped(prefix, "f1"), f);
        self.f2.visit_params(&scoped(prefix, "f2"), f);
        self.out.visit_params(&scoped(prefix, "out"), f);
    }
}

/// Softmax cross-entropy over logits [n×k]; returns mean loss and dlogits.
pub fn softmax_ce<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> Result<(f64, Tensor<S>)> {
    let [n, k] = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} labels", labels.len())));
    }
    let mut dl = Tensor::zeros(&[n, k]);
    let mut loss = 0.0;
    for r in 0..n {
        let row = &logits.data()[r * k..(r + 1) * k];
        let max = row.iter().cloned().fold(S::neg_infinity(), S::max).to_f64();
        let exps: Vec<f64> = row.iter().map(|&v| (v.to_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss -= (exps[labels[r]] / z).ln();
        for j in 0..k {
            let p = exps[j] / z;
            let grad = (p - if j == labels[r] { 1.0 } else { 0.0 }) / n as f64;
            dl.data_mut()[r * k + j] = S::from_f64(grad);
        }
    }
    Ok((loss / n as f64, dl))
}

/// Train the classifier with Adam on minibatches; deterministic in (rng, data).
pub fn train_classifier<S: Scalar>(
    clf: &mut Classifier<S>,
    images: &Tensor<S>,
    labels: &[usize],
    epochs: usize,
    batch: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let [n, c, h, w] = images.dims4()?;
    let d = c * h * w;
    let flat = images.clone().reshape(&[n, d])?;
    let mut opt = Adam::new(1e-3, 0.9, 0.999);
    let mut last = 0.0;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut erng = rng.split2(0x5C1A_55, epoch as u64);
        erng.shuffle(&mut order);
        for chunk in order.chunks(batch) {
            let bs = chunk.len();
            let mut xb = Tensor::zeros(&[bs, d]);
            let mut yb = Vec::with_capacity(bs);
            for (i, &src) in chunk.iter().enumerate() {
                xb.data_mut()[i * d..(i + 1) * d].copy_from_slice(&flat.data()[src * d..(src + 1) * d]);
                yb.push(labels[src]);
            }
            clf.zero_grad();
            let h1p = clf.f1.forward_train(&xb)?;
            let h1 = relu_forward(&h1p);
            let h2p = clf.f2.forward_train(&h1)?;
            let h2 = relu_forward(&h2p);
            let logits = clf.out.forward_train(&h2)?;
            let (loss, dl) = softmax_ce(&logits, &yb)?;
            last = loss;
            let dh2 = relu_backward(&h2p, &clf.out.backward(&dl)?)?;
            let dh1 = relu_backward(&h1p, &clf.f2.backward(&dh2)?)?;
            clf.f1.backward(&dh1)?;
            opt.step(clf)?;
        }
    }
    Ok(last)
}

// ── Generation, interpolation, traversal ─────────────────────────────────────

/// Unconditional samples: z ~ prior, x = R⁻¹(z). Raw pixel values; nothing
/// is clamped (a bijection has no designed output range).
pub fn generate_samples<S: Scalar>(
    net: &InvertibleNet<S>,
    prior: &PriorSpec,
    rng: &mut Rng,
    n: usize,
) -> Result<Tensor<S>> {
    let z = sample_prior::<S>(prior, rng, n);
    net.inverse(&net.unflatten_latent(z)?)
}

/// Class-conditional samples from a learned Gaussian.
pub fn generate_class_samples<S: Scalar>(
    net: &InvertibleNet<S>,
    cp: &ClassPrior<S>,
    rng: &mut Rng,
    n: usize,
) -> Result<Tensor<S>> {
    let z = cp.sample(rng, n)?;
    net.inverse(&net.unflatten_latent(z)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpMode {
    /// Interpolate clipped encodings (stays inside the prior's support).
    Restricted,
    /// Interpolate raw encodings: endpoints decode back to the inputs.
    Full,
}

/// Linear interpolation between the encodings of two inputs [1×C×H×W],
/// decoded at `steps` points including both endpoints.
pub fn interpolate<S: Scalar>(
    net: &InvertibleNet<S>,
    prior: &PriorSpec,
    x_a: &Tensor<S>,
    x_b: &Tensor<S>,
    steps: usize,
    mode: InterpMode,
) -> Result<Tensor<S>> {
    if steps < 2 {
        return Err(Error::Config(format!("interpolation needs ≥ 2 steps, got {steps}")));
    }
    let za = net.flatten_latent(net.forward(x_a)?)?;
    let zb = net.flatten_latent(net.forward(x_b)?)?;
    let (za, zb) = match mode {
        InterpMode::Restricted => (clip_to_prior(&za, prior)?, clip_to_prior(&zb, prior)?),
        InterpMode::Full => (za, zb),
    };
    let d = za.numel();
    let mut zs = Tensor::zeros(&[steps, d]);
    for s in 0..steps {
        let t = S::from_f64(s as f64 / (steps - 1) as f64);
        for c in 0..d {
            zs.data_mut()[s * d + c] = za.data()[c] + t * (zb.data()[c] - za.data()[c]);
        }
    }
    net.inverse(&net.unflatten_latent(zs)?)
}

/// Sweep one latent dimension of a base latent row [1×d] over
/// center ± range_stds·std at `steps` evenly spaced points and decode.
pub fn traverse_about<S: Scalar>(
    net: &InvertibleNet<S>,
    base: &Tensor<S>,
    dim: usize,
    std: f64,
    range_stds: f64,
    steps: usize,
) -> Result<Tensor<S>> {
    let [_, d] = base.dims2()?;
    if dim >= d {
        return Err(Error::Config(format!("latent dim {dim} out of range [0, {d})")));
    }
    if steps < 1 {
        return Err(Error::Config("traversal needs ≥ 1 step".into()));
    }
    let center = base.data()[dim].to_f64();
    let mut zs = Tensor::zeros(&[steps, d]);
    for s in 0..steps {
        zs.data_mut()[s * d..(s + 1) * d].copy_from_slice(base.data());
        let t = if steps == 1 { 0.0 } else { -1.0 + 2.0 * s as f64 / (steps - 1) as f64 };
        zs.data_mut()[s * d + dim] = S::from_f64(center + t * range_stds * std);
    }
    net.inverse(&net.unflatten_latent(zs)?)
}

/// Traversal against a sparse prior: base is the zero latent, the swept dim
/// must be active, and the unit prior std applies (default range ±3 std).
pub fn traverse_dimension<S: Scalar>(
    net: &InvertibleNet<S>,
    prior: &PriorSpec,
    dim: usize,
    range_stds: f64,
    steps: usize,
) -> Result<Tensor<S>> {
    if !prior.is_active(dim) {
        return Err(Error::Config(format!("latent dim {dim} is not an active prior dim")));
    }
    let base = Tensor::zeros(&[1, prior.d_total]);
    traverse_about(net, &base, dim, 1.0, range_stds, steps)
}

// ── Effective dimensions ─────────────────────────────────────────────────────

/// Per-class count of latent dims whose learned std exceeds
/// threshold × (that class's largest std).
pub fn effective_dims<S: Scalar>(priors: &ClassPriors<S>, threshold: f64) -> Vec<usize> {
    priors
        .classes
        .iter()
        .map(|cp| {
            let std = cp.std();
            let max = std.data().iter().map(|&s| s.to_f64()).fold(0.0f64, f64::max);
            let cut = threshold * max;
            std.data().iter().filter(|&&s| s.to_f64() > cut).count()
        })
        .collect()
}

// ── Grid assembly for PNG output ─────────────────────────────────────────────

/// Tile images [n×C×H×W] (C = 1 or 3) into a grid with `cols` columns,
/// min-max normalized over the whole grid to 8-bit. Returns (pixel bytes in
/// row-major HWC order, width, height, channels, min, max) — the min/max pair
/// belongs in the sidecar so raw values stay recoverable.
pub fn assemble_grid<S: Scalar>(
    images: &Tensor<S>,
    cols: usize,
) -> Result<(Vec<u8>, usize, usize, usize, f64, f64)> {
    let [n, c, h, w] = images.dims4()?;
    if c != 1 && c != 3 {
        return Err(Error::Shape(format!("grids support 1 or 3 channels, got {c}")));
    }
    if cols == 0 || n == 0 {
        return Err(Error::Config("empty grid".into()));
    }
    let rows = n.div_ceil(cols);
    let (gw, gh) = (cols * w, rows * h);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in images.data() {
        let v = v.to_f64();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut px = vec![0u8; gw * gh * c];
    for i in 0..n {
        let (gr, gc) = (i / cols, i % cols);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = images.data()[((i * c + ch) * h + y) * w + x].to_f64();
                    let q = ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8;
                    let (py, pxx) = (gr * h + y, gc * w + x);
                    px[(py * gw + pxx) * c + ch] = q;
                }
            }
        }
    }
    Ok((px, gw, gh, c, lo, hi))
}
