//! Latent-space machinery: the sparse prior with its clipping operator,
//! active-dimension selection, and learnable class-conditional Gaussians.

use crate::error::{Error, Result};
use crate::params::Params;
use crate::revnet::InvertibleNet;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

// ── Prior over the full latent vector ────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorFamily {
    StandardNormal,
    /// Uniform on (−2, 2).
    Uniform,
}

/// A prior that is zero outside `active_dims` and draws the active
/// coordinates from `family`; encodings are clamped to ±`clip_bound`
/// on active dims and zeroed elsewhere.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    pub d_total: usize,
    pub active_dims: Vec<usize>,
    pub family: PriorFamily,
    pub clip_bound: f64,
    active_mask: Vec<bool>,
}

impl PriorSpec {
    pub fn new(
        d_total: usize,
        mut active_dims: Vec<usize>,
        family: PriorFamily,
        clip_bound: f64,
    ) -> Result<Self> {
        // +∞ is legal (clipping reduces to the inactive-dim projection).
        if !(clip_bound > 0.0) {
            return Err(Error::Config(format!("clip bound must be positive, got {clip_bound}")));
        }
        active_dims.sort_unstable();
        let mut mask = vec![false; d_total];
        for &i in &active_dims {
            if i >= d_total {
                return Err(Error::Config(format!("active dim {i} out of range [0, {d_total})")));
            }
            if mask[i] {
                return Err(Error::Config(format!("active dim {i} listed twice")));
            }
            mask[i] = true;
        }
        Ok(PriorSpec { d_total, active_dims, family, clip_bound, active_mask: mask })
    }

    pub fn k(&self) -> usize {
        self.active_dims.len()
    }

    pub fn is_active(&self, dim: usize) -> bool {
        self.active_mask[dim]
    }

    /// Gather the active coordinates of each row: [n×d_total] → [n×k].
    pub fn gather_active<S: Scalar>(&self, z: &Tensor<S>) -> Result<Tensor<S>> {
        let [n, d] = z.dims2()?;
        if d != self.d_total {
            return Err(Error::Shape(format!("expected width {}, got {d}", self.d_total)));
        }
        let k = self.k();
        let mut out = Tensor::zeros(&[n, k]);
        for r in 0..n {
            for (c, &dim) in self.active_dims.iter().enumerate() {
                out.data_mut()[r * k + c] = z.data()[r * d + dim];
            }
        }
        Ok(out)
    }

    /// Scatter per-active-coordinate values back to full width, zero elsewhere.
    pub fn scatter_active<S: Scalar>(&self, za: &Tensor<S>) -> Result<Tensor<S>> {
        let [n, k] = za.dims2()?;
        if k != self.k() {
            return Err(Error::Shape(format!("expected width {}, got {k}", self.k())));
        }
        let d = self.d_total;
        let mut out = Tensor::zeros(&[n, d]);
        for r in 0..n {
            for (c, &dim) in self.active_dims.iter().enumerate() {
                out.data_mut()[r * d + dim] = za.data()[r * k + c];
            }
        }
        Ok(out)
    }
}

/// Project rows of `z` onto the prior's support. Returns the projection and
/// the 0/1 pass-through mask of the projection's subgradient: identity
/// strictly inside the bounds on active dims, zero on inactive dims and at or
/// beyond ±bound.
pub fn clip_with_mask<S: Scalar>(
    z: &Tensor<S>,
    prior: &PriorSpec,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let [n, d] = z.dims2()?;
    if d != prior.d_total {
        return Err(Error::Shape(format!("latent width {d}, prior wants {}", prior.d_total)));
    }
    let bound = S::from_f64(prior.clip_bound);
    let mut out = Tensor::zeros(&[n, d]);
    let mut mask = Tensor::zeros(&[n, d]);
    for r in 0..n {
        for c in 0..d {
            if !prior.is_active(c) {
                continue;
            }
            let v = z.data()[r * d + c];
            let idx = r * d + c;
            if v >= bound {
                out.data_mut()[idx] = bound;
            } else if v <= -bound {
                out.data_mut()[idx] = -bound;
            } else {
                out.data_mut()[idx] = v;
                mask.data_mut()[idx] = S::one();
            }
        }
    }
    Ok((out, mask))
}

pub fn clip_to_prior<S: Scalar>(z: &Tensor<S>, prior: &PriorSpec) -> Result<Tensor<S>> {
    clip_with_mask(z, prior).map(|(out, _)| out)
}

/// Draw n latent rows from the prior: active dims from the family, the rest
/// exactly zero. Draws are clamped to ±clip_bound so the prior's support
/// coincides with the support of clipped encodings — otherwise the two
/// distributions would be separable by their tails alone.
pub fn sample_prior<S: Scalar>(prior: &PriorSpec, rng: &mut Rng, n: usize) -> Tensor<S> {
    let d = prior.d_total;
    let b = prior.clip_bound;
    let mut out = Tensor::zeros(&[n, d]);
    for r in 0..n {
        for &c in &prior.active_dims {
            let v = match prior.family {
                PriorFamily::StandardNormal => rng.normal(),
                PriorFamily::Uniform => 4.0 * rng.uniform() - 2.0,
            };
            out.data_mut()[r * d + c] = S::from_f64(v.clamp(-b, b));
        }
    }
    out
}

// ── Active-dimension selection ───────────────────────────────────────────────

/// Indices (ascending) of the k largest per-column standard deviations;
/// ties break toward the lower index.
pub fn select_top_std<S: Scalar>(encodings: &Tensor<S>, k: usize) -> Result<Vec<usize>> {
    let [n, d] = encodings.dims2()?;
    if k > d {
        return Err(Error::Config(format!("cannot select {k} of {d} dims")));
    }
    if n < 2 {
        return Err(Error::Data(format!("need ≥ 2 rows to estimate stds, got {n}")));
    }
    let stds = encodings.column_std()?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (stds.data()[a].to_f64(), stds.data()[b].to_f64());
        sb.partial_cmp(&sa).expect("finite stds").then(a.cmp(&b))
    });
    let mut chosen: Vec<usize> = order[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Encode a sample through the (untrained) net and pick the k most-variable
/// latent dimensions.
pub fn select_active_dims<S: Scalar>(
    net: &InvertibleNet<S>,
    x: &Tensor<S>,
    k: usize,
) -> Result<Vec<usize>> {
    let z = net.flatten_latent(net.forward(x)?)?;
    select_top_std(&z, k)
}

// ── Class-conditional Gaussians ──────────────────────────────────────────────

fn softplus<S: Scalar>(x: S) -> S {
    // max(x, 0) + ln(1 + e^{−|x|}); exact 0 at x = −∞.
    let zero = S::zero();
    if x == S::neg_infinity() {
        return zero;
    }
    x.max(zero) + x.abs().neg().exp().ln_1p()
}

fn sigmoid<S: Scalar>(x: S) -> S {
    if x == S::neg_infinity() {
        return S::zero();
    }
    let one = S::one();
    if x >= S::zero() {
        one / (one + x.neg().exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

/// ln(e^s − 1): the raw value whose softplus is s. s = 0 maps to −∞, which
/// softplus and its derivative both send to exactly 0, so a collapsed
/// dimension stays collapsed.
fn inv_softplus<S: Scalar>(s: S) -> S {
    if s.to_f64() > 30.0 {
        s
    } else {
        s.exp_m1().ln()
    }
}

/// One diagonal Gaussian N(mean, diag(std²)) with std stored as a raw
/// pre-softplus parameter so positivity needs no constraints.
#[derive(Debug)]
pub struct ClassPrior<S: Scalar> {
    pub mean: Tensor<S>,    // [d]
    pub raw_std: Tensor<S>, // [d]
    gmean: Tensor<S>,
    graw: Tensor<S>,
}

impl<S: Scalar> ClassPrior<S> {
    pub fn from_moments(mean: Tensor<S>, std: &Tensor<S>) -> Result<Self> {
        if mean.shape() != std.shape() || mean.shape().len() != 1 {
            return Err(Error::Shape("class prior wants matching 1-D mean/std".into()));
        }
        if std.data().iter().any(|&s| s < S::zero() || s != s) {
            return Err(Error::Data("class prior stds must be ≥ 0".into()));
        }
        let raw = std.map(|s| inv_softplus(s));
        let d = mean.numel();
        Ok(ClassPrior { mean, raw_std: raw, gmean: Tensor::zeros(&[d]), graw: Tensor::zeros(&[d]) })
    }

    pub fn dim(&self) -> usize {
        self.mean.numel()
    }

    pub fn std(&self) -> Tensor<S> {
        self.raw_std.map(|r| softplus(r))
    }

    /// z = mean + softplus(raw_std) ⊙ g for given standard-normal noise g [n×d].
    pub fn sample_with_noise(&self, g: &Tensor<S>) -> Result<Tensor<S>> {
        let [n, d] = g.dims2()?;
        if d != self.dim() {
            return Err(Error::Shape(format!("noise width {d}, prior dim {}", self.dim())));
        }
        let std = self.std();
        let mut out = Tensor::zeros(&[n, d]);
        for r in 0..n {
            for c in 0..d {
                out.data_mut()[r * d + c] =
                    self.mean.data()[c] + std.data()[c] * g.data()[r * d + c];
            }
        }
        Ok(out)
    }

    pub fn sample(&self, rng: &mut Rng, n: usize) -> Result<Tensor<S>> {
        let g = Tensor::sample_normal(rng, &[n, self.dim()], 0.0, 1.0)?;
        self.sample_with_noise(&g)
    }

    /// Accumulate dL/dmean and dL/draw_std given the noise used to sample and
    /// dL/dz. Reparameterization: dz/dmean = 1, dz/draw = g·σ'(raw).
    pub fn backward_sample(&mut self, g: &Tensor<S>, dz: &Tensor<S>) -> Result<()> {
        let [n, d] = g.dims2()?;
        if dz.shape() != g.shape() || d != self.dim() {
            return Err(Error::Shape("noise/grad shape mismatch".into()));
        }
        for c in 0..d {
            let gate = sigmoid(self.raw_std.data()[c]);
            let mut am = S::zero();
            let mut ar = S::zero();
            for r in 0..n {
                let dv = dz.data()[r * d + c];
                am += dv;
                ar += dv * g.data()[r * d + c];
            }
            self.gmean.data_mut()[c] += am;
            self.graw.data_mut()[c] += ar * gate;
        }
        Ok(())
    }
}

impl<S: Scalar> Params<S> for ClassPrior<S> {
    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>),
    ) {
        f(&crate::params::scoped(prefix, "mean"), &mut self.mean, &mut self.gmean);
        f(&crate::params::scoped(prefix, "raw_std"), &mut self.raw_std, &mut self.graw);
    }
}

/// The per-class priors of a labeled dataset, ordered by class index.
#[derive(Debug)]
pub struct ClassPriors<S: Scalar> {
    pub classes: Vec<ClassPrior<S>>,
}

impl<S: Scalar> Params<S> for ClassPriors<S> {
    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>),
    ) {
        for (c, cp) in self.classes.iter_mut().enumerate() {
            cp.visit_params(&crate::params::scoped(prefix, &format!("class{c:02}")), f);
        }
    }
}

/// Per-class mean/std (unbiased, n−1) of the rows of `z` [n×d] grouped by label.
pub fn moments_by_class<S: Scalar>(
    z: &Tensor<S>,
    labels: &[usize],
    num_classes: usize,
) -> Result<Vec<(Tensor<S>, Tensor<S>)>> {
    let [n, d] = z.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} labels", labels.len())));
    }
    let mut out = Vec::with_capacity(num_classes);
    for class in 0..num_classes {
        let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if rows.len() < 2 {
            return Err(Error::Data(format!(
                "class {class} has {} samples; need ≥ 2 to estimate a std",
                rows.len()
            )));
        }
        let mut sub = Tensor::zeros(&[rows.len(), d]);
        for (ri, &src) in rows.iter().enumerate() {
            sub.data_mut()[ri * d..(ri + 1) * d]
                .copy_from_slice(&z.data()[src * d..(src + 1) * d]);
        }
        out.push((sub.column_mean()?, sub.column_std()?));
    }
    Ok(out)
}

/// Initialize one Gaussian per class from the encodings of an untrained net.
pub fn init_class_priors<S: Scalar>(
    net: &InvertibleNet<S>,
    x: &Tensor<S>,
    labels: &[usize],
    num_classes: usize,
) -> Result<ClassPriors<S>> {
    let z = net.flatten_latent(net.forward(x)?)?;
    let moments = moments_by_class(&z, labels, num_classes)?;
    let mut classes = Vec::with_capacity(num_classes);
    for (mean, std) in moments {
        classes.push(ClassPrior::from_moments(mean, &std)?);
    }
    Ok(ClassPriors { classes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_prior() -> PriorSpec {
        PriorSpec::new(4, vec![1, 3], PriorFamily::StandardNormal, 2.0).unwrap()
    }

    #[test]
    fn prior_spec_validates_indices() {
        assert!(PriorSpec::new(4, vec![1, 4], PriorFamily::StandardNormal, 2.0).is_err());
        assert!(PriorSpec::new(4, vec![1, 1], PriorFamily::StandardNormal, 2.0).is_err());
        assert!(PriorSpec::new(4, vec![0], PriorFamily::StandardNormal, 0.0).is_err());
    }

    #[test]
    fn clip_hand_case_and_mask() {
        let prior = toy_prior();
        let z = Tensor::from_vec(&[1, 4], vec![5.0, 1.5, -7.0, -3.0]).unwrap();
        let (c, m) = clip_with_mask(&z, &prior).unwrap();
        assert_eq!(c.data(), &[0.0, 1.5, 0.0, -2.0]);
        assert_eq!(m.data(), &[0.0, 1.0, 0.0, 0.0], "only the in-bounds active dim passes gradient");
    }

    #[test]
    fn clip_leaves_support_untouched() {
        let prior = toy_prior();
        let z = Tensor::from_vec(&[1, 4], vec![0.0, -1.25, 0.0, 1.99]).unwrap();
        assert_eq!(clip_to_prior(&z, &prior).unwrap(), z);
    }

    mod clip_properties {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clip_is_idempotent_and_nonexpansive(
                a in proptest::collection::vec(-10.0f64..10.0, 8),
                b in proptest::collection::vec(-10.0f64..10.0, 8),
            ) {
                let prior =
                    PriorSpec::new(8, vec![0, 2, 5], PriorFamily::StandardNormal, 2.0).unwrap();
                let za = Tensor::from_vec(&[1, 8], a.clone()).unwrap();
                let zb = Tensor::from_vec(&[1, 8], b).unwrap();
                let ca = clip_to_prior(&za, &prior).unwrap();
                let cb = clip_to_prior(&zb, &prior).unwrap();
                prop_assert_eq!(&clip_to_prior(&ca, &prior).unwrap(), &ca, "idempotence");
                for i in 0..8 {
                    let lhs = (ca.data()[i] - cb.data()[i]).abs();
                    let rhs = (za.data()[i] - zb.data()[i]).abs();
                    prop_assert!(lhs <= rhs + 1e-15, "1-Lipschitz per coordinate");
                }
            }
        }
    }

    #[test]
    fn prior_samples_live_in_the_clip_fixed_point_set() {
        let mut rng = Rng::new(61);
        let prior = toy_prior();
        let z: Tensor<f64> = sample_prior(&prior, &mut rng, 50);
        for r in 0..50 {
            assert_eq!(z.data()[r * 4], 0.0, "inactive dim 0 must be exactly zero");
            assert_eq!(z.data()[r * 4 + 2], 0.0, "inactive dim 2 must be exactly zero");
        }
        assert_eq!(clip_to_prior(&z, &prior).unwrap(), z, "samples are clip fixed points");

        let uni = PriorSpec::new(4, vec![1, 3], PriorFamily::Uniform, 2.0).unwrap();
        let zu: Tensor<f64> = sample_prior(&uni, &mut rng, 200);
        assert!(zu.data().iter().all(|&v| (-2.0..=2.0).contains(&v)));
    }

    #[test]
    fn normal_prior_std_converges() {
        let mut rng = Rng::new(62);
        let prior = PriorSpec::new(3, vec![0, 2], PriorFamily::StandardNormal, 2.0).unwrap();
        let z: Tensor<f64> = sample_prior(&prior, &mut rng, 100_000);
        let stds = z.column_std().unwrap();
        // Second moment of a standard normal clamped to ±2:
        // E X² = 2Φ(2) − 1 − 4φ(2) + 8(1 − Φ(2)) ≈ 0.920537 → std ≈ 0.959446.
        let want = 0.959446f64;
        assert!((stds.data()[0] - want).abs() < 0.02 * want, "active-dim std within 2%");
        assert_eq!(stds.data()[1], 0.0, "inactive dim has zero std");
        assert!((stds.data()[2] - want).abs() < 0.02 * want);
    }

    #[test]
    fn top_std_selection_hand_and_identity_cases() {
        // Columns with stds ≈ [0.1, 3.0, 2.0] around zero means.
        let z = Tensor::from_vec(
            &[2, 3],
            vec![0.1, 3.0, 2.0, -0.1, -3.0, -2.0],
        )
        .unwrap();
        assert_eq!(select_top_std(&z, 2).unwrap(), vec![1, 2]);
        assert_eq!(select_top_std(&z, 3).unwrap(), vec![0, 1, 2], "k = d selects everything");
        assert!(select_top_std(&z, 4).is_err());
    }

    #[test]
    fn top_std_selection_matches_naive_oracle_and_is_equivariant() {
        let mut rng = Rng::new(63);
        let mut z = Tensor::<f64>::sample_normal(&mut rng, &[200, 16], 0.0, 1.0).unwrap();
        // Give columns distinct scales.
        for r in 0..200 {
            for c in 0..16 {
                z.data_mut()[r * 16 + c] *= 0.1 + 0.37 * ((c * 7 + 3) % 16) as f64;
            }
        }
        // Naive two-pass oracle.
        let mut oracle_stds = vec![0.0f64; 16];
        for c in 0..16 {
            let mut mean = 0.0;
            for r in 0..200 {
                mean += z.data()[r * 16 + c];
            }
            mean /= 200.0;
            let mut ss = 0.0;
            for r in 0..200 {
                ss += (z.data()[r * 16 + c] - mean).powi(2);
            }
            oracle_stds[c] = (ss / 199.0).sqrt();
        }
        let mut order: Vec<usize> = (0..16).collect();
        order.sort_by(|&a, &b| oracle_stds[b].partial_cmp(&oracle_stds[a]).unwrap());
        let mut want = order[..5].to_vec();
        want.sort_unstable();
        assert_eq!(select_top_std(&z, 5).unwrap(), want, "selection must match the naive oracle");

        // Permutation equivariance: reverse the columns.
        let mut zp = Tensor::zeros(&[200, 16]);
        for r in 0..200 {
            for c in 0..16 {
                zp.data_mut()[r * 16 + (15 - c)] = z.data()[r * 16 + c];
            }
        }
        let mut mapped: Vec<usize> = select_top_std(&z, 5).unwrap().iter().map(|&i| 15 - i).collect();
        mapped.sort_unstable();
        assert_eq!(select_top_std(&zp, 5).unwrap(), mapped, "selection must follow the permutation");
    }

    #[test]
    fn softplus_parameterization_handles_degenerate_stds() {
        let mean: Tensor<f64> = Tensor::from_vec(&[2], vec![1.5, -0.5]).unwrap();
        let std = Tensor::from_vec(&[2], vec![0.0, 2.0]).unwrap();
        let cp = ClassPrior::from_moments(mean, &std).unwrap();
        let got = cp.std();
        assert_eq!(got.data()[0], 0.0, "zero std must be represented exactly");
        assert!((got.data()[1] - 2.0).abs() < 1e-12, "softplus round-trip");

        let mut rng = Rng::new(64);
        let z = cp.sample(&mut rng, 10).unwrap();
        for r in 0..10 {
            assert_eq!(z.data()[r * 2], 1.5, "collapsed dim draws equal the mean exactly");
        }

        // The collapsed dim is an absorbing state: its raw gradient is zero.
        let mut cp = cp;
        let g = Tensor::filled(&[4, 2], 1.0);
        let dz = Tensor::filled(&[4, 2], 1.0);
        cp.backward_sample(&g, &dz).unwrap();
        let grads = crate::params::grads_flat(&mut cp);
        assert_eq!(grads[2], 0.0, "raw-std gradient of a collapsed dim stays zero");
        assert!(grads[3] > 0.0, "live dim still learns");
    }

    #[test]
    fn class_prior_init_matches_naive_oracle() {
        let labels = vec![0usize, 1, 0, 1, 0];
        let z: Tensor<f64> = Tensor::from_vec(
            &[5, 2],
            vec![1.0, 0.0, 10.0, 5.0, 2.0, 1.0, 14.0, 7.0, 3.0, 2.0],
        )
        .unwrap();
        let m = moments_by_class(&z, &labels, 2).unwrap();
        // Class 0 rows: (1,0),(2,1),(3,2) → mean (2,1), std (1,1).
        assert_eq!(m[0].0.data(), &[2.0, 1.0]);
        assert!((m[0].1.data()[0] - 1.0).abs() < 1e-12);
        assert!((m[0].1.data()[1] - 1.0).abs() < 1e-12);
        // Class 1 rows: (10,5),(14,7) → mean (12,6), std (2√2, √2).
        assert_eq!(m[1].0.data(), &[12.0, 6.0]);
        assert!((m[1].1.data()[0] - 8.0f64.sqrt()).abs() < 1e-12);
        assert!((m[1].1.data()[1] - 2.0f64.sqrt()).abs() < 1e-12);

        let empty = vec![0usize; 5];
        assert!(moments_by_class(&z, &empty, 2).is_err(), "a class without samples must error");
    }

    #[test]
    fn reparameterized_gradients_pass_finite_difference() {
        use crate::gradcheck::check_gradients;
        use crate::params::{grads_flat, params_flat, set_params_flat};
        let mean = Tensor::from_vec(&[3], vec![0.3, -0.6, 1.1]).unwrap();
        let std = Tensor::from_vec(&[3], vec![0.7, 1.3, 0.4]).unwrap();
        let mut cp = ClassPrior::from_moments(mean, &std).unwrap();
        let mut rng = Rng::new(65);
        let g = Tensor::sample_normal(&mut rng, &[6, 3], 0.0, 1.0).unwrap();
        let target = Tensor::sample_normal(&mut rng, &[6, 3], 0.0, 1.0).unwrap();
        let theta0 = params_flat(&mut cp);
        // L = ½‖z − target‖² with frozen noise g.
        let eval = |t: &[f64]| {
            set_params_flat(&mut cp, t);
            cp.zero_grad();
            let z = cp.sample_with_noise(&g).unwrap();
            let diff = z.sub(&target).unwrap();
            let loss = 0.5 * diff.data().iter().map(|v| v * v).sum::<f64>();
            cp.backward_sample(&g, &diff).unwrap();
            (loss, grads_flat(&mut cp))
        };
        let rep = check_gradients(eval, &theta0, 1e-6, 1);
        assert!(rep.max_rel_err < 1e-7, "class-prior FD check failed: {}", rep.max_rel_err);
    }

    #[test]
    fn gather_scatter_round_trip() {
        let prior = toy_prior();
        let z = Tensor::from_vec(&[2, 4], vec![9.0, 1.0, 9.0, 2.0, 9.0, 3.0, 9.0, 4.0]).unwrap();
        let za = prior.gather_active(&z).unwrap();
        assert_eq!(za.data(), &[1.0, 2.0, 3.0, 4.0]);
        let back = prior.scatter_active(&za).unwrap();
        assert_eq!(back.data(), &[0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0]);
    }
}
