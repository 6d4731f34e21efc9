//! The latent-space adversary: a small fully connected net over the active
//! prior dimensions, spectrally normalized throughout, CReLU after the first
//! layer and ReLU after the second, raw scalar scores out.

use crate::error::Result;
use crate::layers::{crelu_backward, crelu_forward, relu_backward, relu_forward, Dense, SpectralNorm};
use crate::memprobe::ActBuf;
use crate::params::{scoped, Params};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug)]
pub struct Discriminator<S: Scalar> {
    pub l1: SpectralNorm<S>, // k → h1, CReLU doubles to 2·h1
    pub l2: SpectralNorm<S>, // 2·h1 → h2, ReLU
    pub l3: SpectralNorm<S>, // h2 → 1
    a1: Option<ActBuf<S>>,   // pre-CReLU
    a2: Option<ActBuf<S>>,   // pre-ReLU
}

impl<S: Scalar> Discriminator<S> {
    pub fn new(rng: &mut Rng, k: usize, h1: usize, h2: usize) -> Self {
        let d1 = Dense::new(rng, k, h1);
        let l1 = SpectralNorm::new(rng, d1);
        let d2 = Dense::new(rng, 2 * h1, h2);
        let l2 = SpectralNorm::new(rng, d2);
        let d3 = Dense::new(rng, h2, 1);
        let l3 = SpectralNorm::new(rng, d3);
        Discriminator { l1, l2, l3, a1: None, a2: None }
    }

    pub fn input_width(&self) -> usize {
        self.l1.dense.in_dim()
    }

    /// Scores [n] for active-dim latents [n×k]. Power iteration advances one
    /// step per call.
    pub fn forward(&mut self, z: &Tensor<S>) -> Result<Tensor<S>> {
        let a1 = self.l1.forward(z)?;
        let a2 = self.l2.forward(&crelu_forward(&a1)?)?;
        let s = self.l3.forward(&relu_forward(&a2))?;
        let n = s.dims2()?[0];
        s.reshape(&[n])
    }

    /// Forward retaining activations for [`backward`].
    pub fn forward_train(&mut self, z: &Tensor<S>) -> Result<Tensor<S>> {
        let a1 = self.l1.forward_train(z)?;
        let c1 = crelu_forward(&a1)?;
        self.a1 = Some(ActBuf::new(a1));
        let a2 = self.l2.forward_train(&c1)?;
        let r2 = relu_forward(&a2);
        self.a2 = Some(ActBuf::new(a2));
        let s = self.l3.forward_train(&r2)?;
        let n = s.dims2()?[0];
        s.reshape(&[n])
    }

    /// Backward from per-example score gradients [n]; accumulates parameter
    /// gradients and returns dL/dz.
    pub fn backward(&mut self, dscore: &Tensor<S>) -> Result<Tensor<S>> {
        let n = dscore.numel();
        let ds = dscore.clone().reshape(&[n, 1])?;
        let dr2 = self.l3.backward(&ds)?;
        let a2 = self.a2.take().expect("backward without forward_train").into_inner();
        let da2 = relu_backward(&a2, &dr2)?;
        let dc1 = self.l2.backward(&da2)?;
        let a1 = self.a1.take().expect("backward without forward_train").into_inner();
        let da1 = crelu_backward(&a1, &dc1)?;
        self.l1.backward(&da1)
    }

    /// Largest singular values of the three effective weights, via the exact
    /// eigensolver — for monitoring and tests, not the training path.
    pub fn effective_sigmas(&self) -> Result<[f64; 3]> {
        let s1 = crate::linalg::spectral_norm_oracle(&self.l1.effective_weight()?.to_f64())?;
        let s2 = crate::linalg::spectral_norm_oracle(&self.l2.effective_weight()?.to_f64())?;
        let s3 = crate::linalg::spectral_norm_oracle(&self.l3.effective_weight()?.to_f64())?;
        Ok([s1, s2, s3])
    }
}

impl<S: Scalar> Params<S> for Discriminator<S> {
    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &mut Tensor<S>, &mut Tensor<S>),
    ) {
        self.l1.visit_params(&scoped(prefix, "l1"), f);
        self.l2.visit_params(&scoped(prefix, "l2"), f);
        self.l3.visit_params(&scoped(prefix, "l3"), f);
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.l1.visit_buffers(&scoped(prefix, "l1"), f);
        self.l2.visit_buffers(&scoped(prefix, "l2"), f);
        self.l3.visit_buffers(&scoped(prefix, "l3"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::hinge_disc_loss;
    use crate::optim::Adam;
    use crate::params::{grads_flat, params_flat, set_params_flat};

    #[test]
    fn width_arithmetic_matches_the_layer_plan() {
        let mut rng = Rng::new(101);
        let d = Discriminator::<f64>::new(&mut rng, 64, 400, 800);
        assert_eq!(d.l1.dense.in_dim(), 64);
        assert_eq!(d.l1.dense.out_dim(), 400, "first hidden layer is 400 wide");
        assert_eq!(d.l2.dense.in_dim(), 800, "CReLU doubles 400 to 800");
        assert_eq!(d.l2.dense.out_dim(), 800);
        assert_eq!(d.l3.dense.in_dim(), 800);
        assert_eq!(d.l3.dense.out_dim(), 1, "a single raw score per example");
    }

    #[test]
    fn zeroed_output_layer_scores_zero() {
        let mut rng = Rng::new(102);
        let mut d = Discriminator::<f64>::new(&mut rng, 8, 16, 32);
        // Zero the read-out weights: every score collapses to exactly 0.
        // (A fully zero net is rejected upstream: spectral normalization has
        // no direction to normalize on a zero matrix.)
        d.l3.dense.w = Tensor::zeros(&[1, 32]);
        d.l3.dense.b = Tensor::zeros(&[1]);
        // Keep the σ estimate meaningful: restore a unit weight entry.
        d.l3.dense.w.data_mut()[0] = 1.0;
        let z = Tensor::sample_normal(&mut rng, &[5, 8], 0.0, 1.0).unwrap();
        let s = d.forward(&z).unwrap();
        assert_eq!(s.shape(), &[5]);
        // Score = w_eff·r2 + b with w one-hot: bounded by that single unit.
        let mut dz = Discriminator::<f64>::new(&mut rng, 8, 16, 32);
        dz.visit_params("", &mut |_, v, _| {
            for x in v.data_mut() {
                *x = 0.0;
            }
        });
        assert!(dz.forward(&z).is_err(), "an all-zero discriminator cannot be normalized");
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let mut rng = Rng::new(103);
        let mut d = Discriminator::<f64>::new(&mut rng, 8, 16, 32);
        let z = Tensor::zeros(&[5, 9]);
        assert!(d.forward(&z).is_err());
    }

    #[test]
    fn gradients_pass_finite_difference_through_the_chain() {
        use crate::gradcheck::check_gradients;
        let mut rng = Rng::new(104);
        let mut d = Discriminator::<f64>::new(&mut rng, 6, 10, 12);
        let z = Tensor::sample_normal(&mut rng, &[4, 6], 0.0, 1.0).unwrap();
        // Warm the power iteration up, then freeze u/v so the objective is
        // differentiable in the parameters.
        for _ in 0..60 {
            d.forward(&z).unwrap();
        }
        d.l1.iterations = 0;
        d.l2.iterations = 0;
        d.l3.iterations = 0;
        let theta0 = params_flat(&mut d);
        let eval = |t: &[f64]| {
            set_params_flat(&mut d, t);
            d.zero_grad();
            let s = d.forward_train(&z).unwrap();
            let loss = 0.5 * s.data().iter().map(|v| v * v).sum::<f64>();
            d.backward(&s).unwrap();
            (loss, grads_flat(&mut d))
        };
        let rep = check_gradients(eval, &theta0, 1e-5, 13);
        assert!(rep.max_rel_err < 1e-4, "discriminator FD check failed: {}", rep.max_rel_err);
    }

    #[test]
    fn learns_to_separate_disjoint_clouds() {
        let mut rng = Rng::new(105);
        let k = 8;
        let mut d = Discriminator::<f64>::new(&mut rng, k, 16, 32);
        let z_prior = Tensor::sample_normal(&mut rng, &[64, k], 0.0, 1.0).unwrap();
        let z_enc = Tensor::filled(&[64, k], 10.0);
        let mut opt = Adam::new(1e-2, 0.0, 0.9);
        let mut last = f64::NAN;
        for _ in 0..200 {
            d.zero_grad();
            let batch = Tensor::concat(0, &[&z_prior, &z_enc]).unwrap();
            let s = d.forward_train(&batch).unwrap();
            let sp = Tensor::from_vec(&[64], s.data()[..64].to_vec()).unwrap();
            let se = Tensor::from_vec(&[64], s.data()[64..].to_vec()).unwrap();
            let (l, dp, de) = hinge_disc_loss(&sp, &se);
            last = l;
            let dscore = Tensor::concat(0, &[&dp, &de]).unwrap();
            d.backward(&dscore).unwrap();
            opt.step(&mut d).unwrap();
        }
        assert!(last < 0.1, "separable clouds must be separated, L_D = {last}");

        // After training, every effective weight stays near the unit sphere
        // of the spectral norm.
        let sig = d.effective_sigmas().unwrap();
        for (i, s) in sig.iter().enumerate() {
            assert!(
                (s - 1.0).abs() <= 1e-2,
                "layer {i} effective σ = {s}, expected 1 ± 0.01"
            );
        }
    }

    #[test]
    fn score_differences_respect_the_lipschitz_budget() {
        let mut rng = Rng::new(106);
        let mut d = Discriminator::<f64>::new(&mut rng, 8, 16, 32);
        let warm = Tensor::sample_normal(&mut rng, &[16, 8], 0.0, 1.0).unwrap();
        for _ in 0..50 {
            d.forward(&warm).unwrap();
        }
        for _ in 0..50 {
            let a = Tensor::sample_normal(&mut rng, &[1, 8], 0.0, 2.0).unwrap();
            let b = Tensor::sample_normal(&mut rng, &[1, 8], 0.0, 2.0).unwrap();
            let sa = d.forward(&a).unwrap().data()[0];
            let sb = d.forward(&b).unwrap().data()[0];
            let dist = a.sub(&b).unwrap().l2_norm();
            assert!(
                (sa - sb).abs() <= dist * 1.05,
                "|D(a) − D(b)| = {} exceeds 1.05·‖a−b‖ = {}",
                (sa - sb).abs(),
                dist * 1.05
            );
        }
    }

    #[test]
    fn detached_inputs_stay_untouched_by_a_training_step() {
        let mut rng = Rng::new(107);
        let mut d = Discriminator::<f64>::new(&mut rng, 4, 8, 8);
        let z_prior = Tensor::sample_normal(&mut rng, &[8, 4], 0.0, 1.0).unwrap();
        let z_enc = Tensor::sample_normal(&mut rng, &[8, 4], 3.0, 1.0).unwrap();
        let enc_copy = z_enc.clone();
        let before = params_flat(&mut d);
        let mut opt = Adam::new(1e-3, 0.0, 0.9);
        d.zero_grad();
        let batch = Tensor::concat(0, &[&z_prior, &z_enc]).unwrap();
        let s = d.forward_train(&batch).unwrap();
        let sp = Tensor::from_vec(&[8], s.data()[..8].to_vec()).unwrap();
        let se = Tensor::from_vec(&[8], s.data()[8..].to_vec()).unwrap();
        let (_, dp, de) = hinge_disc_loss(&sp, &se);
        let dscore = Tensor::concat(0, &[&dp, &de]).unwrap();
        d.backward(&dscore).unwrap();
        opt.step(&mut d).unwrap();
        assert_eq!(z_enc, enc_copy, "the discriminator step must not mutate encodings");
        assert_ne!(params_flat(&mut d), before, "the discriminator itself must move");
    }
}
