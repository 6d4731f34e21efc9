//! Training objectives: clipped-latent reconstruction, the hinge pair for
//! the latent adversary, and the noise-perturbation reconstruction penalty.
//! Every loss returns its value and accumulates analytic gradients.

use crate::error::Result;
use crate::latent::{clip_with_mask, PriorSpec};
use crate::revnet::InvertibleNet;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-step loss values; `total` is the weighted sum of whichever components
/// are present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossReport {
    pub recon_l1: Option<f64>,
    pub clip_l2: Option<f64>,
    pub adv_disc: Option<f64>,
    pub adv_enc: Option<f64>,
    pub perturb: Option<f64>,
    pub ot: Option<f64>,
    pub total: f64,
}

impl LossReport {
    /// Stable field order for CSV headers and rows.
    pub fn entries(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("recon_l1", self.recon_l1),
            ("clip_l2", self.clip_l2),
            ("adv_disc", self.adv_disc),
            ("adv_enc", self.adv_enc),
            ("perturb", self.perturb),
            ("ot", self.ot),
        ]
    }
}

fn mean_abs_and_sign_grad<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> (f64, Tensor<S>) {
    // mean|a − b| and its gradient w.r.t. b; sign(0) contributes 0.
    let n = a.numel() as f64;
    let mut grad = Tensor::zeros(b.shape());
    let mut acc = 0.0;
    for (i, (&av, &bv)) in a.data().iter().zip(b.data()).enumerate() {
        let d = (av - bv).to_f64();
        acc += d.abs();
        grad.data_mut()[i] = S::from_f64(-d.signum() / n);
    }
    (acc / n, grad)
}

/// Clipped-latent reconstruction: z = E(x), z_c = clip(z),
/// L = λ₁·mean|x − R⁻¹(z_c)| + λ₂·mean((z − z_c)²).
/// Gradients flow into the net through the encoder pass, the clip mask, and
/// the decoder pass. Returns (raw L1 mean, raw L2 mean, weighted total).
pub fn recon_loss<S: Scalar>(
    net: &mut InvertibleNet<S>,
    prior: &PriorSpec,
    x: &Tensor<S>,
    lambda_l1: f64,
    lambda_l2: f64,
) -> Result<(f64, f64, f64)> {
    let z4 = net.forward(x)?;
    let z = net.flatten_latent(z4.clone())?;
    let (zc, mask) = clip_with_mask(&z, prior)?;
    let x_hat = net.inverse(&net.unflatten_latent(zc.clone())?)?;

    // L1 term through the decoder.
    let (l1, dx_hat) = mean_abs_and_sign_grad(x, &x_hat);
    let dx_hat = dx_hat.scale(S::from_f64(lambda_l1));
    let dzc4_l1 = net.backward_through_inverse(&x_hat, &dx_hat)?;
    let dzc_l1 = net.flatten_latent(dzc4_l1)?;

    // L2 term: mean((z − zc)²) touches both z (direct) and zc (negated).
    let nd = z.numel() as f64;
    let resid = z.sub(&zc)?;
    let l2 = resid.data().iter().map(|&v| v.to_f64().powi(2)).sum::<f64>() / nd;
    let w2 = S::from_f64(2.0 * lambda_l2 / nd);
    let dz_direct = resid.scale(w2);
    let dzc_l2 = resid.scale(-w2);

    // Chain through the clip: pass-through on the mask, zero elsewhere.
    let dzc = dzc_l1.add(&dzc_l2)?;
    let dz = dz_direct.add(&dzc.mul(&mask)?)?;
    net.backward_recompute(&z4, &net.unflatten_latent(dz)?)?;

    Ok((l1, l2, lambda_l1 * l1 + lambda_l2 * l2))
}

/// Hinge loss for the discriminator given raw scores on prior samples and on
/// encodings: L_D = −mean[min(0, −1 + s_prior)] − mean[min(0, −1 − s_enc)].
/// Returns the loss and its gradients w.r.t. both score vectors; the
/// subgradient at the hinge corner is zero.
pub fn hinge_disc_loss<S: Scalar>(
    s_prior: &Tensor<S>,
    s_enc: &Tensor<S>,
) -> (f64, Tensor<S>, Tensor<S>) {
    let n = s_prior.numel() as f64;
    let m = s_enc.numel() as f64;
    let mut acc_p = 0.0;
    let mut dp = Tensor::zeros(s_prior.shape());
    for (i, &p) in s_prior.data().iter().enumerate() {
        let p = p.to_f64();
        if p < 1.0 {
            acc_p += 1.0 - p;
            dp.data_mut()[i] = S::from_f64(-1.0 / n);
        }
    }
    let mut acc_e = 0.0;
    let mut de = Tensor::zeros(s_enc.shape());
    for (j, &e) in s_enc.data().iter().enumerate() {
        let e = e.to_f64();
        if e > -1.0 {
            acc_e += 1.0 + e;
            de.data_mut()[j] = S::from_f64(1.0 / m);
        }
    }
    (acc_p / n + acc_e / m, dp, de)
}

/// Encoder-side adversarial loss L_E = −mean[s_enc], with gradient −1/m.
pub fn hinge_enc_loss<S: Scalar>(s_enc: &Tensor<S>) -> (f64, Tensor<S>) {
    let m = s_enc.numel() as f64;
    let loss = -s_enc.data().iter().map(|&v| v.to_f64()).sum::<f64>() / m;
    let grad = Tensor::filled(s_enc.shape(), S::from_f64(-1.0 / m));
    (loss, grad)
}

/// Perturbation loss with caller-supplied noise: L = mean|x − R⁻¹(R(x) + ε)|.
/// Gradients flow through both the encoder and the decoder pass, scaled by
/// `weight` (the accumulated gradients belong to weight · L; the returned
/// loss is unweighted).
pub fn perturbation_term<S: Scalar>(
    net: &mut InvertibleNet<S>,
    x: &Tensor<S>,
    eps: &Tensor<S>,
    weight: f64,
) -> Result<f64> {
    let z = net.forward(x)?;
    let zp = z.add(eps)?;
    let x_hat = net.inverse(&zp)?;
    let (loss, dx_hat) = mean_abs_and_sign_grad(x, &x_hat);
    let dx_hat = dx_hat.scale(S::from_f64(weight));
    let dzp = net.backward_through_inverse(&x_hat, &dx_hat)?;
    net.backward_recompute(&z, &dzp)?;
    Ok(loss)
}

pub fn perturbation_loss_with_noise<S: Scalar>(
    net: &mut InvertibleNet<S>,
    x: &Tensor<S>,
    eps: &Tensor<S>,
) -> Result<f64> {
    perturbation_term(net, x, eps, 1.0)
}

/// Perturbation loss with ε ~ N(0, noise_std²) drawn per element.
pub fn perturbation_loss<S: Scalar>(
    net: &mut InvertibleNet<S>,
    x: &Tensor<S>,
    noise_std: f64,
    rng: &mut Rng,
    weight: f64,
) -> Result<f64> {
    let z_shape: Vec<usize> = {
        let [n, _, _, _] = x.dims4()?;
        let [c, h, w] = net.latent_shape;
        vec![n, c, h, w]
    };
    let eps = Tensor::sample_normal(rng, &z_shape, 0.0, noise_std)?;
    perturbation_term(net, x, &eps, weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::PriorFamily;
    use crate::params::{grads_flat, params_flat, set_params_flat, Params};
    use crate::revnet::{build_architecture, ArchSpec, StageGroup};

    fn toy_net(seed: u64) -> InvertibleNet<f64> {
        let spec = ArchSpec {
            input: [1, 4, 4],
            groups: vec![StageGroup { blocks: 2, width: 4, kernel: 3 }],
        };
        build_architecture(&mut Rng::new(seed), &spec).unwrap()
    }

    fn zero_params(net: &mut InvertibleNet<f64>) {
        net.visit_params("", &mut |_, v, _| {
            for x in v.data_mut() {
                *x = 0.0;
            }
        });
    }

    #[test]
    fn identity_support_makes_reconstruction_free() {
        let mut rng = Rng::new(81);
        let x = Tensor::sample_normal(&mut rng, &[2, 1, 4, 4], 0.0, 1.0).unwrap();
        let all_active =
            PriorSpec::new(16, (0..16).collect(), PriorFamily::StandardNormal, f64::INFINITY)
                .unwrap();

        // Permutation-only net: round trip is bit-exact, loss exactly zero.
        let mut net = toy_net(82);
        zero_params(&mut net);
        let (l1, l2, total) = recon_loss(&mut net, &all_active, &x, 1.0, 1.0).unwrap();
        assert_eq!((l1, l2, total), (0.0, 0.0, 0.0), "bijectivity means free reconstruction");

        // A random net only adds float round-trip noise.
        let mut net = toy_net(83);
        let (l1, l2, _) = recon_loss(&mut net, &all_active, &x, 1.0, 1.0).unwrap();
        assert!(l1 < 1e-12, "round-trip residual {l1} should be at float-noise level");
        assert_eq!(l2, 0.0, "unclipped encodings incur no clip penalty");
    }

    #[test]
    fn in_support_encodings_skip_the_l2_term() {
        let mut rng = Rng::new(84);
        let mut net = toy_net(85);
        let x = Tensor::sample_normal(&mut rng, &[2, 1, 4, 4], 0.0, 0.05).unwrap();
        // Generous bound, every dim active → nothing clips.
        let prior =
            PriorSpec::new(16, (0..16).collect(), PriorFamily::StandardNormal, 1e6).unwrap();
        let (_, l2, _) = recon_loss(&mut net, &prior, &x, 1.0, 1.0).unwrap();
        assert_eq!(l2, 0.0);
    }

    #[test]
    fn recon_loss_total_is_the_weighted_sum_and_nonneg() {
        let mut rng = Rng::new(86);
        let mut net = toy_net(87);
        let x = Tensor::sample_normal(&mut rng, &[2, 1, 4, 4], 0.0, 1.0).unwrap();
        let prior = PriorSpec::new(16, vec![0, 3, 7, 11], PriorFamily::StandardNormal, 2.0).unwrap();
        let (l1, l2, total) = recon_loss(&mut net, &prior, &x, 0.7, 1.3).unwrap();
        assert!(l1 > 0.0 && l2 > 0.0);
        assert!((total - (0.7 * l1 + 1.3 * l2)).abs() < 1e-15, "total must be the weighted sum");
    }

    #[test]
    fn recon_gradients_pass_finite_difference() {
        use crate::gradcheck::check_gradients;
        let mut rng = Rng::new(88);
        let mut net = toy_net(89);
        let x = Tensor::sample_normal(&mut rng, &[2, 1, 4, 4], 0.0, 1.0).unwrap();
        // Half the dims active with a bound low enough that clamping engages.
        let prior =
            PriorSpec::new(16, vec![0, 2, 5, 8, 10, 13, 14, 15], PriorFamily::StandardNormal, 1.0)
                .unwrap();
        let theta0 = params_flat(&mut net);
        let eval = |t: &[f64]| {
            set_params_flat(&mut net, t);
            net.zero_grad();
            let (_, _, total) = recon_loss(&mut net, &prior, &x, 1.0, 1.0).unwrap();
            (total, grads_flat(&mut net))
        };
        let rep = check_gradients(eval, &theta0, 1e-6, 11);
        assert!(rep.max_rel_err < 1e-4, "recon FD check failed: {}", rep.max_rel_err);
    }

    #[test]
    fn hinge_closed_forms() {
        // Perfect margin: D ≡ +1 on prior, ≡ −1 on encodings.
        let (l, dp, de) = hinge_disc_loss(&Tensor::filled(&[4], 1.0), &Tensor::filled(&[4], -1.0));
        assert_eq!(l, 0.0);
        assert!(dp.data().iter().all(|&v| v == 0.0), "at the margin the subgradient is zero");
        assert!(de.data().iter().all(|&v| v == 0.0));

        // Uninformative D ≡ 0 → both hinges open.
        let zeros = Tensor::<f64>::zeros(&[5]);
        let (l, dp, de) = hinge_disc_loss(&zeros, &zeros);
        assert_eq!(l, 2.0);
        assert!(dp.data().iter().all(|&v| v == -0.2), "prior side pushes scores up");
        assert!(de.data().iter().all(|&v| v == 0.2), "encoding side pushes scores down");
        let (le, dge) = hinge_enc_loss(&zeros);
        assert_eq!(le, 0.0);
        assert!(dge.data().iter().all(|&v| v == -0.2));

        // Constant encoder scores c → L_E = −c.
        let (le, _) = hinge_enc_loss(&Tensor::filled(&[7], 2.5));
        assert_eq!(le, -2.5);

        // Mixed case with exact values: prior scores [2, 0.5], enc [−3, 0].
        let (l, dp, de) = hinge_disc_loss(
            &Tensor::from_vec(&[2], vec![2.0, 0.5]).unwrap(),
            &Tensor::from_vec(&[2], vec![-3.0, 0.0]).unwrap(),
        );
        assert_eq!(l, 0.25 + 0.5, "only the violating scores contribute");
        assert_eq!(dp.data(), &[0.0, -0.5]);
        assert_eq!(de.data(), &[0.0, 0.5]);
    }

    #[test]
    fn hinge_disc_loss_is_nonnegative() {
        let mut rng = Rng::new(90);
        for _ in 0..20 {
            let p = Tensor::<f64>::sample_normal(&mut rng, &[6], 0.0, 3.0).unwrap();
            let e = Tensor::<f64>::sample_normal(&mut rng, &[6], 0.0, 3.0).unwrap();
            let (l, _, _) = hinge_disc_loss(&p, &e);
            assert!(l >= 0.0, "hinge loss must be bounded below by zero");
        }
    }

    #[test]
    fn perturbation_loss_identity_net_equals_mean_abs_noise() {
        let mut rng = Rng::new(91);
        let mut net = toy_net(92);
        zero_params(&mut net);
        let x = Tensor::sample_normal(&mut rng, &[2, 1, 4, 4], 0.0, 1.0).unwrap();

        // Zero noise → exactly zero loss.
        let eps: Tensor<f64> = Tensor::zeros(&[2, 4, 2, 2]);
        assert_eq!(perturbation_loss_with_noise(&mut net, &x, &eps).unwrap(), 0.0);

        // A permutation net moves the noise around but not its magnitudes.
        let eps: Tensor<f64> = Tensor::sample_normal(&mut rng, &[2, 4, 2, 2], 0.0, 0.1).unwrap();
        let want = eps.data().iter().map(|v| v.abs()).sum::<f64>() / 32.0;
        let got = perturbation_loss_with_noise(&mut net, &x, &eps).unwrap();
        assert_eq!(got, want, "permutation nets preserve the noise multiset");
    }

    #[test]
    fn perturbation_loss_scales_linearly_in_noise_std() {
        let mut rng = Rng::new(93);
        let mut net = toy_net(94);
        zero_params(&mut net);
        let x = Tensor::zeros(&[1, 1, 4, 4]);
        let mut acc = [0.0f64; 2];
        // ~10⁴ noise element draws per std level.
        for _ in 0..625 {
            acc[0] += perturbation_loss(&mut net, &x, 0.1, &mut rng, 1.0).unwrap();
            acc[1] += perturbation_loss(&mut net, &x, 0.2, &mut rng, 1.0).unwrap();
        }
        let ratio = acc[1] / acc[0];
        assert!(
            (ratio - 2.0).abs() < 0.1,
            "doubling the noise std should double the loss, got ratio {ratio}"
        );
    }

    #[test]
    fn perturbation_gradients_pass_finite_difference() {
        use crate::gradcheck::check_gradients;
        let mut rng = Rng::new(95);
        let mut net = toy_net(96);
        let x = Tensor::sample_normal(&mut rng, &[2, 1, 4, 4], 0.0, 1.0).unwrap();
        let eps = Tensor::sample_normal(&mut rng, &[2, 4, 2, 2], 0.0, 0.1).unwrap();
        let theta0 = params_flat(&mut net);
        let eval = |t: &[f64]| {
            set_params_flat(&mut net, t);
            net.zero_grad();
            let loss = perturbation_loss_with_noise(&mut net, &x, &eps).unwrap();
            (loss, grads_flat(&mut net))
        };
        let rep = check_gradients(eval, &theta0, 1e-6, 11);
        assert!(rep.max_rel_err < 1e-4, "perturbation FD check failed: {}", rep.max_rel_err);
    }
}
