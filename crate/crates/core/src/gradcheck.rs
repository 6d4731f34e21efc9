//! Finite-difference verification of hand-written backward passes.
//!
//! The driver owns nothing model-specific: callers hand it the current flat
//! parameter vector and a closure that sets parameters, runs forward +
//! backward, and reports (loss, flat analytic gradient). Central differences
//! with h = 1e-5 in f64 give ~1e-7 truncation error, far below the 1e-4/1e-5
//! acceptance thresholds.

/// |analytic − numeric| / max(1, |numeric|)
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

#[derive(Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Central-difference check of `eval` at `theta0`.
///
/// `eval(theta) -> (loss, grad)` must be deterministic in `theta` (freeze all
/// sampling outside). `probe_every` strides the parameter vector so huge
/// models stay checkable; 1 checks every coordinate.
pub fn check_gradients(
    mut eval: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    theta0: &[f64],
    h: f64,
    probe_every: usize,
) -> GradCheckReport {
    assert!(probe_every >= 1);
    let (_, analytic) = eval(theta0);
    assert_eq!(analytic.len(), theta0.len(), "gradient length must match parameter length");
    let mut report = GradCheckReport { max_rel_err: 0.0, worst_index: 0, checked: 0 };
    let mut theta = theta0.to_vec();
    for i in (0..theta.len()).step_by(probe_every) {
        theta[i] = theta0[i] + h;
        let (lp, _) = eval(&theta);
        theta[i] = theta0[i] - h;
        let (lm, _) = eval(&theta);
        theta[i] = theta0[i];
        let numeric = (lp - lm) / (2.0 * h);
        let e = rel_err(analytic[i], numeric);
        if e > report.max_rel_err {
            report.max_rel_err = e;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl_passes() {
        // f(θ) = Σ i·θ_i², ∇f = 2·i·θ_i
        let eval = |t: &[f64]| {
            let loss: f64 = t.iter().enumerate().map(|(i, &x)| i as f64 * x * x).sum();
            let grad: Vec<f64> = t.iter().enumerate().map(|(i, &x)| 2.0 * i as f64 * x).collect();
            (loss, grad)
        };
        let theta = vec![0.3, -0.7, 1.1, 0.0];
        let rep = check_gradients(eval, &theta, 1e-5, 1);
        assert!(rep.max_rel_err < 1e-9, "exact quadratic must check out, got {}", rep.max_rel_err);
        assert_eq!(rep.checked, 4);
    }

    #[test]
    fn deliberately_wrong_gradient_is_caught() {
        let eval = |t: &[f64]| {
            let loss: f64 = t.iter().map(|&x| x * x).sum();
            let grad: Vec<f64> = t.iter().map(|&x| 3.0 * x).collect(); // wrong: should be 2x
            (loss, grad)
        };
        let rep = check_gradients(eval, &[1.0, 2.0], 1e-5, 1);
        assert!(rep.max_rel_err > 0.1, "a 1.5× wrong gradient must be flagged");
    }
}
