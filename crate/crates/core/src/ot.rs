//! Exact optimal transport between equal-size point sets: cost matrices,
//! an O(n³) assignment solver, a sorted fast path for 1-D, and envelope
//! gradients that hold the optimal pairing fixed.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostFn {
    /// ‖x − y‖₂ — the default.
    Euclidean,
    /// ‖x − y‖₂² — available for experimentation, not the default.
    SquaredEuclidean,
}

/// An optimal pairing: row i of X matches row `permutation[i]` of Y, and
/// `cost` is the mean pair cost under that pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub permutation: Vec<usize>,
    pub cost: f64,
    pub cost_fn: CostFn,
}

fn pair_cost<S: Scalar>(x: &[S], y: &[S], cost_fn: CostFn) -> f64 {
    let sq: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let d = (a - b).to_f64();
            d * d
        })
        .sum();
    match cost_fn {
        CostFn::Euclidean => sq.sqrt(),
        CostFn::SquaredEuclidean => sq,
    }
}

/// C[i][j] = c(x_i, y_j) for rows of X [n×d] and Y [n×d].
pub fn cost_matrix<S: Scalar>(
    x: &Tensor<S>,
    y: &Tensor<S>,
    cost_fn: CostFn,
) -> Result<Tensor<f64>> {
    let [nx, dx] = x.dims2()?;
    let [ny, dy] = y.dims2()?;
    if nx != ny {
        return Err(Error::Shape(format!("point counts differ: {nx} vs {ny}")));
    }
    if dx != dy {
        return Err(Error::Shape(format!("point dims differ: {dx} vs {dy}")));
    }
    let mut c = Tensor::zeros(&[nx, nx]);
    for i in 0..nx {
        for j in 0..nx {
            c.data_mut()[i * nx + j] =
                pair_cost(&x.data()[i * dx..(i + 1) * dx], &y.data()[j * dx..(j + 1) * dx], cost_fn);
        }
    }
    Ok(c)
}

/// Minimum-mean-cost perfect matching on a square cost matrix via the
/// potentials form of the Hungarian algorithm (O(n³)).
pub fn solve_exact(c: &Tensor<f64>, cost_fn: CostFn) -> Result<TransportPlan> {
    let [n, m] = c.dims2()?;
    if n != m {
        return Err(Error::Shape(format!("cost matrix must be square, got {n}×{m}")));
    }
    if n == 0 {
        return Err(Error::Shape("cost matrix must be at least 1×1".into()));
    }
    c.validate_finite("ot cost matrix")?;
    let at = |i: usize, j: usize| c.data()[i * n + j];

    // Row/column potentials; p[j] is the row matched to column j (1-indexed,
    // 0 = unmatched).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    let cost = (0..n).map(|i| at(i, perm[i])).sum::<f64>() / n as f64;
    Ok(TransportPlan { permutation: perm, cost, cost_fn })
}

/// 1-D fast path: pair order statistics. Provably optimal for any convex
/// cost of the difference, so it doubles as an independent oracle for
/// [`solve_exact`].
pub fn sorted_1d_plan<S: Scalar>(x: &Tensor<S>, y: &Tensor<S>, cost_fn: CostFn) -> Result<TransportPlan> {
    let [nx, dx] = x.dims2()?;
    let [ny, dy] = y.dims2()?;
    if dx != 1 || dy != 1 {
        return Err(Error::Shape("sorted plan is for 1-D points".into()));
    }
    if nx != ny {
        return Err(Error::Shape(format!("point counts differ: {nx} vs {ny}")));
    }
    let order = |t: &Tensor<S>| {
        let mut idx: Vec<usize> = (0..nx).collect();
        idx.sort_by(|&a, &b| t.data()[a].partial_cmp(&t.data()[b]).expect("finite points"));
        idx
    };
    let (ox, oy) = (order(x), order(y));
    let mut perm = vec![0usize; nx];
    let mut cost = 0.0;
    for r in 0..nx {
        perm[ox[r]] = oy[r];
        cost += pair_cost(
            &x.data()[ox[r]..ox[r] + 1],
            &y.data()[oy[r]..oy[r] + 1],
            cost_fn,
        );
    }
    Ok(TransportPlan { permutation: perm, cost: cost / nx as f64, cost_fn })
}

/// OT loss with envelope gradients: the permutation is held fixed, so
/// dX_i = ∂c(x_i, y_{π(i)})/∂x_i / n and dY picks up the mirror term.
/// Coincident pairs contribute zero gradient under the Euclidean cost.
pub fn ot_loss_and_grad<S: Scalar>(
    x: &Tensor<S>,
    y: &Tensor<S>,
    cost_fn: CostFn,
) -> Result<(f64, Tensor<S>, Tensor<S>, TransportPlan)> {
    let plan = solve_exact(&cost_matrix(x, y, cost_fn)?, cost_fn)?;
    let [n, d] = x.dims2()?;
    let mut dx = Tensor::zeros(&[n, d]);
    let mut dy = Tensor::zeros(&[n, d]);
    let nf = n as f64;
    for i in 0..n {
        let j = plan.permutation[i];
        let xi = &x.data()[i * d..(i + 1) * d];
        let yj = &y.data()[j * d..(j + 1) * d];
        match cost_fn {
            CostFn::Euclidean => {
                let dist = pair_cost(xi, yj, CostFn::Euclidean);
                if dist == 0.0 {
                    continue;
                }
                for c in 0..d {
                    let g = (xi[c] - yj[c]).to_f64() / (nf * dist);
                    dx.data_mut()[i * d + c] = S::from_f64(g);
                    dy.data_mut()[j * d + c] = S::from_f64(-g);
                }
            }
            CostFn::SquaredEuclidean => {
                for c in 0..d {
                    let g = 2.0 * (xi[c] - yj[c]).to_f64() / nf;
                    dx.data_mut()[i * d + c] = S::from_f64(g);
                    dy.data_mut()[j * d + c] = S::from_f64(-g);
                }
            }
        }
    }
    Ok((plan.cost, dx, dy, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn points(rng: &mut Rng, n: usize, d: usize, scale: f64) -> Tensor<f64> {
        Tensor::sample_normal(rng, &[n, d], 0.0, scale).unwrap()
    }

    /// Minimum mean cost over all n! permutations, by explicit enumeration.
    fn brute_force_cost(c: &Tensor<f64>) -> f64 {
        let [n, _] = c.dims2().unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        // Heap's algorithm, iterative.
        let mut stack = vec![0usize; n];
        let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c.data()[i * n + j]).sum::<f64>();
        best = best.min(eval(&perm));
        let mut i = 1;
        while i < n {
            if stack[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(stack[i], i);
                }
                best = best.min(eval(&perm));
                stack[i] += 1;
                i = 1;
            } else {
                stack[i] = 0;
                i += 1;
            }
        }
        best / n as f64
    }

    #[test]
    fn cost_matrix_hand_cases() {
        let x = Tensor::from_vec(&[2, 2], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let c = cost_matrix(&x, &x, CostFn::Euclidean).unwrap();
        assert_eq!(c.data()[0], 0.0, "identical sets have a zero diagonal");
        assert_eq!(c.data()[3], 0.0);

        let a = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        let b = Tensor::from_vec(&[1, 2], vec![3.0, 4.0]).unwrap();
        let c = cost_matrix(&a, &b, CostFn::Euclidean).unwrap();
        assert_eq!(c.data()[0], 5.0, "3-4-5 triangle");
        let c2 = cost_matrix(&a, &b, CostFn::SquaredEuclidean).unwrap();
        assert_eq!(c2.data()[0], 25.0);

        let y3 = Tensor::from_vec(&[3, 2], vec![0.0; 6]).unwrap();
        assert!(cost_matrix(&x, &y3, CostFn::Euclidean).is_err(), "count mismatch must error");
    }

    #[test]
    fn cost_matrix_matches_naive_oracle() {
        let mut rng = Rng::new(71);
        let x = points(&mut rng, 12, 5, 1.0);
        let y = points(&mut rng, 12, 5, 2.0);
        let c = cost_matrix(&x, &y, CostFn::Euclidean).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let mut ss = 0.0;
                for k in 0..5 {
                    let d = x.data()[i * 5 + k] - y.data()[j * 5 + k];
                    ss += d * d;
                }
                assert!(
                    (c.data()[i * 12 + j] - ss.sqrt()).abs() < 1e-10,
                    "entry ({i},{j}) disagrees with the per-pair oracle"
                );
            }
        }
    }

    #[test]
    fn solver_trivial_cases() {
        let c1 = Tensor::from_vec(&[1, 1], vec![7.5]).unwrap();
        let p = solve_exact(&c1, CostFn::Euclidean).unwrap();
        assert_eq!(p.permutation, vec![0]);
        assert_eq!(p.cost, 7.5);

        let c2 = Tensor::from_vec(&[2, 2], vec![0.0, 10.0, 10.0, 0.0]).unwrap();
        let p = solve_exact(&c2, CostFn::Euclidean).unwrap();
        assert_eq!(p.permutation, vec![0, 1], "diagonal is free");
        assert_eq!(p.cost, 0.0);

        let nan = Tensor::from_vec(&[1, 1], vec![f64::NAN]).unwrap();
        assert!(solve_exact(&nan, CostFn::Euclidean).is_err(), "non-finite costs must error");
    }

    #[test]
    fn solver_matches_brute_force_on_small_instances() {
        let mut rng = Rng::new(72);
        for n in 1..=8usize {
            for _ in 0..5 {
                let mut c = Tensor::zeros(&[n, n]);
                for v in c.data_mut() {
                    *v = rng.uniform() * 10.0;
                }
                let p = solve_exact(&c, CostFn::Euclidean).unwrap();
                let want = brute_force_cost(&c);
                assert!(
                    (p.cost - want).abs() < 1e-12,
                    "n={n}: solver cost {} vs brute force {want}",
                    p.cost
                );
                // The permutation must be a bijection realizing the cost.
                let mut seen = vec![false; n];
                let mut realized = 0.0;
                for (i, &j) in p.permutation.iter().enumerate() {
                    assert!(!seen[j], "column {j} matched twice");
                    seen[j] = true;
                    realized += c.data()[i * n + j];
                }
                assert!((realized / n as f64 - p.cost).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sorted_plan_hand_case_and_cross_validation() {
        let x = Tensor::from_vec(&[2, 1], vec![1.0, 0.0]).unwrap();
        let y = Tensor::from_vec(&[2, 1], vec![10.0, 0.0]).unwrap();
        let p = sorted_1d_plan(&x, &y, CostFn::Euclidean).unwrap();
        assert_eq!(p.permutation, vec![0, 1], "0 pairs with 0, 1 with 10");
        assert_eq!(p.cost, 4.5);

        let mut rng = Rng::new(73);
        for &n in &[1usize, 2, 3, 7, 16, 64] {
            let x = points(&mut rng, n, 1, 2.0);
            let y = points(&mut rng, n, 1, 3.0);
            let fast = sorted_1d_plan(&x, &y, CostFn::Euclidean).unwrap();
            let slow = solve_exact(&cost_matrix(&x, &y, CostFn::Euclidean).unwrap(), CostFn::Euclidean)
                .unwrap();
            assert!(
                (fast.cost - slow.cost).abs() < 1e-12,
                "n={n}: sorted plan {} vs exact solver {}",
                fast.cost,
                slow.cost
            );
        }
    }

    #[test]
    fn loss_and_grad_hand_cases() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let (loss, dx, dy, _) = ot_loss_and_grad(&x, &x, CostFn::Euclidean).unwrap();
        assert_eq!(loss, 0.0, "identical sets transport for free");
        assert!(dx.data().iter().all(|&v| v == 0.0), "coincident pairs get zero gradient");
        assert!(dy.data().iter().all(|&v| v == 0.0));

        let x = Tensor::from_vec(&[1, 1], vec![0.0]).unwrap();
        let y = Tensor::from_vec(&[1, 1], vec![3.0]).unwrap();
        let (loss, dx, dy, _) = ot_loss_and_grad(&x, &y, CostFn::Euclidean).unwrap();
        assert_eq!(loss, 3.0);
        assert_eq!(dx.data()[0], -1.0, "gradient points from x toward y with unit norm");
        assert_eq!(dy.data()[0], 1.0);
    }

    #[test]
    fn gradients_pass_finite_difference_at_a_strict_optimum() {
        // Two well-separated clusters so the optimal pairing has margin ≫ h
        // and stays constant under perturbation.
        let x = Tensor::from_vec(&[3, 2], vec![0.0, 0.1, 5.0, -0.2, 10.0, 0.3]).unwrap();
        let y = Tensor::from_vec(&[3, 2], vec![0.4, 1.0, 5.3, 0.9, 10.2, 1.1]).unwrap();
        let (_, dx, dy, plan) = ot_loss_and_grad(&x, &y, CostFn::Euclidean).unwrap();
        assert_eq!(plan.permutation, vec![0, 1, 2], "clusters pair up in order");
        let h = 1e-6;
        for (target, grad, is_x) in [(&x, &dx, true), (&y, &dy, false)] {
            for i in 0..6 {
                let mut plus = target.clone();
                plus.data_mut()[i] += h;
                let mut minus = target.clone();
                minus.data_mut()[i] -= h;
                let (lp, lm) = if is_x {
                    (
                        ot_loss_and_grad(&plus, &y, CostFn::Euclidean).unwrap().0,
                        ot_loss_and_grad(&minus, &y, CostFn::Euclidean).unwrap().0,
                    )
                } else {
                    (
                        ot_loss_and_grad(&x, &plus, CostFn::Euclidean).unwrap().0,
                        ot_loss_and_grad(&x, &minus, CostFn::Euclidean).unwrap().0,
                    )
                };
                let numeric = (lp - lm) / (2.0 * h);
                let rel = (grad.data()[i] - numeric).abs() / numeric.abs().max(1.0);
                assert!(rel < 1e-4, "coord {i} ({}): rel err {rel}", if is_x { "x" } else { "y" });
            }
        }
    }

    #[test]
    fn metric_axioms_hold_on_random_instances() {
        let mut rng = Rng::new(74);
        for _ in 0..10 {
            let x = points(&mut rng, 6, 3, 1.0);
            let y = points(&mut rng, 6, 3, 1.5);
            let z = points(&mut rng, 6, 3, 0.7);
            let ot = |a: &Tensor<f64>, b: &Tensor<f64>| {
                solve_exact(&cost_matrix(a, b, CostFn::Euclidean).unwrap(), CostFn::Euclidean)
                    .unwrap()
                    .cost
            };
            assert_eq!(ot(&x, &x), 0.0, "OT(X, X) must vanish");
            let (xy, yx) = (ot(&x, &y), ot(&y, &x));
            assert!((xy - yx).abs() < 1e-12, "symmetry: {xy} vs {yx}");
            let (xz, yz) = (ot(&x, &z), ot(&y, &z));
            assert!(xz <= xy + yz + 1e-9, "triangle: {xz} > {xy} + {yz}");
        }
    }

    #[test]
    fn translation_invariance_is_exact_for_dyadic_inputs() {
        // Values on a 1/64 grid with an integer shift keep every subtraction
        // exact in binary floating point, so costs match bit for bit.
        let mut rng = Rng::new(75);
        let snap = |t: Tensor<f64>| t.map(|v| (v * 64.0).round() / 64.0);
        let x = snap(points(&mut rng, 8, 2, 1.0));
        let y = snap(points(&mut rng, 8, 2, 1.0));
        let shift = |t: &Tensor<f64>| t.map(|v| v + 3.0);
        let before = solve_exact(&cost_matrix(&x, &y, CostFn::Euclidean).unwrap(), CostFn::Euclidean)
            .unwrap()
            .cost;
        let after = solve_exact(
            &cost_matrix(&shift(&x), &shift(&y), CostFn::Euclidean).unwrap(),
            CostFn::Euclidean,
        )
        .unwrap()
        .cost;
        assert_eq!(before, after, "shared translation must not change the cost");
    }

    #[test]
    fn cost_is_monotone_in_entry_decreases() {
        let mut rng = Rng::new(76);
        for _ in 0..10 {
            let mut c = Tensor::zeros(&[5, 5]);
            for v in c.data_mut() {
                *v = 1.0 + rng.uniform() * 9.0;
            }
            let base = solve_exact(&c, CostFn::Euclidean).unwrap().cost;
            let i = rng.below(5) as usize;
            let j = rng.below(5) as usize;
            c.data_mut()[i * 5 + j] *= 0.5;
            let lowered = solve_exact(&c, CostFn::Euclidean).unwrap().cost;
            assert!(lowered <= base + 1e-12, "decreasing an entry must not raise the optimum");
        }
    }
}
