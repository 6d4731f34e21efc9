//! Small dense symmetric linear algebra: cyclic Jacobi eigendecomposition
//! and the PSD matrix square root built on it. Dimensions here are feature
//! widths (tens to a few hundred), so O(d³) with good constants is plenty.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` with `a = V · diag(λ) · Vᵀ`;
/// eigenvalues are sorted descending and `V`'s columns match that order.
pub fn sym_eig(a: &Tensor<f64>) -> Result<(Vec<f64>, Tensor<f64>)> {
    let [n, n2] = a.dims2()?;
    if n != n2 {
        return Err(Error::Shape(format!("sym_eig wants a square matrix, got {n}×{n2}")));
    }
    let mut m: Vec<f64> = a.data().to_vec();
    // Symmetry tolerance relative to the largest entry.
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[i * n + j] - m[j * n + i]).abs() > 1e-8 * scale.max(1.0) {
                return Err(Error::Shape(format!(
                    "sym_eig input is not symmetric at ({i},{j}): {} vs {}",
                    m[i * n + j],
                    m[j * n + i]
                )));
            }
        }
    }
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    // Sweep until all off-diagonal mass is negligible.
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() <= 1e-14 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                // Classic Jacobi rotation choosing the smaller angle root.
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    order.sort_by(|&a, &b| diag[b].partial_cmp(&diag[a]).expect("finite eigenvalues"));
    let eigvals: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vecs = Tensor::zeros(&[n, n]);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vecs.data_mut()[row * n + col] = v[row * n + src];
        }
    }
    Ok((eigvals, vecs))
}

/// Largest singular value of an arbitrary 2-D matrix: √λ_max(AᵀA).
/// Serves as the independent oracle for power-iteration estimates.
pub fn spectral_norm_oracle(a: &Tensor<f64>) -> Result<f64> {
    let ata = crate::tensor::matmul(&a.t2()?, a)?;
    let (mut eig, _) = sym_eig(&ata)?;
    let top = eig.drain(..).next().unwrap_or(0.0).max(0.0);
    Ok(top.sqrt())
}

/// Symmetric PSD square root via eigendecomposition. Eigenvalues below
/// `clamp_rel · λ_max` (default 1e-10 when `clamp_rel` is None) are clamped
/// to zero before the square root so round-off negatives cannot poison it.
pub fn sqrtm_psd(a: &Tensor<f64>, clamp_rel: Option<f64>) -> Result<Tensor<f64>> {
    let [n, _] = a.dims2()?;
    let (eig, v) = sym_eig(a)?;
    let clamp = clamp_rel.unwrap_or(1e-10) * eig.first().copied().unwrap_or(0.0).max(0.0);
    let roots: Vec<f64> = eig.iter().map(|&l| if l > clamp { l.sqrt() } else { 0.0 }).collect();
    // V · diag(√λ) · Vᵀ
    let mut scaled = v.clone();
    for row in 0..n {
        for col in 0..n {
            scaled.data_mut()[row * n + col] *= roots[col];
        }
    }
    crate::tensor::matmul(&scaled, &v.t2()?)
}

/// Sum of the square roots of the clamped eigenvalues — Tr(√A) for PSD A.
pub fn sqrtm_trace(a: &Tensor<f64>, clamp_rel: Option<f64>) -> Result<f64> {
    let (eig, _) = sym_eig(a)?;
    let clamp = clamp_rel.unwrap_or(1e-10) * eig.first().copied().unwrap_or(0.0).max(0.0);
    Ok(eig.iter().map(|&l| if l > clamp { l.sqrt() } else { 0.0 }).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::matmul;

    fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn diagonal_matrix_eigenvalues_are_the_diagonal() {
        let a = Tensor::from_vec(&[3, 3], vec![2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        let (eig, _) = sym_eig(&a).unwrap();
        assert_eq!(eig, vec![5.0, 2.0, 1.0], "diagonal eigenvalues, sorted descending");
    }

    #[test]
    fn reconstruction_from_eigenpairs() {
        let mut rng = Rng::new(17);
        let b = Tensor::<f64>::sample_normal(&mut rng, &[6, 6], 0.0, 1.0).unwrap();
        let a = matmul(&b, &b.t2().unwrap()).unwrap(); // symmetric PSD
        let (eig, v) = sym_eig(&a).unwrap();
        let mut scaled = v.clone();
        for row in 0..6 {
            for col in 0..6 {
                scaled.data_mut()[row * 6 + col] *= eig[col];
            }
        }
        let back = matmul(&scaled, &v.t2().unwrap()).unwrap();
        assert!(
            max_abs_diff(&a, &back) < 1e-10,
            "V·diag(λ)·Vᵀ must reconstruct the input, diff {}",
            max_abs_diff(&a, &back)
        );
    }

    #[test]
    fn sqrtm_squares_back() {
        let mut rng = Rng::new(23);
        let b = Tensor::<f64>::sample_normal(&mut rng, &[5, 5], 0.0, 1.0).unwrap();
        let a = matmul(&b, &b.t2().unwrap()).unwrap();
        let root = sqrtm_psd(&a, None).unwrap();
        let sq = matmul(&root, &root).unwrap();
        assert!(max_abs_diff(&a, &sq) < 1e-9, "√A·√A must equal A, diff {}", max_abs_diff(&a, &sq));
    }

    #[test]
    fn spectral_oracle_on_known_matrix() {
        // diag(3, 1) padded with a zero row: σ_max = 3.
        let a = Tensor::from_vec(&[3, 2], vec![3.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let s = spectral_norm_oracle(&a).unwrap();
        assert!((s - 3.0).abs() < 1e-12, "σ_max of diag(3,1) is 3, got {s}");
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(sym_eig(&a).is_err());
    }
}
