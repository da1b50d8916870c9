use crate::error::{Error, Result};
use crate::linalg::{dot, norm_1, norm_2, DenseMatrix};

pub const SPECTRAL_NORM_TOL: f64 = 1e-8;
pub const SPECTRAL_NORM_MAX_ITERS: usize = 500;
pub const EIGENPAIR_TOL: f64 = 1e-12;
pub const EIGENPAIR_MAX_ITERS: usize = 100_000;
pub const DEFLATED_TOL: f64 = 1e-8;
pub const DEFLATED_MAX_ITERS: usize = 20_000;

/// Largest singular value via power iteration on `A^T A`, started from the
/// normalized all-ones vector.
pub fn spectral_norm_est(a: &DenseMatrix) -> f64 {
    let (rows, cols) = (a.rows(), a.cols());
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let view = a.full_view();
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut lambda_prev = f64::NAN;
    let mut lambda = 0.0;
    for _ in 0..SPECTRAL_NORM_MAX_ITERS {
        let w = a.mul_vec(&v);
        lambda = dot(&w, &w);
        let mut u = vec![0.0; cols];
        view.vec_mul_acc(&w, &mut u);
        let un = norm_2(&u);
        if un == 0.0 {
            return lambda.sqrt();
        }
        v.iter_mut().zip(&u).for_each(|(vi, ui)| *vi = ui / un);
        if (lambda - lambda_prev).abs() < SPECTRAL_NORM_TOL * lambda {
            break;
        }
        lambda_prev = lambda;
    }
    // One more Rayleigh quotient with the final iterate.
    let w = a.mul_vec(&v);
    lambda.max(dot(&w, &w)).sqrt()
}

/// Dominant eigenvalue and left eigenvector of a nonnegative irreducible
/// matrix by left power iteration normalized in the 1-norm.
pub fn dominant_left_eigenpair(a: &DenseMatrix) -> Result<(f64, Vec<f64>)> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut v = vec![1.0 / n as f64; n];
    let mut lambda_prev = f64::NAN;
    for _ in 0..EIGENPAIR_MAX_ITERS {
        let w = a.vec_mul(&v);
        let lambda = norm_1(&w);
        if lambda == 0.0 {
            return Ok((0.0, v));
        }
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / lambda);
        if (lambda - lambda_prev).abs() <= EIGENPAIR_TOL * lambda {
            return Ok((lambda, v));
        }
        lambda_prev = lambda;
    }
    Err(Error::NoConvergence {
        iterations: EIGENPAIR_MAX_ITERS,
    })
}

/// Dominant right eigenvector (`A x = lambda x`), 1-norm normalized.
fn dominant_right_vector(a: &DenseMatrix) -> Result<Vec<f64>> {
    let n = a.rows();
    let mut x = vec![1.0 / n as f64; n];
    let mut lambda_prev = f64::NAN;
    for _ in 0..EIGENPAIR_MAX_ITERS {
        let w = a.mul_vec(&x);
        let lambda = norm_1(&w);
        if lambda == 0.0 {
            return Ok(x);
        }
        x.iter_mut().zip(&w).for_each(|(xi, wi)| *xi = wi / lambda);
        if (lambda - lambda_prev).abs() <= EIGENPAIR_TOL * lambda {
            return Ok(x);
        }
        lambda_prev = lambda;
    }
    Err(Error::NoConvergence {
        iterations: EIGENPAIR_MAX_ITERS,
    })
}

/// Modulus of the subdominant eigenvalue of a nonnegative irreducible matrix.
///
/// Deflates the dominant pair (`A - lambda x v / (v x)`) and runs power
/// iteration on the remainder. The growth rate is measured over two steps so
/// that real eigenvalue pairs of opposite sign do not stall the estimate.
pub fn subdominant_modulus(a: &DenseMatrix, lambda: f64, left: &[f64]) -> Result<f64> {
    let n = a.rows();
    if n < 2 {
        return Ok(0.0);
    }
    let right = dominant_right_vector(a)?;
    let vx = dot(left, &right);
    let mut b = a.clone();
    for i in 0..n {
        let scale = lambda * right[i] / vx;
        for (bij, lj) in b.row_mut(i).iter_mut().zip(left) {
            *bij -= scale * lj;
        }
    }

    let mut q: Vec<f64> = (0..n)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + i as f64 / n as f64)
        })
        .collect();
    let qn = norm_2(&q);
    q.iter_mut().for_each(|v| *v /= qn);
    let mut mu_prev = f64::NAN;
    for _ in 0..DEFLATED_MAX_ITERS {
        let w1 = b.vec_mul(&q);
        let w2 = b.vec_mul(&w1);
        let n2 = norm_2(&w2);
        let mu = n2.sqrt();
        if n2 == 0.0 || !n2.is_finite() {
            return Ok(0.0);
        }
        q.iter_mut().zip(&w2).for_each(|(qi, wi)| *qi = wi / n2);
        if (mu - mu_prev).abs() <= DEFLATED_TOL * mu.max(1e-300) {
            return Ok(mu);
        }
        mu_prev = mu;
    }
    Err(Error::NoConvergence {
        iterations: DEFLATED_MAX_ITERS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// One-sided Jacobi SVD, test-only oracle for the largest singular value.
    fn jacobi_max_singular_value(a: &DenseMatrix) -> f64 {
        let (m, n) = (a.rows(), a.cols());
        let mut u = a.clone();
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in p + 1..n {
                    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                    for i in 0..m {
                        alpha += u[(i, p)] * u[(i, p)];
                        beta += u[(i, q)] * u[(i, q)];
                        gamma += u[(i, p)] * u[(i, q)];
                    }
                    off = off.max(gamma.abs() / (alpha * beta).sqrt());
                    if gamma == 0.0 {
                        continue;
                    }
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let up = u[(i, p)];
                        let uq = u[(i, q)];
                        u[(i, p)] = c * up - s * uq;
                        u[(i, q)] = s * up + c * uq;
                    }
                }
            }
            if off < 1e-15 {
                break;
            }
        }
        (0..n)
            .map(|j| (0..m).map(|i| u[(i, j)] * u[(i, j)]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    #[test]
    fn spectral_norm_simple_cases() {
        assert!((spectral_norm_est(&DenseMatrix::identity(3)) - 1.0).abs() < 1e-8);
        assert!((spectral_norm_est(&DenseMatrix::from_diag(&[3.0, 1.0])) - 3.0).abs() < 1e-8);
        assert_eq!(spectral_norm_est(&DenseMatrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn spectral_norm_matches_jacobi_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let a = DenseMatrix::from_fn(10, 10, |_, _| rng.random::<f64>());
            let est = spectral_norm_est(&a);
            let oracle = jacobi_max_singular_value(&a);
            assert!((est - oracle).abs() <= 1e-6 * oracle, "{est} vs {oracle}");
        }
        // Rectangular blocks occur between unequal partitions.
        let a = DenseMatrix::from_fn(4, 7, |_, _| rng.random::<f64>());
        let oracle = jacobi_max_singular_value(&a.transpose());
        assert!((spectral_norm_est(&a) - oracle).abs() <= 1e-6 * oracle);
    }

    #[test]
    fn eigenpair_cases() {
        let (l, v) = dominant_left_eigenpair(&DenseMatrix::identity(4)).unwrap();
        assert_eq!(l, 1.0);
        assert!(v.iter().all(|&x| (x - 0.25).abs() < 1e-15));

        let (l, v) = dominant_left_eigenpair(&DenseMatrix::from_diag(&[0.5, 0.25])).unwrap();
        assert!((l - 0.5).abs() < 1e-11);
        assert!((v[0] - 1.0).abs() < 1e-10 && v[1] < 1e-10);
    }

    #[test]
    fn subdominant_of_two_state_chain() {
        // Eigenvalues of [[0.9,0.1],[0.2,0.8]] are 1 and 0.7.
        let p = DenseMatrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]);
        let (l, v) = dominant_left_eigenpair(&p).unwrap();
        let mu = subdominant_modulus(&p, l, &v).unwrap();
        assert!((mu - 0.7).abs() < 1e-6, "{mu}");
        // Periodic chain: eigenvalues 1 and -1.
        let q = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let (l, v) = dominant_left_eigenpair(&q).unwrap();
        assert!((subdominant_modulus(&q, l, &v).unwrap() - 1.0).abs() < 1e-6);
    }
}
