use crate::error::{Error, Result};
use crate::linalg::{norm_1, DenseMatrix, LuFactors};

/// Upper limit on Hager sweeps, each costing one solve with `A` and one with `A^T`.
pub const MAX_CONDEST_SWEEPS: usize = 5;

/// Estimated 1-norm condition number with the number of solves it took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondEstimate {
    pub kappa: f64,
    pub norm_1: f64,
    pub inv_norm_1: f64,
    pub solves: usize,
}

/// Hager's 1-norm estimator for `||A||_1 ||A^{-1}||_1`, using `f` for all
/// solves. The result is a lower bound on the true condition number up to the
/// accuracy of the factors, clamped below at one.
pub fn condest_1(a: &DenseMatrix, f: &LuFactors) -> Result<f64> {
    condest_1_detailed(a, f).map(|c| c.kappa)
}

pub fn condest_1_detailed(a: &DenseMatrix, f: &LuFactors) -> Result<CondEstimate> {
    let n = a.rows();
    if n != f.n() || !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, factors are {n}x{n}",
            a.rows(),
            a.cols(),
            n = f.n()
        )));
    }
    let anorm = a.norm_1();
    if n == 0 {
        return Ok(CondEstimate {
            kappa: 1.0,
            norm_1: 0.0,
            inv_norm_1: 0.0,
            solves: 0,
        });
    }

    let mut solves = 0;
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    for sweep in 0..MAX_CONDEST_SWEEPS {
        let y = f.solve(&x);
        solves += 1;
        let y_norm = norm_1(&y);
        if !y_norm.is_finite() {
            return Err(Error::Singular { column: 0 });
        }
        if sweep > 0 && y_norm <= est {
            break;
        }
        est = y_norm;
        let xi: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = f.solve_transpose(&xi);
        solves += 1;
        let (j, zmax) = z
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bj, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bj, bv) });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= ztx {
            break;
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        x[j] = 1.0;
    }

    // Higham's alternating test vector guards against Hager's known bad cases.
    if n > 1 {
        let alt: Vec<f64> = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign * (1.0 + i as f64 / (n - 1) as f64)
            })
            .collect();
        let y = f.solve(&alt);
        solves += 1;
        let alt_est = 2.0 * norm_1(&y) / (3.0 * n as f64);
        if alt_est.is_finite() && alt_est > est {
            est = alt_est;
        }
    }

    Ok(CondEstimate {
        kappa: (anorm * est).max(1.0),
        norm_1: anorm,
        inv_norm_1: est,
        solves,
    })
}
