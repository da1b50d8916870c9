use crate::error::{Error, Result};
use crate::linalg::{lu_factor, DenseMatrix, LuFactors};
use crate::precision::PrecisionLevel;

/// Row sums of a transition matrix must be one within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Entries of the computed distribution below this magnitude are set to zero.
pub const CLAMP_BELOW: f64 = 1e-15;

/// `M = (I - P)^T` with its last row replaced by ones. `M pi^T = e_last`
/// characterizes the stationary vector of an irreducible `P`.
pub fn replacement_system(p: &DenseMatrix) -> DenseMatrix {
    let n = p.rows();
    let mut m = DenseMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - p[(j, i)]
    });
    m.row_mut(n - 1).iter_mut().for_each(|v| *v = 1.0);
    m
}

pub fn unit_last(n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[n - 1] = 1.0;
    e
}

/// Rejects numerically singular fp64 factors of the replacement system. Exact
/// zero pivots are rare in floating point, so a relative threshold is used.
pub(crate) fn check_replacement_factors(m: &DenseMatrix, f: &LuFactors) -> Result<()> {
    let n = m.rows();
    let threshold = n as f64 * f64::EPSILON * m.norm_inf();
    for k in 0..n {
        if f.packed()[(k, k)].abs() <= threshold {
            return Err(Error::Singular { column: k });
        }
    }
    Ok(())
}

/// Clamps tiny magnitudes and negatives to zero, then rescales to unit 1-norm.
pub fn clamp_and_normalize(v: &mut [f64]) {
    for x in v.iter_mut() {
        if x.abs() < CLAMP_BELOW || *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

pub fn check_row_stochastic(p: &DenseMatrix, tol: f64) -> Result<()> {
    for i in 0..p.rows() {
        let sum: f64 = p.row(i).iter().sum();
        if (sum - 1.0).abs() > tol || p.row(i).iter().any(|&v| v < 0.0) {
            return Err(Error::NotStochastic { row: i, sum });
        }
    }
    Ok(())
}

/// Full-precision stationary distribution used as ground truth.
///
/// Solves the replacement system by fp64 LU, applies one step of fp64
/// iterative refinement, clamps and renormalizes.
pub fn stationary_oracle(p: &DenseMatrix) -> Result<Vec<f64>> {
    if !p.is_square() {
        return Err(Error::NotSquare {
            rows: p.rows(),
            cols: p.cols(),
        });
    }
    check_row_stochastic(p, ROW_SUM_TOL)?;
    let n = p.rows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let m = replacement_system(p);
    let f = lu_factor(&m, PrecisionLevel::Fp64)?;
    check_replacement_factors(&m, &f)?;
    let b = unit_last(n);
    let mut pi = f.solve(&b);
    let mp = m.mul_vec(&pi);
    let r: Vec<f64> = b.iter().zip(&mp).map(|(bi, v)| bi - v).collect();
    let d = f.solve(&r);
    pi.iter_mut().zip(&d).for_each(|(x, dx)| *x += dx);
    clamp_and_normalize(&mut pi);
    Ok(pi)
}
