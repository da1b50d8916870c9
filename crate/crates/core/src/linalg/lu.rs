use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::precision::{cast_matrix, round_to, PrecisionLevel};

/// Partial-pivoting LU factors `P A = L U`, stored at `level`.
///
/// `packed` overlays the unit lower factor (strictly below the diagonal) and
/// the upper factor. `pivots[i]` is the row of `A` that ended up in row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LuFactors {
    n: usize,
    packed: DenseMatrix,
    pivots: Vec<usize>,
    level: PrecisionLevel,
}

// Monomorphizes the hot loops for each rounding mode so fp64 runs without
// per-operation dispatch.
macro_rules! with_rounding {
    ($level:expr, $r:ident => $body:expr) => {
        match $level {
            PrecisionLevel::Fp64 => {
                let $r = |x: f64| x;
                $body
            }
            PrecisionLevel::Fp32 => {
                let $r = |x: f64| x as f32 as f64;
                $body
            }
            PrecisionLevel::Fp16 => {
                let $r = |x: f64| round_to(x, PrecisionLevel::Fp16);
                $body
            }
            PrecisionLevel::Bf16 => {
                let $r = |x: f64| round_to(x, PrecisionLevel::Bf16);
                $body
            }
        }
    };
}


/// Factors `a` with every operation rounded to `level`.
///
/// The pivot is the first row holding the largest magnitude in the current
/// column. Fails with [`Error::Singular`] when that magnitude is zero.
pub fn lu_factor(a: &DenseMatrix, level: PrecisionLevel) -> Result<LuFactors> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let mut packed = cast_matrix(a, level)?;
    let n = a.rows();
    let mut pivots: Vec<usize> = (0..n).collect();
    with_rounding!(level, r => factor_in_place(&mut packed, &mut pivots, r))?;
    Ok(LuFactors {
        n,
        packed,
        pivots,
        level,
    })
}

fn factor_in_place(lu: &mut DenseMatrix, pivots: &mut [usize], r: impl Fn(f64) -> f64) -> Result<()> {
    let n = lu.rows();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 {
            return Err(Error::Singular { column: k });
        }
        lu.swap_rows(k, p);
        pivots.swap(k, p);

        let data = lu.as_mut_slice();
        let (top, bottom) = data.split_at_mut((k + 1) * n);
        let pivot_row = &top[k * n..];
        let pivot = pivot_row[k];
        for row in bottom.chunks_exact_mut(n) {
            let l = r(row[k] / pivot);
            row[k] = l;
            if l == 0.0 {
                continue;
            }
            for (x, &u) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                *x = r(*x - r(l * u));
            }
        }
    }
    Ok(())
}

impl LuFactors {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn level(&self) -> PrecisionLevel {
        self.level
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn packed(&self) -> &DenseMatrix {
        &self.packed
    }

    /// Smallest pivot magnitude on the diagonal of `U`.
    pub fn min_abs_pivot(&self) -> f64 {
        (0..self.n)
            .map(|i| self.packed[(i, i)].abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Solves `A x = b` at the factors' own level.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        lu_solve(self, b, self.level)
    }

    /// Solves `A^T x = b` at the factors' own level.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "rhs length must match the factorization");
        let n = self.n;
        let lu = &self.packed;
        let mut w: Vec<f64> = b.iter().map(|&v| round_to(v, self.level)).collect();
        with_rounding!(self.level, r => {
            // U^T w = b, forward.
            for i in 0..n {
                let mut acc = w[i];
                for j in 0..i {
                    acc = r(acc - r(lu[(j, i)] * w[j]));
                }
                w[i] = r(acc / lu[(i, i)]);
            }
            // L^T v = w, backward with unit diagonal.
            for i in (0..n).rev() {
                let mut acc = w[i];
                for j in i + 1..n {
                    acc = r(acc - r(lu[(j, i)] * w[j]));
                }
                w[i] = acc;
            }
        });
        let mut x = vec![0.0; n];
        for (i, &p) in self.pivots.iter().enumerate() {
            x[p] = w[i];
        }
        x
    }
}

/// Permuted forward and back substitution with every operation rounded to
/// `level`. The right-hand side is first rounded to `level`.
pub fn lu_solve(f: &LuFactors, b: &[f64], level: PrecisionLevel) -> Vec<f64> {
    assert_eq!(b.len(), f.n, "rhs length must match the factorization");
    let n = f.n;
    let lu = &f.packed;
    let mut y: Vec<f64> = f.pivots.iter().map(|&p| round_to(b[p], level)).collect();
    with_rounding!(level, r => {
        for i in 0..n {
            let row = lu.row(i);
            let mut acc = y[i];
            for j in 0..i {
                acc = r(acc - r(row[j] * y[j]));
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let row = lu.row(i);
            let mut acc = y[i];
            for j in i + 1..n {
                acc = r(acc - r(row[j] * y[j]));
            }
            y[i] = r(acc / row[i]);
        }
    });
    y
}

/// [`lu_solve`] with `b` scaled by a power of two so its largest entry is
/// near one. Keeps small residuals out of the subnormal range of the
/// narrow formats; the scaling itself is exact.
pub fn lu_solve_scaled(f: &LuFactors, b: &[f64], level: PrecisionLevel) -> Vec<f64> {
    let big = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if big == 0.0 || !big.is_finite() {
        return lu_solve(f, b, level);
    }
    let e = big.log2().floor() as i32;
    let down = 2f64.powi(-e);
    let up = 2f64.powi(e);
    let scaled: Vec<f64> = b.iter().map(|v| v * down).collect();
    let mut y = lu_solve(f, &scaled, level);
    y.iter_mut().for_each(|v| *v *= up);
    y
}
