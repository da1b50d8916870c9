//! Block-Jacobi preconditioned Richardson iteration on `(D^T - U^T) x = b`.
//!
//! With `I - P = D - L - U` split into block diagonal, strictly lower and
//! strictly upper parts, row `i` of the system reads
//! `x_i (I - P_ii) - sum_{j<i} x_j P_ji = b_i`. The preconditioner `M = D^T`
//! is applied through per-block LU factors of `(I - P_ii)^T`.

use crate::costmodel::{flops_matvec, flops_trisolve_pair, flops_vector, CostLedger};
use crate::error::{Error, Result};
use crate::linalg::{lu_solve_scaled, norm_1, LuFactors};
use crate::ncd::NcdChain;
use crate::precision::PrecisionLevel::Fp64;
use crate::solvers::SolverOptions;

/// Hard cap on inner steps per outer iteration.
pub const KT_CAP: usize = 10_000;
/// Floor of the inner tolerance schedule.
pub const INNER_TOL_FLOOR: f64 = 1e-14;
/// The iteration is declared divergent once `||r||_1 > DIVERGENCE_FACTOR ||b||_1`.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// Inner step budget `floor(k0 growth^(t-1))`, capped at [`KT_CAP`].
pub fn kt_schedule(t: usize, opts: &SolverOptions) -> usize {
    let t = t.max(1);
    let k = opts.ri_k0 as f64 * opts.ri_growth.powf((t - 1) as f64);
    if k >= KT_CAP as f64 {
        KT_CAP
    } else {
        k.floor() as usize
    }
}

/// Relative inner tolerance `max(epsilon^t, 1e-14)`.
pub fn inner_tolerance(t: usize, epsilon: f64) -> f64 {
    epsilon.powf(t as f64).max(INNER_TOL_FLOOR)
}

#[derive(Debug, Clone)]
pub struct RichardsonOutcome {
    pub x: Vec<f64>,
    pub steps: usize,
    /// 1-norm of the last evaluated residual.
    pub residual_1norm: f64,
}

/// `b - (D^T - U^T) x` in row form: `r_i = b_i - x_i + sum_{j<=i} x_j P_ji`.
pub(crate) fn splitting_residual(chain: &NcdChain, b: &[f64], x: &[f64], ledger: &mut CostLedger) -> Vec<f64> {
    let part = chain.partition();
    let mut r = vec![0.0; chain.n()];
    for i in 0..part.m() {
        let ri = part.range(i);
        let out = &mut r[ri.clone()];
        for ((o, &bi), &xi) in out.iter_mut().zip(&b[ri.clone()]).zip(&x[ri.clone()]) {
            *o = bi - xi;
        }
        let ni = ri.len() as u64;
        for j in 0..=i {
            let nj = part.size(j) as u64;
            chain.block(j, i).vec_mul_acc(&x[part.range(j)], out);
            ledger.charge(5, "ri residual", flops_matvec(nj, ni), Fp64, nj * ni * 8);
        }
    }
    r
}

/// Richardson iteration from `x_0 = 0`, stopping after `k_max` steps or once
/// `||r||_1 <= inner_tol ||b||_1`.
pub fn richardson_precond(
    chain: &NcdChain,
    rhs: &[f64],
    k_max: usize,
    inner_tol: f64,
    precond: &[LuFactors],
) -> Result<RichardsonOutcome> {
    richardson_charged(chain, rhs, k_max, inner_tol, precond, &mut CostLedger::new())
}

pub(crate) fn richardson_charged(
    chain: &NcdChain,
    rhs: &[f64],
    k_max: usize,
    inner_tol: f64,
    precond: &[LuFactors],
    ledger: &mut CostLedger,
) -> Result<RichardsonOutcome> {
    let part = chain.partition();
    if rhs.len() != chain.n() || precond.len() != part.m() {
        return Err(Error::DimensionMismatch(format!(
            "rhs of length {} and {} preconditioner blocks for a chain with n = {}, m = {}",
            rhs.len(),
            precond.len(),
            chain.n(),
            part.m()
        )));
    }
    if let Some(v) = rhs.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite right-hand side entry {v}")));
    }
    let n = chain.n() as u64;
    let bnorm = norm_1(rhs);
    let mut x = vec![0.0; chain.n()];
    let mut r = rhs.to_vec();
    let mut rnorm = bnorm;
    let mut steps = 0;
    while rnorm > inner_tol * bnorm && steps < k_max {
        for (i, f) in precond.iter().enumerate() {
            let range = part.range(i);
            let y = lu_solve_scaled(f, &r[range.clone()], f.level());
            let ni = range.len() as u64;
            ledger.charge(5, "ri precond", flops_trisolve_pair(ni), f.level(), ni * ni * f.level().storage_bytes());
            x[range].iter_mut().zip(&y).for_each(|(xi, yi)| *xi += yi);
        }
        ledger.charge(5, "ri update", flops_vector(n), Fp64, n * 8);
        steps += 1;
        if steps == k_max {
            break;
        }
        r = splitting_residual(chain, rhs, &x, ledger);
        rnorm = norm_1(&r);
        ledger.charge(5, "ri norm", flops_vector(n), Fp64, n * 8);
        if !(rnorm <= DIVERGENCE_FACTOR * bnorm) {
            return Err(Error::Divergence { iteration: steps });
        }
    }
    Ok(RichardsonOutcome {
        x,
        steps,
        residual_1norm: rnorm,
    })
}
