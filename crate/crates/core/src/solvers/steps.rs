//! Steps 1 through 5 of the aggregation-disaggregation loop as standalone
//! operations. The `*_charged` forms append their work to a ledger.

use crate::costmodel::{flops_lu, flops_matvec, flops_trisolve_pair, flops_vector, CostLedger};
use crate::error::{Error, Result};
use crate::linalg::{
    check_replacement_factors, clamp_and_normalize, lu_factor, replacement_system, unit_last,
    DenseMatrix,
};
use crate::ncd::{BlockPartition, NcdChain};
use crate::precision::PrecisionLevel::{self, Fp64};
use crate::solvers::mixed::MixedSystem;
use crate::solvers::{BlockVector, SolverOptions, Step3Mode};

const F64_BYTES: u64 = 8;

/// Step 1: divides each block by its own 1-norm.
pub fn normalize_blocks(pi: &BlockVector) -> Result<BlockVector> {
    let mut out = pi.clone();
    for i in 0..pi.m() {
        let norm = pi.block_norm_1(i);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::ZeroBlock { block: i });
        }
        out.block_mut(i).iter_mut().for_each(|v| *v /= norm);
    }
    Ok(out)
}

/// `table[(k, j)]` is the mass row `k` of `P` sends into block `j`, so that
/// `R_ij = sum_{k in block i} pi_hat_k table[(k, j)]`.
#[derive(Debug, Clone)]
pub struct CouplingSums {
    table: DenseMatrix,
}

impl CouplingSums {
    pub fn new(chain: &NcdChain) -> Self {
        let part = chain.partition();
        let m = part.m();
        let mut table = DenseMatrix::zeros(chain.n(), m);
        for k in 0..chain.n() {
            let row = chain.p().row(k);
            for j in 0..m {
                table.row_mut(k)[j] = row[part.range(j)].iter().sum();
            }
        }
        CouplingSums { table }
    }

    /// Work done by [`CouplingSums::new`].
    pub fn setup_flops(n: usize) -> u64 {
        flops_matvec(n as u64, n as u64) / 2
    }

    pub fn aggregate(&self, pi_hat: &BlockVector) -> DenseMatrix {
        let part = pi_hat.partition();
        let m = part.m();
        let mut r = DenseMatrix::zeros(m, m);
        for i in 0..m {
            let out = r.row_mut(i);
            for (k, &w) in part.range(i).zip(pi_hat.block(i)) {
                for (o, &t) in out.iter_mut().zip(self.table.row(k)) {
                    *o += w * t;
                }
            }
        }
        r
    }
}

fn check_conformal(part: &BlockPartition, chain: &NcdChain) -> Result<()> {
    if part != chain.partition() {
        return Err(Error::DimensionMismatch(
            "vector partition differs from the chain's".into(),
        ));
    }
    Ok(())
}

/// Step 2: `R_ij = pi_hat_i P_ij 1`.
pub fn build_aggregation_matrix(pi_hat: &BlockVector, chain: &NcdChain) -> Result<DenseMatrix> {
    check_conformal(pi_hat.partition(), chain)?;
    Ok(CouplingSums::new(chain).aggregate(pi_hat))
}

/// Step 3: stationary vector of the aggregation matrix.
pub fn solve_aggregated(r: &DenseMatrix, mode: Step3Mode, opts: &SolverOptions) -> Result<Vec<f64>> {
    solve_aggregated_charged(r, mode, opts, &mut CostLedger::new()).map(|(s, _)| s)
}

/// As [`solve_aggregated`], also returning the precision of the factors that
/// produced `s`.
pub fn solve_aggregated_charged(
    r: &DenseMatrix,
    mode: Step3Mode,
    opts: &SolverOptions,
    ledger: &mut CostLedger,
) -> Result<(Vec<f64>, PrecisionLevel)> {
    if !r.is_square() {
        return Err(Error::NotSquare {
            rows: r.rows(),
            cols: r.cols(),
        });
    }
    let m = r.rows();
    if m == 1 {
        return Ok((vec![1.0], Fp64));
    }
    let a = replacement_system(r);
    let b = unit_last(m);
    let mm = m as u64;
    let (mut s, level) = match mode {
        Step3Mode::FullPrecision => {
            let f = lu_factor(&a, Fp64)?;
            check_replacement_factors(&a, &f)?;
            ledger.charge(3, "aggregate lu", flops_lu(mm), Fp64, mm * mm * F64_BYTES);
            ledger.charge(3, "aggregate solve", flops_trisolve_pair(mm), Fp64, mm * mm * F64_BYTES);
            (f.solve(&b), Fp64)
        }
        Step3Mode::Mixed => {
            let mut sys = MixedSystem::new(a, opts.ir_theta, 3, ledger)?;
            let (x, _) = sys.solve(&b, opts.ir_max_steps, 3, ledger)?;
            if sys.level() == Fp64 {
                check_replacement_factors(sys.matrix(), sys.factors())?;
            }
            (x, sys.level())
        }
    };
    ledger.charge(3, "normalize", flops_vector(mm), Fp64, mm * F64_BYTES);
    clamp_and_normalize(&mut s);
    if s.iter().sum::<f64>() == 0.0 {
        return Err(Error::Singular { column: m - 1 });
    }
    Ok((s, level))
}

/// Step 4: `z_i = s_i pi_hat_i`.
pub fn hadamard_coupling(s: &[f64], pi_hat: &BlockVector) -> Result<BlockVector> {
    if s.len() != pi_hat.m() {
        return Err(Error::DimensionMismatch(format!(
            "{} aggregate weights for {} blocks",
            s.len(),
            pi_hat.m()
        )));
    }
    let mut z = pi_hat.clone();
    for (i, &si) in s.iter().enumerate() {
        z.block_mut(i).iter_mut().for_each(|v| *v *= si);
    }
    Ok(z)
}

/// `(I - P_ii)^T`.
pub fn shifted_block_transpose(chain: &NcdChain, i: usize) -> DenseMatrix {
    let b = chain.block(i, i);
    DenseMatrix::from_fn(b.rows(), b.cols(), |r, c| {
        let delta = if r == c { 1.0 } else { 0.0 };
        delta - b.get(c, r)
    })
}

/// `out += sum_{j in js} x_j P_ji`, charging each block product to step 5.
pub(crate) fn add_coupling(
    chain: &NcdChain,
    i: usize,
    x: &BlockVector,
    js: impl Iterator<Item = usize>,
    out: &mut [f64],
    ledger: &mut CostLedger,
) {
    let ni = chain.partition().size(i) as u64;
    for j in js {
        let nj = chain.partition().size(j) as u64;
        chain.block(j, i).vec_mul_acc(x.block(j), out);
        ledger.charge(5, "coupling", flops_matvec(nj, ni), Fp64, nj * ni * F64_BYTES);
    }
}

/// Rescales `v` to unit 1-norm.
pub(crate) fn renormalize(v: &mut BlockVector, ledger: &mut CostLedger, step: u8) {
    let n = v.n() as u64;
    let s = v.norm_1();
    if s > 0.0 && s.is_finite() {
        v.values_mut().iter_mut().for_each(|x| *x /= s);
    }
    ledger.charge(step, "renormalize", flops_vector(n), Fp64, n * F64_BYTES);
}

/// Step 5 of the full-precision baseline: block Gauss-Seidel for
/// `i = m, ..., 1` on `pi_i (I - P_ii) = sum_{j<i} z_j P_ji + sum_{j>i} pi_j P_ji`,
/// with a fresh fp64 LU per block. The result is renormalized to unit 1-norm.
pub fn kms_step5_full(chain: &NcdChain, z: &BlockVector) -> Result<BlockVector> {
    kms_step5_charged(chain, z, &mut CostLedger::new())
}

pub(crate) fn kms_step5_charged(chain: &NcdChain, z: &BlockVector, ledger: &mut CostLedger) -> Result<BlockVector> {
    check_conformal(z.partition(), chain)?;
    let m = chain.m();
    let mut pi = BlockVector::zeros(chain.partition().clone());
    for i in (0..m).rev() {
        let ni = chain.partition().size(i);
        let mut rhs = vec![0.0; ni];
        add_coupling(chain, i, z, 0..i, &mut rhs, ledger);
        add_coupling(chain, i, &pi, i + 1..m, &mut rhs, ledger);
        let a = shifted_block_transpose(chain, i);
        let f = lu_factor(&a, Fp64).map_err(|e| e.in_block(i))?;
        let nb = ni as u64;
        ledger.charge(5, "block lu", flops_lu(nb), Fp64, nb * nb * F64_BYTES);
        ledger.charge(5, "block solve", flops_trisolve_pair(nb), Fp64, nb * nb * F64_BYTES);
        let x = f.solve(&rhs);
        pi.block_mut(i).copy_from_slice(&x);
    }
    renormalize(&mut pi, ledger, 5);
    Ok(pi)
}
