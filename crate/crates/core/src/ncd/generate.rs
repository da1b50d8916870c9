//! Random NCD instances.
//!
//! Every block `(i, j)` draws its entries from its own ChaCha8 stream: the
//! generator is seeded with `seed` and switched to stream `i * m + j`, then
//! fills the block in row-major order with `U[0, 1)` samples. A block is
//! therefore reproducible regardless of the order blocks are filled in.
//!
//! Scaling pipeline applied after the fill:
//! 1. each off-diagonal block is scaled to spectral norm `epsilon`;
//! 2. a row whose off-diagonal mass reaches [`OFFDIAG_GUARD_THRESHOLD`] has
//!    those entries rescaled to total [`OFFDIAG_GUARD_TARGET`];
//! 3. each row of the diagonal block is scaled so the full row sums to one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm_est, DenseMatrix};
use crate::ncd::{is_strongly_connected, BlockPartition, NcdChain, Provenance};

pub const OFFDIAG_GUARD_THRESHOLD: f64 = 0.9;
pub const OFFDIAG_GUARD_TARGET: f64 = 0.8;

/// Stream for block `(i, j)` of an `m`-block chain.
pub fn block_rng(seed: u64, i: usize, j: usize, m: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((i * m + j) as u64);
    rng
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0, 0.5], got {epsilon}"
        )));
    }
    Ok(())
}

fn fill_block(p: &mut DenseMatrix, part: &BlockPartition, seed: u64, i: usize, j: usize) {
    let mut rng = block_rng(seed, i, j, part.m());
    let cols = part.range(j);
    for r in part.range(i) {
        for v in &mut p.row_mut(r)[cols.clone()] {
            *v = rng.random::<f64>();
        }
    }
}

pub fn generate_random_ncd(sizes: &[usize], epsilon: f64, seed: u64) -> Result<NcdChain> {
    check_epsilon(epsilon)?;
    let part = BlockPartition::new(sizes.to_vec())?;
    let n = part.n();
    let mut p = DenseMatrix::zeros(n, n);
    for i in 0..part.m() {
        for j in 0..part.m() {
            fill_block(&mut p, &part, seed, i, j);
        }
    }
    scale_to_ncd(&mut p, &part, epsilon)?;
    NcdChain::from_parts(p, part, epsilon, Provenance::Generated { seed })
}

/// Like [`assemble_ncd_from_blocks_with`] with zero-row repair enabled.
pub fn assemble_ncd_from_blocks(blocks: &[DenseMatrix], epsilon: f64, seed: u64) -> Result<NcdChain> {
    assemble_ncd_from_blocks_with(blocks, epsilon, seed, true)
}

/// Uses `|blocks[i]|` as the diagonal blocks and random off-diagonal blocks.
///
/// With `repair` set, a diagonal-block row that is entirely zero is replaced
/// by the uniform row `1/n_i` before scaling.
pub fn assemble_ncd_from_blocks_with(
    blocks: &[DenseMatrix],
    epsilon: f64,
    seed: u64,
    repair: bool,
) -> Result<NcdChain> {
    check_epsilon(epsilon)?;
    for (i, b) in blocks.iter().enumerate() {
        if !b.is_square() {
            return Err(Error::NotSquare {
                rows: b.rows(),
                cols: b.cols(),
            }
            .in_block(i));
        }
    }
    let part = BlockPartition::new(blocks.iter().map(DenseMatrix::rows).collect())?;
    let n = part.n();
    let mut p = DenseMatrix::zeros(n, n);
    for i in 0..part.m() {
        let ri = part.range(i);
        let ni = ri.len();
        for (local, r) in ri.clone().enumerate() {
            let src = blocks[i].row(local);
            let dst = &mut p.row_mut(r)[ri.clone()];
            let zero = src.iter().all(|&v| v == 0.0);
            if zero && repair {
                dst.iter_mut().for_each(|v| *v = 1.0 / ni as f64);
            } else {
                dst.iter_mut().zip(src).for_each(|(d, s)| *d = s.abs());
            }
        }
        for j in 0..part.m() {
            if i != j {
                fill_block(&mut p, &part, seed, i, j);
            }
        }
    }
    scale_to_ncd(&mut p, &part, epsilon)?;
    if !is_strongly_connected(&p) {
        return Err(Error::Reducible);
    }
    NcdChain::from_parts(
        p,
        part,
        epsilon,
        Provenance::Assembled {
            paths: Vec::new(),
            seed,
        },
    )
}

fn scale_to_ncd(p: &mut DenseMatrix, part: &BlockPartition, epsilon: f64) -> Result<()> {
    let m = part.m();
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let (ri, rj) = (part.range(i), part.range(j));
            let norm = spectral_norm_est(&p.submatrix(ri.start, rj.start, ri.len(), rj.len()));
            if norm == 0.0 {
                continue;
            }
            let scale = epsilon / norm;
            for r in ri {
                p.row_mut(r)[rj.clone()].iter_mut().for_each(|v| *v *= scale);
            }
        }
    }

    for i in 0..m {
        let ri = part.range(i);
        for r in ri.clone() {
            let row = p.row_mut(r);
            let mut offsum = 0.0;
            for (c, v) in row.iter().enumerate() {
                if !ri.contains(&c) {
                    offsum += v;
                }
            }
            if offsum >= OFFDIAG_GUARD_THRESHOLD {
                let scale = OFFDIAG_GUARD_TARGET / offsum;
                for (c, v) in row.iter_mut().enumerate() {
                    if !ri.contains(&c) {
                        *v *= scale;
                    }
                }
                offsum = OFFDIAG_GUARD_TARGET;
            }
            let diag = &mut row[ri.clone()];
            let diagsum: f64 = diag.iter().sum();
            if diagsum == 0.0 {
                return Err(Error::DegenerateRow { row: r });
            }
            let scale = (1.0 - offsum) / diagsum;
            diag.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(())
}
