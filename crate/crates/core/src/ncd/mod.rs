//! NCD chain instances: construction, ingestion and validation.

mod assumptions;
mod generate;
mod mtx;
mod validate;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, MatrixView};

pub use assumptions::{ncd_assumption_report, AssumptionReport, BlockSpectrum, BLOCK_MASS_TAU};
pub use generate::{
    assemble_ncd_from_blocks, assemble_ncd_from_blocks_with, block_rng, generate_random_ncd,
    OFFDIAG_GUARD_TARGET, OFFDIAG_GUARD_THRESHOLD,
};
pub use mtx::{load_block_matrix_market, parse_matrix_market};
pub use validate::{is_strongly_connected, validate_chain, ChainDiagnostics, OFFDIAG_NORM_SLACK};

/// Block sizes `n_i` with their offsets `sigma_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    n: usize,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidArgument("partition needs at least one block".into()));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidArgument(format!("block {i} has size zero")));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut n = 0;
        for &s in &sizes {
            offsets.push(n);
            n += s;
        }
        Ok(BlockPartition { sizes, offsets, n })
    }

    /// `m` blocks of size `size` each.
    pub fn uniform(m: usize, size: usize) -> Result<Self> {
        Self::new(vec![size; m])
    }

    /// Number of blocks.
    pub fn m(&self) -> usize {
        self.sizes.len()
    }

    /// Total dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.sizes[i]
    }

    /// Block containing global index `k`.
    pub fn block_of(&self, k: usize) -> usize {
        match self.offsets.binary_search(&k) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Generated { seed: u64 },
    Assembled { paths: Vec<String>, seed: u64 },
    /// Built directly from a matrix by the caller.
    Manual,
}

/// Block-partitioned row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NcdChain {
    p: DenseMatrix,
    partition: BlockPartition,
    epsilon: f64,
    provenance: Provenance,
}

impl NcdChain {
    /// Wraps an existing matrix without checking stochasticity; use
    /// [`validate_chain`] for diagnostics.
    pub fn from_parts(
        p: DenseMatrix,
        partition: BlockPartition,
        epsilon: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::NotSquare {
                rows: p.rows(),
                cols: p.cols(),
            });
        }
        if p.rows() != partition.n() {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{} but partition covers {}",
                p.rows(),
                p.cols(),
                partition.n()
            )));
        }
        Ok(NcdChain {
            p,
            partition,
            epsilon,
            provenance,
        })
    }

    pub fn p(&self) -> &DenseMatrix {
        &self.p
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn m(&self) -> usize {
        self.partition.m()
    }

    pub fn n(&self) -> usize {
        self.partition.n()
    }

    /// View of block `P_ij`.
    pub fn block(&self, i: usize, j: usize) -> MatrixView<'_> {
        let (ri, rj) = (self.partition.range(i), self.partition.range(j));
        self.p.view(ri.start, rj.start, ri.len(), rj.len())
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.p
    }
}
