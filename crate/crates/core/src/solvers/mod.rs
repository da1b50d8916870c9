//! Aggregation-disaggregation solvers for NCD chains.
//!
//! All three algorithms share one outer loop. Each outer iteration
//!
//! 1. normalizes every block of the current estimate `pi`,
//! 2. builds the aggregation matrix `R_ij = pi_hat_i P_ij 1`,
//! 3. solves `s R = s` for the aggregate distribution,
//! 4. forms `z_i = s_i pi_hat_i`,
//! 5. disaggregates, which is where the algorithms differ,
//! 6. tests for convergence.
//!
//! [`Algorithm::Kms`] runs Step 5 as a backward block Gauss-Seidel sweep
//! with fp64 LU. [`Algorithm::Alg1`] solves the same block systems by
//! iterative refinement with reduced-precision factors chosen per block.
//! [`Algorithm::Alg2`] applies a block-Jacobi preconditioned Richardson
//! iteration to the forward splitting system.

mod mixed;
mod outer;
mod richardson;
mod steps;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ncd::BlockPartition;
use crate::precision::PrecisionLevel;

pub use mixed::{
    iterative_refinement, select_precision, select_precision_detailed, IrOutcome, PrecisionChoice,
    IR_PROGRESS_FACTOR, IR_STALL_LIMIT,
};
pub use outer::{solve, Solver};
pub use richardson::{
    inner_tolerance, kt_schedule, richardson_precond, RichardsonOutcome, DIVERGENCE_FACTOR,
    INNER_TOL_FLOOR, KT_CAP,
};
pub use steps::{
    build_aggregation_matrix, hadamard_coupling, kms_step5_full, normalize_blocks,
    shifted_block_transpose, solve_aggregated, solve_aggregated_charged, CouplingSums,
};

/// A length-`n` vector viewed block by block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    partition: BlockPartition,
    values: Vec<f64>,
}

impl BlockVector {
    pub fn new(partition: BlockPartition, values: Vec<f64>) -> Result<Self> {
        if values.len() != partition.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a partition of size {}",
                values.len(),
                partition.n()
            )));
        }
        Ok(BlockVector { partition, values })
    }

    pub fn zeros(partition: BlockPartition) -> Self {
        let n = partition.n();
        BlockVector {
            partition,
            values: vec![0.0; n],
        }
    }

    /// The uniform distribution `1/n`.
    pub fn uniform(partition: BlockPartition) -> Self {
        let n = partition.n();
        BlockVector {
            partition,
            values: vec![1.0 / n as f64; n],
        }
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn m(&self) -> usize {
        self.partition.m()
    }

    pub fn n(&self) -> usize {
        self.partition.n()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.values[self.partition.range(i)]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.partition.range(i);
        &mut self.values[r]
    }

    pub fn block_norm_1(&self, i: usize) -> f64 {
        self.block(i).iter().map(|v| v.abs()).sum()
    }

    pub fn norm_1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Kms,
    Alg1,
    Alg2,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Kms, Algorithm::Alg1, Algorithm::Alg2];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Kms => "kms",
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
        }
    }

    /// Step 3 mode used unless overridden.
    pub fn default_step3(self) -> Step3Mode {
        match self {
            Algorithm::Alg1 => Step3Mode::Mixed,
            Algorithm::Kms | Algorithm::Alg2 => Step3Mode::FullPrecision,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step3Mode {
    FullPrecision,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Initial {
    #[default]
    Uniform,
    Given(BlockVector),
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Threshold on `u(L) kappa ||A||` for precision selection.
    pub ir_theta: f64,
    pub ir_max_steps: usize,
    /// Inner Richardson steps allowed in the first outer iteration.
    pub ri_k0: usize,
    /// Geometric growth of the inner step budget.
    pub ri_growth: f64,
    /// Precision of the Richardson preconditioner factors.
    pub ri_precision: PrecisionLevel,
    /// Overrides the algorithm's own Step 3 mode.
    pub step3_mode: Option<Step3Mode>,
    pub initial: Initial,
    /// Replaces the inner Richardson iteration by an exact block solve.
    pub ri_exact_inner: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            outer_tol: 1e-10,
            max_outer: 100,
            ir_theta: 1e-2,
            ir_max_steps: 50,
            ri_k0: 10,
            ri_growth: 2.0,
            ri_precision: PrecisionLevel::Fp32,
            step3_mode: None,
            initial: Initial::Uniform,
            ri_exact_inner: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > 0.0) {
            return Err(Error::InvalidArgument("outer_tol must be positive".into()));
        }
        if !(self.ri_growth >= 1.0) {
            return Err(Error::InvalidArgument("ri_growth must be at least 1".into()));
        }
        if self.ri_k0 < 1 {
            return Err(Error::InvalidArgument("ri_k0 must be at least 1".into()));
        }
        if !(self.ir_theta > 0.0) {
            return Err(Error::InvalidArgument("ir_theta must be positive".into()));
        }
        Ok(())
    }
}

/// `R` with its stationary vector `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationSystem {
    pub r: crate::linalg::DenseMatrix,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `||pi - pi P||_1`.
    pub residual: f64,
    /// `||pi^(t) - pi^(t-1)||_1`.
    pub step_change: f64,
    /// Inner iterations per block; a single global count for Richardson.
    pub inner_iterations: Vec<usize>,
    /// Precision of the factors used at Step 5, per block.
    pub step5_levels: Vec<PrecisionLevel>,
    pub step3_level: PrecisionLevel,
    /// Flops charged during this iteration, per step.
    pub step_flops: [u64; crate::costmodel::STEPS],
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub algorithm: Algorithm,
    pub pi: BlockVector,
    pub outer_iterations: usize,
    pub converged: bool,
    /// `||pi - pi P||_1` of the returned `pi`.
    pub residual: f64,
    pub trace: Vec<IterationRecord>,
}

impl SolveResult {
    pub fn inner_iterations_total(&self) -> usize {
        self.trace.iter().flat_map(|r| &r.inner_iterations).sum()
    }

    /// Distinct Step 5 precisions, cheapest first, joined by `+`.
    pub fn step5_precision_summary(&self) -> String {
        let mut levels: Vec<PrecisionLevel> = self.trace.iter().flat_map(|r| r.step5_levels.iter().copied()).collect();
        levels.sort();
        levels.dedup();
        if levels.is_empty() {
            return PrecisionLevel::Fp64.to_string();
        }
        levels.iter().map(|l| l.name()).collect::<Vec<_>>().join("+")
    }
}
