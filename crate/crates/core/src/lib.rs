//! Stationary distributions of nearly completely decomposable Markov chains.
//!
//! The crate provides three aggregation-disaggregation solvers sharing one
//! outer loop ([`solvers`]), an instance generator and Matrix Market reader
//! ([`ncd`]), software-emulated reduced-precision arithmetic ([`precision`])
//! on top of dense kernels ([`linalg`]), and a flop-count GPU time model
//! ([`costmodel`]) that every solver step reports to.
//!
//! ```
//! use ncd_core::{generate_random_ncd, solve, stationary_oracle, Algorithm, CostLedger, SolverOptions};
//!
//! let chain = generate_random_ncd(&[20, 20], 0.05, 1).unwrap();
//! let mut ledger = CostLedger::new();
//! let result = solve(&chain, Algorithm::Alg1, &SolverOptions::default(), &mut ledger).unwrap();
//! let exact = stationary_oracle(chain.p()).unwrap();
//! let err: f64 = result.pi.values().iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum();
//! assert!(result.converged && err < 1e-8);
//! ```

pub mod costmodel;
pub mod error;
pub mod linalg;
pub mod ncd;
pub mod precision;
pub mod solvers;

pub use costmodel::{h100_spec, simulate_time, CostLedger, GpuSpec, SimulatedTime};
pub use error::{Error, Result};
pub use linalg::{stationary_oracle, DenseMatrix, LuFactors};
pub use ncd::{
    assemble_ncd_from_blocks, generate_random_ncd, load_block_matrix_market, validate_chain,
    BlockPartition, NcdChain, Provenance,
};
pub use precision::PrecisionLevel;
pub use solvers::{solve, Algorithm, BlockVector, SolveResult, SolverOptions, Step3Mode};
