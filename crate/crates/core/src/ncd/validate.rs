use serde::Serialize;

use crate::linalg::{spectral_norm_est, DenseMatrix, ROW_SUM_TOL};
use crate::ncd::NcdChain;

/// Off-diagonal blocks may exceed `epsilon` by this factor after the row guard.
pub const OFFDIAG_NORM_SLACK: f64 = 1.5;

#[derive(Debug, Clone, Serialize)]
pub struct ChainDiagnostics {
    pub max_row_sum_deviation: f64,
    pub min_entry: f64,
    pub strongly_connected: bool,
    /// `(i, j, ||P_ij||_2)` for every off-diagonal block.
    pub offdiag_norms: Vec<(usize, usize, f64)>,
    pub epsilon: f64,
}

impl ChainDiagnostics {
    pub fn row_sums_ok(&self) -> bool {
        self.max_row_sum_deviation <= ROW_SUM_TOL
    }

    pub fn nonnegative(&self) -> bool {
        self.min_entry >= 0.0
    }

    pub fn offdiag_norms_ok(&self) -> bool {
        let cap = OFFDIAG_NORM_SLACK * self.epsilon;
        self.offdiag_norms.iter().all(|&(_, _, s)| s <= cap)
    }

    /// Names of the checks that failed.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.row_sums_ok() {
            out.push("row sums");
        }
        if !self.nonnegative() {
            out.push("min entry");
        }
        if !self.strongly_connected {
            out.push("strong connectivity");
        }
        if !self.offdiag_norms_ok() {
            out.push("off-diagonal norms");
        }
        out
    }

    pub fn passes(&self) -> bool {
        self.failures().is_empty()
    }
}

pub fn validate_chain(chain: &NcdChain) -> ChainDiagnostics {
    let p = chain.p();
    let max_row_sum_deviation = (0..p.rows())
        .map(|i| (p.row(i).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let min_entry = p.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let m = chain.m();
    let mut offdiag_norms = Vec::with_capacity(m * m.saturating_sub(1));
    for i in 0..m {
        for j in 0..m {
            if i != j {
                offdiag_norms.push((i, j, spectral_norm_est(&chain.block(i, j).to_dense())));
            }
        }
    }
    ChainDiagnostics {
        max_row_sum_deviation,
        min_entry,
        strongly_connected: is_strongly_connected(p),
        offdiag_norms,
        epsilon: chain.epsilon(),
    }
}

/// Whether the nonzero pattern of `p` is a strongly connected digraph.
///
/// Vertex 0 must reach every vertex along edges and along reversed edges.
pub fn is_strongly_connected(p: &DenseMatrix) -> bool {
    let n = p.rows();
    if n == 0 {
        return false;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if forward { p[(u, v)] } else { p[(v, u)] };
                if w != 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}
