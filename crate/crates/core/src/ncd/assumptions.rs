use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dominant_left_eigenpair, stationary_oracle, subdominant_modulus, DenseMatrix};
use crate::ncd::NcdChain;

/// Smallest block mass regarded as bounded away from zero.
pub const BLOCK_MASS_TAU: f64 = 1e-3;

/// Spectral data of one diagonal block.
#[derive(Debug, Clone, Serialize)]
pub struct BlockSpectrum {
    /// Perron root `lambda_i1` of `P_ii`.
    pub lambda1: f64,
    /// `(1 - lambda_i1) / epsilon`.
    pub coupling_ratio: f64,
    /// `|lambda_i2|`, the largest modulus after deflating the Perron pair;
    /// `None` when the deflated power iteration did not settle.
    pub subdominant: Option<f64>,
    /// `1 / (1 - |lambda_i2|)`, a proxy for the gap bound on `(I - T_i)^{-1}`.
    pub gap_bound_proxy: Option<f64>,
    /// Why `subdominant` is missing.
    pub note: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct AssumptionReport {
    /// Per block; an `Err` records an eigen solve that did not converge.
    #[serde(serialize_with = "ser_blocks")]
    pub blocks: Vec<std::result::Result<BlockSpectrum, String>>,
    /// `1 - |mu_2(R)|` for the aggregation matrix built at the exact `pi`;
    /// `None` when the deflated power iteration did not settle.
    pub aggregation_gap: Option<f64>,
    pub block_masses: Vec<f64>,
    pub tau: f64,
}

fn ser_blocks<S: serde::Serializer>(
    blocks: &[std::result::Result<BlockSpectrum, String>],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(blocks.len()))?;
    for b in blocks {
        match b {
            Ok(v) => seq.serialize_element(v)?,
            Err(e) => seq.serialize_element(&ErrorEntry { error: e })?,
        }
    }
    seq.end()
}

#[derive(Serialize)]
struct ErrorEntry<'a> {
    error: &'a str,
}

impl AssumptionReport {
    /// Blocks whose mass falls below `tau`.
    pub fn light_blocks(&self) -> Vec<usize> {
        (0..self.block_masses.len())
            .filter(|&i| self.block_masses[i] < self.tau)
            .collect()
    }

    pub fn masses_bounded_below(&self) -> bool {
        self.light_blocks().is_empty()
    }
}

fn block_spectrum(block: &DenseMatrix, epsilon: f64) -> Result<BlockSpectrum> {
    let (lambda1, left) = dominant_left_eigenpair(block)?;
    let (subdominant, note) = match subdominant_modulus(block, lambda1, &left) {
        Ok(mu) => (Some(mu), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(BlockSpectrum {
        lambda1,
        coupling_ratio: (1.0 - lambda1) / epsilon,
        subdominant,
        gap_bound_proxy: subdominant.map(|mu| 1.0 / (1.0 - mu)),
        note,
    })
}

/// Aggregation matrix `R_ij = (pi_i / ||pi_i||_1) P_ij 1`.
pub(crate) fn aggregation_at(chain: &NcdChain, pi: &[f64]) -> DenseMatrix {
    let part = chain.partition();
    let m = part.m();
    let mut r = DenseMatrix::zeros(m, m);
    for i in 0..m {
        let ri = part.range(i);
        let mass: f64 = pi[ri.clone()].iter().sum();
        for (local, row) in ri.clone().enumerate() {
            let w = pi[ri.start + local] / mass;
            let prow = chain.p().row(row);
            for j in 0..m {
                let s: f64 = prow[part.range(j)].iter().sum();
                r.row_mut(i)[j] += w * s;
            }
        }
    }
    r
}

pub fn ncd_assumption_report(chain: &NcdChain) -> Result<AssumptionReport> {
    let part = chain.partition();
    let blocks = (0..chain.m())
        .map(|i| block_spectrum(&chain.block(i, i).to_dense(), chain.epsilon()).map_err(|e| e.in_block(i).to_string()))
        .collect();
    let pi = stationary_oracle(chain.p())?;
    let block_masses: Vec<f64> = (0..chain.m()).map(|i| pi[part.range(i)].iter().sum()).collect();
    if let Some(i) = block_masses.iter().position(|&w| w <= 0.0) {
        return Err(Error::ZeroBlock { block: i });
    }
    let aggregation_gap = if chain.m() == 1 {
        Some(1.0)
    } else {
        let r = aggregation_at(chain, &pi);
        let (mu1, s) = dominant_left_eigenpair(&r)?;
        subdominant_modulus(&r, mu1, &s).ok().map(|mu| 1.0 - mu)
    };
    Ok(AssumptionReport {
        blocks,
        aggregation_gap,
        block_masses,
        tau: BLOCK_MASS_TAU,
    })
}
