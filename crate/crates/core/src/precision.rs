//! Software emulation of reduced floating-point formats.
//!
//! Every reduced-precision kernel in this crate computes in native `f64` and
//! rounds each intermediate result to the target format with
//! round-to-nearest-ties-to-even. Subnormals of the target format are kept and
//! values beyond the largest finite number overflow to infinity. Because the
//! rounding is done by explicit integer arithmetic on the double-width value,
//! results are bit-identical on every platform.
//!
//! Double rounding (exact result to `f64`, then to the target) is innocuous
//! for `+ - * /` because 53 >= 2p + 2 for every emulated format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Floating-point format. Variants are ordered from cheapest to finest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionLevel {
    Bf16,
    Fp16,
    Fp32,
    Fp64,
}

impl PrecisionLevel {
    /// All levels, cheapest first.
    pub const ALL: [PrecisionLevel; 4] = [
        PrecisionLevel::Bf16,
        PrecisionLevel::Fp16,
        PrecisionLevel::Fp32,
        PrecisionLevel::Fp64,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrecisionLevel::Bf16 => "bf16",
            PrecisionLevel::Fp16 => "fp16",
            PrecisionLevel::Fp32 => "fp32",
            PrecisionLevel::Fp64 => "fp64",
        }
    }

    /// Significand width including the implicit bit.
    pub fn significand_bits(self) -> i32 {
        match self {
            PrecisionLevel::Bf16 => 8,
            PrecisionLevel::Fp16 => 11,
            PrecisionLevel::Fp32 => 24,
            PrecisionLevel::Fp64 => 53,
        }
    }

    pub fn max_exponent(self) -> i32 {
        match self {
            PrecisionLevel::Bf16 | PrecisionLevel::Fp32 => 127,
            PrecisionLevel::Fp16 => 15,
            PrecisionLevel::Fp64 => 1023,
        }
    }

    pub fn min_exponent(self) -> i32 {
        1 - self.max_exponent()
    }

    /// `2^-p`: half the spacing of representable numbers just above one.
    pub fn unit_roundoff(self) -> f64 {
        pow2(-self.significand_bits())
    }

    pub fn storage_bytes(self) -> u64 {
        match self {
            PrecisionLevel::Bf16 | PrecisionLevel::Fp16 => 2,
            PrecisionLevel::Fp32 => 4,
            PrecisionLevel::Fp64 => 8,
        }
    }

    /// Largest finite value, `(2 - 2^(1-p)) * 2^emax`.
    pub fn max_finite(self) -> f64 {
        match self {
            PrecisionLevel::Fp64 => f64::MAX,
            _ => {
                let p = self.significand_bits();
                (2.0 - pow2(1 - p)) * pow2(self.max_exponent())
            }
        }
    }

    /// Next finer level, or `None` for fp64.
    pub fn finer(self) -> Option<PrecisionLevel> {
        match self {
            PrecisionLevel::Bf16 => Some(PrecisionLevel::Fp16),
            PrecisionLevel::Fp16 => Some(PrecisionLevel::Fp32),
            PrecisionLevel::Fp32 => Some(PrecisionLevel::Fp64),
            PrecisionLevel::Fp64 => None,
        }
    }

    #[inline]
    pub fn round(self, x: f64) -> f64 {
        round_to(x, self)
    }
}

impl fmt::Display for PrecisionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrecisionLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fp64" => Ok(PrecisionLevel::Fp64),
            "fp32" => Ok(PrecisionLevel::Fp32),
            "fp16" => Ok(PrecisionLevel::Fp16),
            "bf16" => Ok(PrecisionLevel::Bf16),
            other => Err(Error::InvalidArgument(format!(
                "unknown precision level {other:?} (expected fp64, fp32, fp16 or bf16)"
            ))),
        }
    }
}

/// Exact `2^k` for `k` in the normal double range.
#[inline]
fn pow2(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// Rounds `x` to the nearest value representable at `level` (ties to even).
#[inline]
pub fn round_to(x: f64, level: PrecisionLevel) -> f64 {
    match level {
        PrecisionLevel::Fp64 => x,
        // Rust's f64 -> f32 conversion is IEEE round-to-nearest-even with
        // overflow to infinity and gradual underflow.
        PrecisionLevel::Fp32 => x as f32 as f64,
        PrecisionLevel::Fp16 => round_generic(x, 11, -14, PrecisionLevel::Fp16.max_finite()),
        PrecisionLevel::Bf16 => round_generic(x, 8, -126, PrecisionLevel::Bf16.max_finite()),
    }
}

#[inline]
fn round_generic(x: f64, p: i32, emin: i32, max_finite: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let biased = ((x.to_bits() >> 52) & 0x7ff) as i32;
    // Subnormal doubles lie far below emin of every emulated format.
    let exponent = if biased == 0 { emin } else { biased - 1023 };
    let quantum_exp = exponent.max(emin) - (p - 1);
    // Scaling by a power of two is exact here; the scaled value has at most
    // p + 1 integer bits, so the ties-to-even rounding is exact as well.
    let r = (x * pow2(-quantum_exp)).round_ties_even() * pow2(quantum_exp);
    if r.abs() > max_finite {
        f64::INFINITY.copysign(x)
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

/// One arithmetic operation computed in double width and rounded to `level`.
#[inline]
pub fn emulated_op(a: f64, b: f64, op: Op, level: PrecisionLevel) -> f64 {
    let exact = match op {
        Op::Add => a + b,
        Op::Sub => a - b,
        Op::Mul => a * b,
        Op::Div => a / b,
    };
    round_to(exact, level)
}

/// Entrywise rounding; fails if any finite entry overflows the format.
pub fn cast_matrix(m: &DenseMatrix, level: PrecisionLevel) -> Result<DenseMatrix> {
    let mut out = m.clone();
    if level == PrecisionLevel::Fp64 {
        return Ok(out);
    }
    for v in out.as_mut_slice() {
        let r = round_to(*v, level);
        if r.is_infinite() && v.is_finite() {
            return Err(Error::Overflow { level });
        }
        *v = r;
    }
    Ok(out)
}

/// Entrywise rounding of a vector; overflow saturates to infinity.
pub fn cast_vector(v: &[f64], level: PrecisionLevel) -> Vec<f64> {
    v.iter().map(|&x| round_to(x, level)).collect()
}
