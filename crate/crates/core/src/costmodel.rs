//! Flop-count GPU time model.
//!
//! Solvers append one [`CostEntry`] per arithmetic kernel they run. An entry
//! whose working set fits in device memory costs `flops / peak(level)`;
//! otherwise one operand per flop is streamed at the entry's storage width
//! and the slower of the two rates applies.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precision::PrecisionLevel;

/// Algorithm steps are numbered 1 through `STEPS`.
pub const STEPS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpuSpec {
    pub name: String,
    /// Flops per second by precision.
    pub peak_flops: BTreeMap<PrecisionLevel, f64>,
    /// Bytes per second.
    pub bandwidth: f64,
    /// Bytes.
    pub memory: f64,
}

/// On-disk layout of a spec file; every rate is required.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GpuSpecFile {
    name: String,
    fp64: f64,
    fp32: f64,
    fp16: f64,
    bf16: f64,
    bandwidth: f64,
    memory: f64,
}

impl GpuSpec {
    pub fn peak(&self, level: PrecisionLevel) -> Result<f64> {
        self.peak_flops.get(&level).copied().ok_or(Error::UnknownLevel(level))
    }

    /// Checks positivity and `fp16 >= fp32 >= fp64`.
    pub fn validate(&self) -> Result<()> {
        let get = |l| self.peak_flops.get(&l).copied();
        for (l, v) in &self.peak_flops {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::InvalidArgument(format!("{l} throughput must be positive, got {v}")));
            }
        }
        if let (Some(h), Some(s), Some(d)) = (get(PrecisionLevel::Fp16), get(PrecisionLevel::Fp32), get(PrecisionLevel::Fp64)) {
            if !(h >= s && s >= d) {
                return Err(Error::InvalidArgument(
                    "throughputs must satisfy fp16 >= fp32 >= fp64".into(),
                ));
            }
        }
        if !(self.bandwidth > 0.0 && self.memory > 0.0) {
            return Err(Error::InvalidArgument("bandwidth and memory must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: GpuSpecFile =
            toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("gpu spec: {e}")))?;
        let spec = GpuSpec {
            name: f.name,
            peak_flops: BTreeMap::from([
                (PrecisionLevel::Bf16, f.bf16),
                (PrecisionLevel::Fp16, f.fp16),
                (PrecisionLevel::Fp32, f.fp32),
                (PrecisionLevel::Fp64, f.fp64),
            ]),
            bandwidth: f.bandwidth,
            memory: f.memory,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// NVIDIA H100 PCIe figures.
pub fn h100_spec() -> GpuSpec {
    GpuSpec {
        name: "H100".into(),
        peak_flops: BTreeMap::from([
            (PrecisionLevel::Bf16, 134e12),
            (PrecisionLevel::Fp16, 134e12),
            (PrecisionLevel::Fp32, 67e12),
            (PrecisionLevel::Fp64, 34e12),
        ]),
        bandwidth: 3.35e12,
        memory: 96e9,
    }
}

/// Resolves a built-in name (case-insensitive) or a TOML spec file path.
pub fn gpu_spec_by_name_or_path(s: &str) -> Result<GpuSpec> {
    if s.eq_ignore_ascii_case("h100") {
        Ok(h100_spec())
    } else {
        GpuSpec::from_file(s)
    }
}

pub fn flops_lu(n: u64) -> u64 {
    2 * n * n * n / 3
}

pub fn flops_trisolve_pair(n: u64) -> u64 {
    2 * n * n
}

pub fn flops_matvec(rows: u64, cols: u64) -> u64 {
    2 * rows * cols
}

/// Norms, axpys and other length-`n` vector kernels.
pub fn flops_vector(n: u64) -> u64 {
    2 * n
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEntry {
    /// Algorithm step, 1 through [`STEPS`].
    pub step: u8,
    pub label: &'static str,
    pub flops: u64,
    pub level: PrecisionLevel,
    /// Working-set size of the kernel.
    pub bytes: u64,
}

/// Append-only record of charged work.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CostLedger {
    entries: Vec<CostEntry>,
    step_flops: [u64; STEPS],
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, step: u8, label: &'static str, flops: u64, level: PrecisionLevel, bytes: u64) {
        assert!((1..=STEPS as u8).contains(&step), "step {step} out of range");
        self.step_flops[step as usize - 1] += flops;
        self.entries.push(CostEntry {
            step,
            label,
            flops,
            level,
            bytes,
        });
    }

    pub fn entries(&self) -> &[CostEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Running flop totals per step.
    pub fn step_flops(&self) -> [u64; STEPS] {
        self.step_flops
    }

    pub fn total_flops(&self) -> u64 {
        self.step_flops.iter().sum()
    }

    /// Flop totals per step over `entries[from..]`.
    pub fn step_flops_since(&self, from: usize) -> [u64; STEPS] {
        let mut out = [0; STEPS];
        for e in &self.entries[from..] {
            out[e.step as usize - 1] += e.flops;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulatedTime {
    /// Seconds per step.
    pub per_step: [f64; STEPS],
    /// Sum of `per_step`.
    pub total: f64,
}

pub fn entry_time(e: &CostEntry, gpu: &GpuSpec) -> Result<f64> {
    let compute = e.flops as f64 / gpu.peak(e.level)?;
    if (e.bytes as f64) <= gpu.memory {
        Ok(compute)
    } else {
        let stream = e.flops as f64 * e.level.storage_bytes() as f64 / gpu.bandwidth;
        Ok(compute.max(stream))
    }
}

/// Sums entry times in ledger order; the total is the sum of the step times.
pub fn simulate_time(ledger: &CostLedger, gpu: &GpuSpec) -> Result<SimulatedTime> {
    let mut per_step = [0.0; STEPS];
    for e in ledger.entries() {
        per_step[e.step as usize - 1] += entry_time(e, gpu)?;
    }
    Ok(SimulatedTime {
        per_step,
        total: per_step.iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use PrecisionLevel::*;

    #[test]
    fn h100_constants() {
        let g = h100_spec();
        assert_eq!(g.peak(Fp64).unwrap(), 34e12);
        assert_eq!(g.peak(Fp32).unwrap(), 67e12);
        assert_eq!(g.peak(Fp16).unwrap(), 134e12);
        assert_eq!(g.peak(Bf16).unwrap(), 134e12);
        assert_eq!(g.bandwidth, 3.35e12);
        assert_eq!(g.memory, 96e9);
        assert!((g.peak(Fp32).unwrap() / g.peak(Fp64).unwrap() - 1.97).abs() < 0.01);
        g.validate().unwrap();
    }

    #[test]
    fn flop_formulas() {
        assert_eq!(flops_lu(1), 0);
        assert_eq!(flops_lu(3), 18);
        assert_eq!(flops_lu(500), 83_333_333);
        assert_eq!(flops_trisolve_pair(1), 2);
        assert_eq!(flops_trisolve_pair(10), 200);
        assert_eq!(flops_trisolve_pair(500), 500_000);
        assert_eq!(flops_matvec(1, 1), 2);
        assert_eq!(flops_matvec(500, 500), 500_000);
        let offdiag: u64 = (0..20)
            .flat_map(|i| (0..20).filter(move |&j| j != i))
            .map(|_| flops_matvec(500, 500))
            .sum();
        assert_eq!(offdiag, 190_000_000);
    }

    #[test]
    fn in_memory_lu_time() {
        let mut l = CostLedger::new();
        l.charge(5, "lu", flops_lu(500), Fp64, 2_000_000);
        let t = simulate_time(&l, &h100_spec()).unwrap();
        assert!((t.total / 2.45e-6 - 1.0).abs() < 0.01);
        assert_eq!(t.per_step[4], t.total);
    }

    #[test]
    fn fp32_ratio_and_monotonicity() {
        let g = h100_spec();
        let time = |level| {
            let mut l = CostLedger::new();
            l.charge(1, "x", 1_000_000, level, 8);
            simulate_time(&l, &g).unwrap().total
        };
        // Equal up to the rounding of the two divisions.
        let ratio = time(Fp32) / time(Fp64);
        assert!((ratio - 34.0 / 67.0).abs() <= 4.0 * f64::EPSILON * ratio);
        assert!(time(Fp16) <= time(Fp32) && time(Fp32) <= time(Fp64));
        assert_eq!(time(Bf16), time(Fp16));
    }

    #[test]
    fn bandwidth_regime() {
        let g = h100_spec();
        let mut l = CostLedger::new();
        l.charge(5, "big", 1_000_000_000, Fp64, 100_000_000_000);
        let t = simulate_time(&l, &g).unwrap();
        assert!(t.total >= 1e9 * 8.0 / 3.35e12);
    }

    #[test]
    fn totals_are_sums() {
        let mut l = CostLedger::new();
        for (k, level) in [Fp64, Fp32, Bf16, Fp16, Fp64, Fp32].into_iter().enumerate() {
            l.charge(k as u8 + 1, "e", 1000 * (k as u64 + 1), level, 64);
        }
        let t = simulate_time(&l, &h100_spec()).unwrap();
        assert_eq!(t.total, t.per_step.iter().sum::<f64>());
        assert_eq!(l.total_flops(), 21_000);
        assert_eq!(l.step_flops_since(4), [0, 0, 0, 0, 5000, 6000]);
    }

    #[test]
    fn unknown_level() {
        let mut g = h100_spec();
        g.peak_flops.remove(&Bf16);
        let mut l = CostLedger::new();
        l.charge(2, "x", 10, Bf16, 8);
        assert!(matches!(simulate_time(&l, &g), Err(Error::UnknownLevel(Bf16))));
    }

    #[test]
    fn spec_file_round_trip() {
        let text = "name = \"A\"\nfp64 = 9.7e12\nfp32 = 19.5e12\nfp16 = 78e12\nbf16 = 78e12\nbandwidth = 1.5e12\nmemory = 40e9\n";
        let g = GpuSpec::from_toml_str(text).unwrap();
        assert_eq!(g.name, "A");
        assert_eq!(g.peak(Fp32).unwrap(), 19.5e12);
        let bad = text.replace("fp16 = 78e12", "fp16 = 1e12");
        assert!(GpuSpec::from_toml_str(&bad).is_err());
        assert!(GpuSpec::from_toml_str("name = \"A\"").is_err());
    }
}
