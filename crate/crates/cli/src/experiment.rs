//! Parameter sweeps producing per-run and summary CSV tables.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ncd_core::costmodel::{gpu_spec_by_name_or_path, STEPS};
use ncd_core::ncd::{assemble_ncd_from_blocks, generate_random_ncd, load_block_matrix_market};
use ncd_core::{simulate_time, solve, Algorithm, CostLedger, DenseMatrix, GpuSpec, NcdChain, Provenance, SolverOptions};
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    M,
    BlockSize,
    Epsilon,
    None,
}

impl FromStr for SweepVariable {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(SweepVariable::M),
            "block_size" | "block-size" | "n_i" => Ok(SweepVariable::BlockSize),
            "epsilon" | "eps" => Ok(SweepVariable::Epsilon),
            "none" => Ok(SweepVariable::None),
            other => Err(CliError::Config(format!("unknown sweep variable {other:?}"))),
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::M => "m",
            SweepVariable::BlockSize => "block_size",
            SweepVariable::Epsilon => "epsilon",
            SweepVariable::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlocksSource {
    Random,
    /// Diagonal blocks cycle through these files.
    MatrixMarket(Vec<PathBuf>),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub m: usize,
    pub block_size: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub seed_base: u64,
    pub algorithms: Vec<Algorithm>,
    /// `h100` or a spec file path.
    pub gpu: String,
    pub blocks_source: BlocksSource,
    pub solver: SolverOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sweep_variable: SweepVariable::None,
            sweep_values: Vec::new(),
            m: 20,
            block_size: 100,
            epsilon: 0.1,
            trials: 10,
            seed_base: 0,
            algorithms: Algorithm::ALL.to_vec(),
            gpu: "h100".into(),
            blocks_source: BlocksSource::Random,
            solver: SolverOptions::default(),
        }
    }
}

/// Chain parameters for one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub m: usize,
    pub block_size: usize,
    pub epsilon: f64,
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(CliError::Config(format!("{what} sweep value {v} is not a positive integer")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(CliError::Config("no algorithms selected".into()));
        }
        if self.sweep_variable != SweepVariable::None && self.sweep_values.is_empty() {
            return Err(CliError::Config(format!("sweep over {} needs values", self.sweep_variable)));
        }
        if matches!(self.blocks_source, BlocksSource::MatrixMarket(ref p) if p.is_empty()) {
            return Err(CliError::Config("matrix market source lists no files".into()));
        }
        if self.sweep_variable == SweepVariable::BlockSize && self.blocks_source != BlocksSource::Random {
            return Err(CliError::Config(
                "block sizes come from the matrix files and cannot be swept".into(),
            ));
        }
        self.solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for p in self.points()? {
            if p.m < 1 || p.block_size < 1 {
                return Err(CliError::Config("m and block_size must be at least 1".into()));
            }
            if !(p.epsilon > 0.0 && p.epsilon <= 0.5) {
                return Err(CliError::Config(format!("epsilon {} outside (0, 0.5]", p.epsilon)));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let base = SweepPoint {
            value: f64::NAN,
            m: self.m,
            block_size: self.block_size,
            epsilon: self.epsilon,
        };
        if self.sweep_variable == SweepVariable::None {
            return Ok(vec![SweepPoint { value: 0.0, ..base }]);
        }
        self.sweep_values
            .iter()
            .map(|&v| {
                let mut p = SweepPoint { value: v, ..base };
                match self.sweep_variable {
                    SweepVariable::M => p.m = as_count(v, "m")?,
                    SweepVariable::BlockSize => p.block_size = as_count(v, "block_size")?,
                    SweepVariable::Epsilon => p.epsilon = v,
                    SweepVariable::None => unreachable!("handled above"),
                }
                Ok(p)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub sweep_value: f64,
    pub trial: usize,
    pub algorithm: Algorithm,
    pub outcome: std::result::Result<RunMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub outer_iters: usize,
    pub converged: bool,
    pub residual_1norm: f64,
    pub time_steps: [f64; STEPS],
    pub time_total: f64,
    pub precision_step5: String,
    pub inner_iters_total: usize,
}

impl RunRow {
    pub fn status(&self) -> String {
        match &self.outcome {
            Ok(m) if m.converged => "ok".into(),
            Ok(_) => "max_outer".into(),
            Err(e) => format!("error: {e}"),
        }
    }

    pub fn is_error(&self) -> bool {
        self.outcome.is_err()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub sweep_variable: SweepVariable,
    pub rows: Vec<RunRow>,
}

impl ExperimentResults {
    pub fn error_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_error()).count()
    }
}

/// Loaded Matrix Market blocks, read once per experiment.
struct BlockFiles {
    paths: Vec<PathBuf>,
    blocks: Vec<DenseMatrix>,
}

fn build_chain(point: &SweepPoint, seed: u64, files: Option<&BlockFiles>) -> ncd_core::Result<NcdChain> {
    match files {
        None => generate_random_ncd(&vec![point.block_size; point.m], point.epsilon, seed),
        Some(f) => {
            let blocks: Vec<DenseMatrix> = (0..point.m).map(|i| f.blocks[i % f.blocks.len()].clone()).collect();
            let chain = assemble_ncd_from_blocks(&blocks, point.epsilon, seed)?;
            let paths = (0..point.m)
                .map(|i| f.paths[i % f.paths.len()].display().to_string())
                .collect();
            Ok(chain.with_provenance(Provenance::Assembled { paths, seed }))
        }
    }
}

fn run_one(chain: &NcdChain, algorithm: Algorithm, opts: &SolverOptions, gpu: &GpuSpec) -> ncd_core::Result<RunMetrics> {
    let mut ledger = CostLedger::new();
    let result = solve(chain, algorithm, opts, &mut ledger)?;
    let time = simulate_time(&ledger, gpu)?;
    Ok(RunMetrics {
        outer_iters: result.outer_iterations,
        converged: result.converged,
        residual_1norm: result.residual,
        time_steps: time.per_step,
        time_total: time.total,
        precision_step5: result.step5_precision_summary(),
        inner_iters_total: result.inner_iterations_total(),
    })
}

/// Runs every (sweep value, trial, algorithm) combination in that order.
///
/// Trial `k` uses seed `seed_base + k` for every algorithm, so algorithms
/// are compared on identical chains. Chain construction and solver failures
/// are recorded in the affected rows; only configuration problems abort.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    run_experiment_with_progress(config, |_| {})
}

pub fn run_experiment_with_progress(config: &ExperimentConfig, mut progress: impl FnMut(&RunRow)) -> Result<ExperimentResults> {
    config.validate()?;
    let gpu = gpu_spec_by_name_or_path(&config.gpu).map_err(|e| CliError::Config(format!("gpu {:?}: {e}", config.gpu)))?;
    let files = match &config.blocks_source {
        BlocksSource::Random => None,
        BlocksSource::MatrixMarket(paths) => {
            let blocks = paths
                .iter()
                .map(|p| load_block_matrix_market(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))))
                .collect::<Result<Vec<_>>>()?;
            Some(BlockFiles {
                paths: paths.clone(),
                blocks,
            })
        }
    };

    let mut rows = Vec::new();
    for point in config.points()? {
        for trial in 0..config.trials {
            let seed = config.seed_base + trial as u64;
            let chain = build_chain(&point, seed, files.as_ref());
            for &algorithm in &config.algorithms {
                let outcome = match &chain {
                    Ok(c) => run_one(c, algorithm, &config.solver, &gpu).map_err(|e| e.to_string()),
                    Err(e) => Err(format!("chain construction: {e}")),
                };
                let row = RunRow {
                    sweep_value: point.value,
                    trial,
                    algorithm,
                    outcome,
                };
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(ExperimentResults {
        sweep_variable: config.sweep_variable,
        rows,
    })
}

pub const CSV_HEADER: [&str; 16] = [
    "sweep_value",
    "trial",
    "algorithm",
    "outer_iters",
    "converged",
    "residual_1norm",
    "time_step1",
    "time_step2",
    "time_step3",
    "time_step4",
    "time_step5",
    "time_step6",
    "time_total",
    "precision_step5",
    "inner_iters_total",
    "status",
];

/// One row per run. Floats use shortest round-trip formatting, so the step
/// columns parse back to values summing exactly to `time_total`.
pub fn write_results_csv(results: &ExperimentResults, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for row in &results.rows {
        let mut rec = vec![row.sweep_value.to_string(), row.trial.to_string(), row.algorithm.to_string()];
        match &row.outcome {
            Ok(m) => {
                rec.push(m.outer_iters.to_string());
                rec.push(m.converged.to_string());
                rec.push(m.residual_1norm.to_string());
                rec.extend(m.time_steps.iter().map(f64::to_string));
                rec.push(m.time_total.to_string());
                rec.push(m.precision_step5.clone());
                rec.push(m.inner_iters_total.to_string());
            }
            Err(_) => rec.extend(std::iter::repeat_n(String::new(), 12)),
        }
        rec.push(row.status());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Per (sweep value, algorithm) means over successful runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub runs: usize,
    pub converged: usize,
    pub mean_outer_iters: f64,
    pub mean_time_total: f64,
    /// `mean_time_total(kms) / mean_time_total`, when kms ran.
    pub speedup_vs_kms: Option<f64>,
}

/// Aggregates rows given as `(sweep_value, algorithm, outer_iters, converged,
/// time_total)`, keeping first-appearance order of sweep values.
pub(crate) fn summarize(rows: impl IntoIterator<Item = (f64, Algorithm, usize, bool, f64)>) -> Vec<SummaryRow> {
    let mut order: Vec<u64> = Vec::new();
    let mut acc: BTreeMap<(u64, Algorithm), (usize, usize, f64, f64)> = BTreeMap::new();
    for (value, alg, iters, conv, time) in rows {
        let key = value.to_bits();
        if !order.contains(&key) {
            order.push(key);
        }
        let e = acc.entry((key, alg)).or_default();
        e.0 += 1;
        e.1 += conv as usize;
        e.2 += iters as f64;
        e.3 += time;
    }
    let mut out = Vec::new();
    for key in order {
        let kms = acc.get(&(key, Algorithm::Kms)).map(|e| e.3 / e.0 as f64);
        for alg in Algorithm::ALL {
            if let Some(&(runs, converged, iters, time)) = acc.get(&(key, alg)) {
                let mean_time = time / runs as f64;
                out.push(SummaryRow {
                    sweep_value: f64::from_bits(key),
                    algorithm: alg,
                    runs,
                    converged,
                    mean_outer_iters: iters / runs as f64,
                    mean_time_total: mean_time,
                    speedup_vs_kms: kms.map(|k| k / mean_time),
                });
            }
        }
    }
    out
}

pub fn summary(results: &ExperimentResults) -> Vec<SummaryRow> {
    summarize(results.rows.iter().filter_map(|r| {
        r.outcome
            .as_ref()
            .ok()
            .map(|m| (r.sweep_value, r.algorithm, m.outer_iters, m.converged, m.time_total))
    }))
}

pub fn write_summary_csv(rows: &[SummaryRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "sweep_value",
        "algorithm",
        "runs",
        "converged",
        "mean_outer_iters",
        "mean_time_total",
        "speedup_vs_kms",
    ])?;
    for r in rows {
        out.write_record([
            r.sweep_value.to_string(),
            r.algorithm.to_string(),
            r.runs.to_string(),
            r.converged.to_string(),
            r.mean_outer_iters.to_string(),
            r.mean_time_total.to_string(),
            r.speedup_vs_kms.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `results.csv` becomes `results_summary.csv`.
pub fn summary_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let ext = output.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    output.with_file_name(format!("{stem}_summary.{ext}"))
}

/// Writes the detail CSV to `output` and the summary next to it.
pub fn write_outputs(results: &ExperimentResults, output: &Path) -> Result<PathBuf> {
    write_results_csv(results, std::io::BufWriter::new(std::fs::File::create(output)?))?;
    let spath = summary_path(output);
    write_summary_csv(&summary(results), std::io::BufWriter::new(std::fs::File::create(&spath)?))?;
    Ok(spath)
}
