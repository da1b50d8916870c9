use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ncd_cli::chain_io::{load_chain, save_chain, write_chain};
use ncd_cli::experiment::{run_experiment_with_progress, write_outputs};
use ncd_cli::report::report_file;
use ncd_cli::{BlocksSource, CliError, ExperimentConfig, SweepVariable};
use ncd_core::costmodel::{gpu_spec_by_name_or_path, STEPS};
use ncd_core::ncd::{assemble_ncd_from_blocks_with, generate_random_ncd, load_block_matrix_market, validate_chain};
use ncd_core::{simulate_time, solve, Algorithm, CostLedger, PrecisionLevel, Provenance, SolverOptions, Step3Mode};

#[derive(Parser)]
#[command(name = "ncdmp", version, about = "Mixed-precision aggregation-disaggregation for NCD Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or assemble a chain and write it to a chain file
    Generate(GenerateArgs),
    /// Solve one chain with one algorithm and print the cost breakdown
    Solve(SolveArgs),
    /// Run a parameter sweep and write per-run and summary CSV files
    Sweep(SweepArgs),
    /// Summarize a per-run CSV produced by `sweep`
    Report {
        results: PathBuf,
    },
}

#[derive(Args)]
struct GenerateArgs {
    /// Block sizes, e.g. `50,50,50`; overrides --m/--block-size
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    block_size: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Matrix Market files used as diagonal blocks, one per block
    #[arg(long, value_delimiter = ',')]
    blocks: Vec<PathBuf>,
    /// Reject all-zero block rows instead of filling them uniformly
    #[arg(long)]
    no_repair: bool,
    /// Output file, `-` for stdout
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-10)]
    outer_tol: f64,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    #[arg(long, default_value_t = 1e-2)]
    ir_theta: f64,
    #[arg(long, default_value_t = 50)]
    ir_max_steps: usize,
    #[arg(long, default_value_t = 10)]
    ri_k0: usize,
    #[arg(long, default_value_t = 2.0)]
    ri_growth: f64,
    #[arg(long, default_value = "fp32")]
    ri_precision: PrecisionLevel,
    /// Step 3 mode: `full` or `mixed`; defaults to the algorithm's own
    #[arg(long, value_parser = parse_step3)]
    step3: Option<Step3Mode>,
}

fn parse_step3(s: &str) -> Result<Step3Mode, String> {
    match s {
        "full" | "full_precision" => Ok(Step3Mode::FullPrecision),
        "mixed" => Ok(Step3Mode::Mixed),
        other => Err(format!("unknown step 3 mode {other:?}")),
    }
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            outer_tol: self.outer_tol,
            max_outer: self.max_outer,
            ir_theta: self.ir_theta,
            ir_max_steps: self.ir_max_steps,
            ri_k0: self.ri_k0,
            ri_growth: self.ri_growth,
            ri_precision: self.ri_precision,
            step3_mode: self.step3,
            ..SolverOptions::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long, default_value = "kms")]
    algorithm: Algorithm,
    /// `h100` or a GPU spec file
    #[arg(long, default_value = "h100")]
    gpu: String,
    /// Write the stationary vector, one entry per line
    #[arg(long)]
    pi_out: Option<PathBuf>,
    /// Print one line per outer iteration
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// `m`, `block_size`, `epsilon` or `none`
    #[arg(long, default_value = "none")]
    sweep: SweepVariable,
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    block_size: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long, value_delimiter = ',', default_value = "kms,alg1,alg2")]
    algorithms: Vec<Algorithm>,
    #[arg(long, default_value = "h100")]
    gpu: String,
    /// Matrix Market files cycled through as diagonal blocks
    #[arg(long, value_delimiter = ',')]
    blocks: Vec<PathBuf>,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long)]
    quiet: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

fn generate(args: GenerateArgs) -> Result<ExitCode, CliError> {
    let chain = if args.blocks.is_empty() {
        let sizes = if args.sizes.is_empty() { vec![args.block_size; args.m] } else { args.sizes };
        generate_random_ncd(&sizes, args.epsilon, args.seed)?
    } else {
        let blocks = args
            .blocks
            .iter()
            .map(load_block_matrix_market)
            .collect::<Result<Vec<_>, _>>()?;
        let chain = assemble_ncd_from_blocks_with(&blocks, args.epsilon, args.seed, !args.no_repair)?;
        let paths = args.blocks.iter().map(|p| p.display().to_string()).collect();
        chain.with_provenance(Provenance::Assembled { paths, seed: args.seed })
    };
    let diag = validate_chain(&chain);
    if !diag.passes() {
        eprintln!("warning: chain fails checks: {}", diag.failures().join(", "));
    }
    if args.output.as_os_str() == "-" {
        write_chain(&chain, std::io::stdout().lock())?;
    } else {
        save_chain(&chain, &args.output)?;
        eprintln!("wrote {} (n = {}, m = {})", args.output.display(), chain.n(), chain.m());
    }
    Ok(ExitCode::SUCCESS)
}

fn solve_cmd(args: SolveArgs) -> Result<ExitCode, CliError> {
    let gpu = gpu_spec_by_name_or_path(&args.gpu).map_err(|e| CliError::Config(format!("gpu {:?}: {e}", args.gpu)))?;
    let opts = args.solver.options();
    opts.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let chain = load_chain(&args.chain)?;
    let mut ledger = CostLedger::new();
    let result = solve(&chain, args.algorithm, &opts, &mut ledger)?;
    let time = simulate_time(&ledger, &gpu)?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "algorithm        {}", result.algorithm)?;
    writeln!(out, "n, m             {}, {}", chain.n(), chain.m())?;
    writeln!(out, "outer iterations {}", result.outer_iterations)?;
    writeln!(out, "converged        {}", result.converged)?;
    writeln!(out, "residual         {:e}", result.residual)?;
    writeln!(out, "step 5 precision {}", result.step5_precision_summary())?;
    writeln!(out, "inner iterations {}", result.inner_iterations_total())?;
    let masses: Vec<String> = (0..chain.m()).map(|i| format!("{:.6}", result.pi.block_norm_1(i))).collect();
    writeln!(out, "block masses     {}", masses.join(" "))?;
    if args.trace {
        writeln!(out, "\n{:>4} {:>12} {:>12} {:>8}  step5", "t", "residual", "change", "inner")?;
        for r in &result.trace {
            let levels: Vec<&str> = r.step5_levels.iter().map(|l| l.name()).collect();
            let inner: usize = r.inner_iterations.iter().sum();
            writeln!(out, "{:>4} {:>12.4e} {:>12.4e} {:>8}  {}", r.iteration, r.residual, r.step_change, inner, levels.join(","))?;
        }
    }
    writeln!(out, "\nsimulated time on {}", gpu.name)?;
    let flops = ledger.step_flops();
    for k in 0..STEPS {
        writeln!(out, "  step {}  {:>16} flops  {:>12.6e} s", k + 1, flops[k], time.per_step[k])?;
    }
    writeln!(out, "  total   {:>16} flops  {:>12.6e} s", ledger.total_flops(), time.total)?;

    if let Some(path) = args.pi_out {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        for v in result.pi.values() {
            writeln!(w, "{v}")?;
        }
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> Result<ExitCode, CliError> {
    let config = ExperimentConfig {
        sweep_variable: args.sweep,
        sweep_values: args.values,
        m: args.m,
        block_size: args.block_size,
        epsilon: args.epsilon,
        trials: args.trials,
        seed_base: args.seed_base,
        algorithms: args.algorithms,
        gpu: args.gpu,
        blocks_source: if args.blocks.is_empty() {
            BlocksSource::Random
        } else {
            BlocksSource::MatrixMarket(args.blocks)
        },
        solver: args.solver.options(),
    };
    let quiet = args.quiet;
    let results = run_experiment_with_progress(&config, |row| {
        if !quiet {
            eprintln!("{} = {} trial {} {}: {}", config.sweep_variable, row.sweep_value, row.trial, row.algorithm, row.status());
        }
    })?;
    let summary = write_outputs(&results, &args.output)?;
    eprintln!("wrote {} and {}", args.output.display(), summary.display());
    let failed = results.error_rows();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", results.rows.len());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Report { results } => report_file(&results).map(|text| {
            print!("{text}");
            ExitCode::SUCCESS
        }),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
