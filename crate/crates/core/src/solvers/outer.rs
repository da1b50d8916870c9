use crate::costmodel::{flops_lu, flops_matvec, flops_trisolve_pair, flops_vector, CostLedger};
use crate::error::{Error, Result};
use crate::linalg::{clamp_and_normalize, dist_1, lu_factor, norm_1, stationary_oracle, LuFactors};
use crate::ncd::NcdChain;
use crate::precision::PrecisionLevel::{self, Fp64};
use crate::solvers::mixed::MixedSystem;
use crate::solvers::richardson::richardson_charged;
use crate::solvers::steps::{add_coupling, kms_step5_charged, renormalize};
use crate::solvers::{
    hadamard_coupling, inner_tolerance, kt_schedule, normalize_blocks, shifted_block_transpose,
    solve_aggregated_charged, Algorithm, BlockVector, CouplingSums, Initial, IterationRecord,
    SolveResult, SolverOptions, Step3Mode,
};

/// Factors cached across outer iterations.
enum Step5Cache {
    Alg1(Vec<MixedSystem>),
    Alg2(Vec<LuFactors>),
}

/// The outer loop, advanced one iteration at a time.
pub struct Solver<'a> {
    chain: &'a NcdChain,
    algorithm: Algorithm,
    opts: SolverOptions,
    step3: Step3Mode,
    pi: BlockVector,
    t: usize,
    sums: Option<CouplingSums>,
    cache: Option<Step5Cache>,
}

impl<'a> Solver<'a> {
    /// Requires `chain.m() >= 2`; see [`solve`] for the single-block case.
    pub fn new(chain: &'a NcdChain, algorithm: Algorithm, opts: SolverOptions) -> Result<Self> {
        opts.validate()?;
        if chain.m() < 2 {
            return Err(Error::InvalidArgument(
                "the outer loop needs at least two blocks".into(),
            ));
        }
        let pi = match &opts.initial {
            Initial::Uniform => BlockVector::uniform(chain.partition().clone()),
            Initial::Given(v) => {
                if v.partition() != chain.partition() {
                    return Err(Error::DimensionMismatch(
                        "initial vector partition differs from the chain's".into(),
                    ));
                }
                v.clone()
            }
        };
        Ok(Solver {
            chain,
            algorithm,
            step3: opts.step3_mode.unwrap_or(algorithm.default_step3()),
            opts,
            pi,
            t: 0,
            sums: None,
            cache: None,
        })
    }

    /// Current estimate.
    pub fn pi(&self) -> &BlockVector {
        &self.pi
    }

    /// Number of completed outer iterations.
    pub fn iteration(&self) -> usize {
        self.t
    }

    /// Runs one outer iteration.
    pub fn step(&mut self, ledger: &mut CostLedger) -> Result<IterationRecord> {
        let t = self.t + 1;
        let rec = self.step_inner(t, ledger).map_err(|e| e.at_iteration(t))?;
        self.t = t;
        Ok(rec)
    }

    fn step_inner(&mut self, t: usize, ledger: &mut CostLedger) -> Result<IterationRecord> {
        let chain = self.chain;
        let n = chain.n() as u64;
        let m = chain.m() as u64;
        let mark = ledger.len();

        let pi_hat = normalize_blocks(&self.pi)?;
        ledger.charge(1, "normalize", flops_vector(n), Fp64, n * 8);

        let sums = self.sums.get_or_insert_with(|| {
            ledger.charge(2, "coupling sums", CouplingSums::setup_flops(chain.n()), Fp64, n * n * 8);
            CouplingSums::new(chain)
        });
        let r = sums.aggregate(&pi_hat);
        ledger.charge(2, "aggregate", 2 * n * m, Fp64, n * m * 8);

        let (s, step3_level) = solve_aggregated_charged(&r, self.step3, &self.opts, ledger)?;

        let z = hadamard_coupling(&s, &pi_hat)?;
        ledger.charge(4, "hadamard", n, Fp64, n * 8);

        let (next, inner_iterations, step5_levels) = match self.algorithm {
            Algorithm::Kms => {
                let next = kms_step5_charged(chain, &z, ledger)?;
                (next, vec![1; chain.m()], vec![Fp64; chain.m()])
            }
            Algorithm::Alg1 => self.alg1_step5(&z, ledger)?,
            Algorithm::Alg2 => self.alg2_step5(t, &z, ledger)?,
        };

        let step_change = dist_1(next.values(), self.pi.values());
        ledger.charge(6, "step change", flops_vector(n), Fp64, n * 8);
        let residual = stationary_residual(chain, next.values());
        ledger.charge(6, "residual", flops_matvec(n, n) + flops_vector(n), Fp64, n * n * 8);
        self.pi = next;

        Ok(IterationRecord {
            iteration: t,
            residual,
            step_change,
            inner_iterations,
            step5_levels,
            step3_level,
            step_flops: ledger.step_flops_since(mark),
        })
    }

    fn alg1_step5(&mut self, z: &BlockVector, ledger: &mut CostLedger) -> Result<(BlockVector, Vec<usize>, Vec<PrecisionLevel>)> {
        let chain = self.chain;
        let m = chain.m();
        if self.cache.is_none() {
            let mut systems = Vec::with_capacity(m);
            for i in 0..m {
                let a = shifted_block_transpose(chain, i);
                systems.push(MixedSystem::new(a, self.opts.ir_theta, 5, ledger).map_err(|e| e.in_block(i))?);
            }
            self.cache = Some(Step5Cache::Alg1(systems));
        }
        let Some(Step5Cache::Alg1(systems)) = self.cache.as_mut() else {
            unreachable!("cache holds the algorithm's own state")
        };
        let mut pi = BlockVector::zeros(chain.partition().clone());
        let mut inner = vec![0; m];
        let mut levels = vec![Fp64; m];
        for i in (0..m).rev() {
            let mut rhs = vec![0.0; chain.partition().size(i)];
            add_coupling(chain, i, z, 0..i, &mut rhs, ledger);
            add_coupling(chain, i, &pi, i + 1..m, &mut rhs, ledger);
            let (x, steps) = systems[i]
                .solve(&rhs, self.opts.ir_max_steps, 5, ledger)
                .map_err(|e| e.in_block(i))?;
            pi.block_mut(i).copy_from_slice(&x);
            inner[i] = steps;
            levels[i] = systems[i].level();
        }
        renormalize(&mut pi, ledger, 5);
        Ok((pi, inner, levels))
    }

    fn alg2_step5(&mut self, t: usize, z: &BlockVector, ledger: &mut CostLedger) -> Result<(BlockVector, Vec<usize>, Vec<PrecisionLevel>)> {
        let chain = self.chain;
        let part = chain.partition();
        let m = chain.m();
        let level = if self.opts.ri_exact_inner { Fp64 } else { self.opts.ri_precision };
        if self.cache.is_none() {
            let mut factors = Vec::with_capacity(m);
            for i in 0..m {
                let ni = part.size(i) as u64;
                ledger.charge(5, "precond lu", flops_lu(ni), level, ni * ni * level.storage_bytes());
                factors.push(lu_factor(&shifted_block_transpose(chain, i), level).map_err(|e| e.in_block(i))?);
            }
            self.cache = Some(Step5Cache::Alg2(factors));
        }
        let Some(Step5Cache::Alg2(factors)) = self.cache.as_ref() else {
            unreachable!("cache holds the algorithm's own state")
        };

        // b_i = sum_{j>i} z_j P_ji
        let mut b = BlockVector::zeros(part.clone());
        for i in 0..m {
            let mut rhs = vec![0.0; part.size(i)];
            add_coupling(chain, i, z, i + 1..m, &mut rhs, ledger);
            b.block_mut(i).copy_from_slice(&rhs);
        }

        let (values, steps) = if self.opts.ri_exact_inner {
            let mut x = BlockVector::zeros(part.clone());
            for i in 0..m {
                let mut rhs = b.block(i).to_vec();
                add_coupling(chain, i, &x, 0..i, &mut rhs, ledger);
                let ni = part.size(i) as u64;
                ledger.charge(5, "block solve", flops_trisolve_pair(ni), Fp64, ni * ni * 8);
                let xi = factors[i].solve(&rhs);
                x.block_mut(i).copy_from_slice(&xi);
            }
            (x.into_values(), 1)
        } else {
            let k = kt_schedule(t, &self.opts);
            let tol = inner_tolerance(t, chain.epsilon());
            let out = richardson_charged(chain, b.values(), k, tol, factors, ledger)?;
            (out.x, out.steps)
        };
        let mut pi = BlockVector::new(part.clone(), values)?;
        renormalize(&mut pi, ledger, 5);
        Ok((pi, vec![steps], vec![level; m]))
    }
}

/// `||pi - pi P||_1`.
pub(crate) fn stationary_residual(chain: &NcdChain, pi: &[f64]) -> f64 {
    let pip = chain.p().vec_mul(pi);
    dist_1(pi, &pip)
}

/// Runs `algorithm` until the step change or the residual `||pi - pi P||_1`
/// falls to `opts.outer_tol`, or `opts.max_outer` iterations pass. Hitting
/// the limit is reported through `converged = false`, not as an error.
///
/// Single-block chains skip the outer loop and return the fp64 oracle.
pub fn solve(chain: &NcdChain, algorithm: Algorithm, opts: &SolverOptions, ledger: &mut CostLedger) -> Result<SolveResult> {
    opts.validate()?;
    if chain.m() == 1 {
        let n = chain.n() as u64;
        ledger.charge(5, "oracle lu", flops_lu(n), Fp64, n * n * 8);
        ledger.charge(5, "oracle solve", 2 * flops_trisolve_pair(n) + flops_matvec(n, n), Fp64, n * n * 8);
        let values = stationary_oracle(chain.p())?;
        let residual = stationary_residual(chain, &values);
        return Ok(SolveResult {
            algorithm,
            pi: BlockVector::new(chain.partition().clone(), values)?,
            outer_iterations: 0,
            converged: true,
            residual,
            trace: Vec::new(),
        });
    }

    let mut solver = Solver::new(chain, algorithm, opts.clone())?;
    let mut trace = Vec::new();
    let mut converged = false;
    while solver.iteration() < opts.max_outer {
        let rec = solver.step(ledger)?;
        converged = rec.step_change <= opts.outer_tol || rec.residual <= opts.outer_tol;
        trace.push(rec);
        if converged {
            break;
        }
    }
    let outer_iterations = solver.iteration();
    let mut values = solver.pi.into_values();
    let before = values.clone();
    clamp_and_normalize(&mut values);
    let residual = match trace.last() {
        Some(rec) if values == before => rec.residual,
        _ => stationary_residual(chain, &values),
    };
    debug_assert!((norm_1(&values) - 1.0).abs() <= 1e-12);
    Ok(SolveResult {
        algorithm,
        pi: BlockVector::new(chain.partition().clone(), values)?,
        outer_iterations,
        converged,
        residual,
        trace,
    })
}
