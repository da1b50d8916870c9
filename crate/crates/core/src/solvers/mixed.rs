//! Precision selection and iterative refinement.

use crate::costmodel::{flops_lu, flops_matvec, flops_trisolve_pair, flops_vector, CostLedger};
use crate::error::Result;
use crate::linalg::{condest_1_detailed, lu_factor, lu_solve_scaled, norm_inf, DenseMatrix, LuFactors};
use crate::precision::PrecisionLevel::{self, Fp32, Fp64};

/// IR aborts after this many consecutive steps without enough progress.
pub const IR_STALL_LIMIT: usize = 3;
/// A step makes progress when the residual shrinks by at least this factor.
pub const IR_PROGRESS_FACTOR: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct PrecisionChoice {
    pub level: PrecisionLevel,
    /// Estimated `kappa_1(A)`; infinite when the probe failed.
    pub kappa: f64,
    pub norm_1: f64,
    /// Set when the fp32 probe factorization failed and fp64 was chosen.
    pub fallback: bool,
    /// Solves used by the condition estimator.
    pub probe_solves: usize,
    /// The fp32 probe factors, reusable when fp32 is selected.
    pub probe: Option<LuFactors>,
}

/// Cheapest level `L` with `u(L) kappa_1(A) ||A||_1 < theta`, else fp64.
pub fn select_precision(a: &DenseMatrix, theta: f64) -> PrecisionLevel {
    select_precision_detailed(a, theta).level
}

/// The condition number is estimated from an fp32 LU of `a`.
pub fn select_precision_detailed(a: &DenseMatrix, theta: f64) -> PrecisionChoice {
    let norm_1 = a.norm_1();
    let fallback = |probe| PrecisionChoice {
        level: Fp64,
        kappa: f64::INFINITY,
        norm_1,
        fallback: true,
        probe_solves: 0,
        probe,
    };
    let probe = match lu_factor(a, Fp32) {
        Ok(f) => f,
        Err(_) => return fallback(None),
    };
    let est = match condest_1_detailed(a, &probe) {
        Ok(e) if e.kappa.is_finite() => e,
        _ => return fallback(Some(probe)),
    };
    let level = PrecisionLevel::ALL
        .into_iter()
        .find(|l| l.unit_roundoff() * est.kappa * norm_1 < theta)
        .unwrap_or(Fp64);
    PrecisionChoice {
        level,
        kappa: est.kappa,
        norm_1,
        fallback: false,
        probe_solves: est.solves,
        probe: Some(probe),
    }
}

#[derive(Debug, Clone)]
pub struct IrOutcome {
    pub x: Vec<f64>,
    /// Correction solves, counting the initial solve.
    pub steps: usize,
    /// Residual evaluations at fp64.
    pub residual_evals: usize,
    pub converged: bool,
    /// Set when the stall guard ended the iteration.
    pub stalled: bool,
    /// `||b - A x_k||_inf` for each evaluated residual.
    pub residual_history: Vec<f64>,
}

/// Mixed-precision iterative refinement with the factors `f` of `a`.
///
/// Solves run at the factors' level; residuals and updates run in fp64.
/// Stops once `||r||_inf <= tol sqrt(n) ||A||_inf ||x||_inf`, after
/// `max_steps` solves, or when the residual has failed to shrink by
/// [`IR_PROGRESS_FACTOR`] for [`IR_STALL_LIMIT`] consecutive steps.
pub fn iterative_refinement(a: &DenseMatrix, f: &LuFactors, b: &[f64], tol: f64, max_steps: usize) -> IrOutcome {
    let n = a.rows();
    let level = f.level();
    let anorm = a.norm_inf();
    let scale = tol * (n as f64).sqrt() * anorm;
    let mut x = lu_solve_scaled(f, b, level);
    let mut steps = 1;
    let mut history = Vec::new();
    let mut stall = 0;
    loop {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, v)| bi - v).collect();
        let rn = norm_inf(&r);
        let prev = history.last().copied();
        history.push(rn);
        let done = |converged, stalled, x, steps, history| IrOutcome {
            x,
            steps,
            residual_evals: steps,
            converged,
            stalled,
            residual_history: history,
        };
        if rn <= scale * norm_inf(&x) {
            return done(true, false, x, steps, history);
        }
        if !rn.is_finite() || steps >= max_steps.max(1) {
            return done(false, false, x, steps, history);
        }
        if let Some(p) = prev {
            stall = if rn > IR_PROGRESS_FACTOR * p { stall + 1 } else { 0 };
            if stall >= IR_STALL_LIMIT {
                return done(false, true, x, steps, history);
            }
        }
        let y = lu_solve_scaled(f, &r, level);
        x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi += yi);
        steps += 1;
    }
}

/// A square system solved by IR at a selected precision. On failure the
/// factors are redone one level finer, then replaced by fp64 factors; the
/// replacement is kept for later solves.
#[derive(Debug, Clone)]
pub(crate) struct MixedSystem {
    a: DenseMatrix,
    factors: LuFactors,
}

impl MixedSystem {
    /// Selects a precision for `a` and factors it, charging `step`.
    pub(crate) fn new(a: DenseMatrix, theta: f64, step: u8, ledger: &mut CostLedger) -> Result<Self> {
        let n = a.rows() as u64;
        let mut choice = select_precision_detailed(&a, theta);
        ledger.charge(step, "norm", n * n, Fp64, n * n * 8);
        if choice.probe.is_some() {
            ledger.charge(step, "probe lu", flops_lu(n), Fp32, n * n * 4);
            ledger.charge(step, "condest", choice.probe_solves as u64 * flops_trisolve_pair(n), Fp32, n * n * 4);
        }
        let probe = choice.probe.take();
        let mut level = choice.level;
        let factors = loop {
            let attempt = match (&probe, level) {
                (Some(p), Fp32) => Ok(p.clone()),
                _ => {
                    ledger.charge(step, "lu", flops_lu(n), level, n * n * level.storage_bytes());
                    lu_factor(&a, level)
                }
            };
            match (attempt, level.finer()) {
                (Ok(f), _) => break f,
                (Err(_), Some(finer)) => level = finer,
                (Err(e), None) => return Err(e),
            }
        };
        Ok(MixedSystem { a, factors })
    }

    pub(crate) fn level(&self) -> PrecisionLevel {
        self.factors.level()
    }

    pub(crate) fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub(crate) fn factors(&self) -> &LuFactors {
        &self.factors
    }

    fn charge_ir(&self, out: &IrOutcome, step: u8, ledger: &mut CostLedger) {
        let n = self.a.rows() as u64;
        let level = self.factors.level();
        ledger.charge(step, "ir solve", out.steps as u64 * flops_trisolve_pair(n), level, n * n * level.storage_bytes());
        ledger.charge(step, "ir residual", out.residual_evals as u64 * flops_matvec(n, n), Fp64, n * n * 8);
        ledger.charge(step, "ir update", out.steps as u64 * flops_vector(n), Fp64, n * 8);
    }

    fn refactor(&mut self, level: PrecisionLevel, step: u8, ledger: &mut CostLedger) -> Result<()> {
        let n = self.a.rows() as u64;
        ledger.charge(step, "lu", flops_lu(n), level, n * n * level.storage_bytes());
        self.factors = lu_factor(&self.a, level)?;
        Ok(())
    }

    /// Returns the solution and the number of correction solves.
    pub(crate) fn solve(&mut self, b: &[f64], max_steps: usize, step: u8, ledger: &mut CostLedger) -> Result<(Vec<f64>, usize)> {
        let tol = Fp64.unit_roundoff();
        let first = iterative_refinement(&self.a, &self.factors, b, tol, max_steps);
        self.charge_ir(&first, step, ledger);
        let mut total = first.steps;
        if first.converged || self.level() == Fp64 {
            return Ok((first.x, total));
        }
        if let Some(finer) = self.level().finer().filter(|&l| l != Fp64) {
            if self.refactor(finer, step, ledger).is_ok() {
                let retry = iterative_refinement(&self.a, &self.factors, b, tol, max_steps);
                self.charge_ir(&retry, step, ledger);
                total += retry.steps;
                if retry.converged {
                    return Ok((retry.x, total));
                }
            }
        }
        self.refactor(Fp64, step, ledger)?;
        let n = self.a.rows() as u64;
        ledger.charge(step, "direct solve", flops_trisolve_pair(n), Fp64, n * n * 8);
        Ok((self.factors.solve(b), total + 1))
    }
}
