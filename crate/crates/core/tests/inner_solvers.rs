use nalgebra::{DMatrix, DVector};
use ncd_core::linalg::{condest_1, lu_factor, norm_1, norm_inf, DenseMatrix};
use ncd_core::ncd::{generate_random_ncd, NcdChain, Provenance};
use ncd_core::precision::PrecisionLevel::{self, Bf16, Fp16, Fp32, Fp64};
use ncd_core::solvers::{
    inner_tolerance, iterative_refinement, kt_schedule, richardson_precond, select_precision,
    select_precision_detailed, shifted_block_transpose, SolverOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

fn from_na(a: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// `Q1 diag(sigma) Q2^T` with singular values log-spaced from 1 to `1/kappa`.
fn conditioned_matrix(n: usize, kappa: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let mut orth = || DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q();
    let (q1, q2) = (orth(), orth());
    let sigma = DVector::from_fn(n, |i, _| kappa.powf(-(i as f64) / (n - 1) as f64));
    from_na(&(q1 * DMatrix::from_diagonal(&sigma) * q2.transpose()))
}

#[test]
fn identity_selects_bfloat16() {
    assert_eq!(select_precision(&DenseMatrix::identity(5), 1e-2), Bf16);
}

#[test]
fn threshold_arithmetic_selects_single() {
    // ||A||_1 = 1 and kappa_1 = 1e5.
    let a = DenseMatrix::from_diag(&[1.0, 1e-5]);
    let choice = select_precision_detailed(&a, 1e-2);
    assert!((choice.kappa * choice.norm_1 / 1e5 - 1.0).abs() < 1e-6);
    assert_eq!(choice.level, Fp32);
    // Tighter threshold pushes to double.
    assert_eq!(select_precision(&a, 1e-3), Fp64);
}

#[test]
fn singular_probe_falls_back_to_double() {
    let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
    let choice = select_precision_detailed(&a, 1e-2);
    assert_eq!(choice.level, Fp64);
    assert!(choice.fallback);
}

#[test]
fn generated_blocks_select_single_or_coarser() {
    let coarse = (0..10)
        .filter(|&seed| {
            let chain = generate_random_ncd(&[50, 50], 0.1, seed).unwrap();
            select_precision(&shifted_block_transpose(&chain, 0), 1e-2) <= Fp32
        })
        .count();
    assert!(coarse >= 9, "{coarse}/10");
}

#[test]
fn refinement_on_trivial_systems() {
    let tol = Fp64.unit_roundoff();
    for level in PrecisionLevel::ALL {
        let f = lu_factor(&DenseMatrix::identity(3), level).unwrap();
        let out = iterative_refinement(&DenseMatrix::identity(3), &f, &[0.5, -2.0, 3.0], tol, 50);
        assert!(out.converged && out.steps == 1, "{level}");
        assert_eq!(out.x, vec![0.5, -2.0, 3.0]);
    }
    let a = DenseMatrix::from_diag(&[2.0, 4.0]);
    let f = lu_factor(&a, Fp16).unwrap();
    let out = iterative_refinement(&a, &f, &[2.0, 4.0], tol, 50);
    assert_eq!(out.x, vec![1.0, 1.0]);
    assert_eq!(out.steps, 1);
}

#[test]
fn refinement_converges_on_half_precision_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let u16 = Fp16.unit_roundoff();
    let tol = Fp64.unit_roundoff();
    for _ in 0..5 {
        let a = conditioned_matrix(30, 1e2, &mut rng);
        let b: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let exact = lu_factor(&a, Fp64).unwrap().solve(&b);
        let f = lu_factor(&a, Fp16).unwrap();
        let kappa = condest_1(&a, &f).unwrap();
        let out = iterative_refinement(&a, &f, &b, tol, 50);
        assert!(out.converged, "kappa {kappa}: {:?}", out.residual_history);
        let err = |x: &[f64]| norm_inf(&x.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm_inf(&exact);
        assert!(err(&out.x) <= 1e-12);

        let floor = 1e3 * tol * kappa;
        let mut prev = err(&iterative_refinement(&a, &f, &b, 0.0, 1).x);
        for k in 2..=out.steps {
            if prev <= floor {
                break;
            }
            let cur = err(&iterative_refinement(&a, &f, &b, 0.0, k).x);
            assert!(cur / prev <= 10.0 * u16 * kappa, "step {k}: {} vs {}", cur / prev, 10.0 * u16 * kappa);
            prev = cur;
        }
    }
}

#[test]
fn refinement_stall_guard_trips_on_hopeless_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = conditioned_matrix(30, 1e6, &mut rng);
    let f = lu_factor(&a, Bf16).unwrap();
    let b = vec![1.0; 30];
    let out = iterative_refinement(&a, &f, &b, Fp64.unit_roundoff(), 50);
    assert!(!out.converged);
}

#[test]
fn schedule_examples() {
    let opts = SolverOptions::default();
    assert_eq!(kt_schedule(1, &opts), 10);
    assert_eq!(kt_schedule(3, &opts), 40);
    assert_eq!(kt_schedule(40, &opts), 10_000);
    let flat = SolverOptions { ri_growth: 1.0, ..SolverOptions::default() };
    assert!((1..20).all(|t| kt_schedule(t, &flat) == 10));

    assert_eq!(inner_tolerance(1, 0.1), 0.1);
    assert!((inner_tolerance(3, 0.1) - 1e-3).abs() < 1e-18);
    assert_eq!(inner_tolerance(50, 0.1), 1e-14);
}

fn precond(chain: &NcdChain, level: PrecisionLevel) -> Vec<ncd_core::LuFactors> {
    (0..chain.m()).map(|i| lu_factor(&shifted_block_transpose(chain, i), level).unwrap()).collect()
}

/// Dense `D^T - U^T`: the block lower-triangular operator Richardson inverts.
fn splitting_operator(chain: &NcdChain) -> DMatrix<f64> {
    let part = chain.partition();
    let p = to_na(chain.p());
    let mut a = DMatrix::identity(chain.n(), chain.n());
    for i in 0..part.m() {
        for j in 0..=i {
            let (ri, rj) = (part.range(i), part.range(j));
            let block = p.view((rj.start, ri.start), (rj.len(), ri.len())).transpose();
            let mut target = a.view_mut((ri.start, rj.start), (ri.len(), rj.len()));
            target -= block;
        }
    }
    a
}

#[test]
fn richardson_trivial_cases() {
    let chain = generate_random_ncd(&[10, 10], 0.05, 3).unwrap();
    let f = precond(&chain, Fp32);
    let out = richardson_precond(&chain, &[0.0; 20], 10, 1e-8, &f).unwrap();
    assert_eq!(out.steps, 0);
    assert!(out.x.iter().all(|&v| v == 0.0));

    // Block-diagonal chain: the preconditioner is the operator.
    let part = chain.partition().clone();
    let p = DenseMatrix::from_fn(20, 20, |i, j| {
        if part.block_of(i) == part.block_of(j) { chain.p()[(i, j)] } else { 0.0 }
    });
    let decoupled = NcdChain::from_parts(p, part, 0.0, Provenance::Manual).unwrap();
    let b: Vec<f64> = (0..20).map(|k| 0.01 * (k + 1) as f64).collect();
    let out = richardson_precond(&decoupled, &b, 10, 1e-12, &precond(&decoupled, Fp64)).unwrap();
    assert_eq!(out.steps, 1);
    let out = richardson_precond(&decoupled, &b, 10, 1e-5, &precond(&decoupled, Fp32)).unwrap();
    assert_eq!(out.steps, 1);
}

#[test]
fn richardson_rate_within_spectral_radius() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for sizes in [vec![15, 15], vec![10, 12, 9, 11]] {
        let chain = generate_random_ncd(&sizes, 0.05, 17).unwrap();
        let a = splitting_operator(&chain);
        let n = chain.n();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..chain.m() {
            let r = chain.partition().range(i);
            d.view_mut((r.start, r.start), (r.len(), r.len()))
                .copy_from(&a.view((r.start, r.start), (r.len(), r.len())));
        }
        let iter = DMatrix::identity(n, n) - d.lu().solve(&a).unwrap();
        let rho = iter.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);

        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let f = precond(&chain, Fp32);
        let residual = |k: usize| {
            let x = richardson_precond(&chain, &b, k, 0.0, &f).unwrap().x;
            let r = DVector::from_column_slice(&b) - &a * DVector::from_column_slice(&x);
            norm_1(r.as_slice())
        };
        let bnorm = norm_1(&b);
        let mut prev = residual(chain.m());
        for k in chain.m() + 1..chain.m() + 6 {
            if prev <= 1e-12 * bnorm {
                break;
            }
            let cur = residual(k);
            assert!(cur / prev <= rho + 0.05, "{sizes:?} step {k}: {} vs rho {rho}", cur / prev);
            prev = cur;
        }
    }
}
