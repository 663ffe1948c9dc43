//! Cross-checks against oracles that do not share code with the library.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use semigroup_bench::defects::{audit_bound, chernoff_defect_norm, ritt_constant, BoundId, Probe, Verdict};
use semigroup_bench::families::{corpus, random_unit_vectors, FamilyKind, FamilySpec};
use semigroup_bench::linalg::{expm, opnorm, powm};
use semigroup_bench::poisson::{poisson_abs_moment, poisson_split, poisson_var_sum};
use semigroup_bench::regions::{dist_to_hull, numerical_range_boundary};
use semigroup_bench::Mat;
use statrs::function::gamma::ln_gamma;

/// Unitary from the QR factor of a matrix with the given entries.
fn unitary_from(entries: &[(f64, f64)], d: usize) -> DMatrix<C64> {
    let g = DMatrix::from_fn(d, d, |i, j| {
        let (re, im) = entries[i * d + j];
        C64::new(re, im) + if i == j { C64::new(2.0, 0.0) } else { C64::new(0.0, 0.0) }
    });
    g.qr().q()
}

fn conj_diag(u: &DMatrix<C64>, diag: &[C64]) -> DMatrix<C64> {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag));
    u * d * u.adjoint()
}

fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn arb_normal(max_d: usize) -> impl Strategy<Value = (DMatrix<C64>, Vec<C64>)> {
    (1..=max_d).prop_flat_map(|d| {
        (
            prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), d * d),
            prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), d),
        )
            .prop_map(move |(u, lam)| {
                let lam: Vec<C64> = lam.into_iter().map(|(a, b)| C64::new(a, b)).collect();
                (unitary_from(&u, d), lam)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expm_matches_eigendecomposition((u, lam) in arb_normal(6)) {
        let m = Mat::from_dmatrix(conj_diag(&u, &lam)).unwrap();
        let exp_lam: Vec<C64> = lam.iter().map(|z| z.exp()).collect();
        let oracle = conj_diag(&u, &exp_lam);
        let scale = exp_lam.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let got = expm(&m).unwrap();
        prop_assert!(max_diff(got.as_dmatrix(), &oracle) < 1e-12 * scale);
    }

    #[test]
    fn powm_matches_eigendecomposition((u, lam) in arb_normal(5), n in 0u64..40) {
        let lam: Vec<C64> = lam.iter().map(|z| z / 3.0).collect();
        let m = Mat::from_dmatrix(conj_diag(&u, &lam)).unwrap();
        let pow_lam: Vec<C64> = lam.iter().map(|z| z.powu(n as u32)).collect();
        let oracle = conj_diag(&u, &pow_lam);
        let scale = pow_lam.iter().map(|z| z.norm()).fold(1.0, f64::max);
        prop_assert!(max_diff(powm(&m, n).as_dmatrix(), &oracle) < 1e-12 * scale);
    }

    #[test]
    fn defect_is_unitarily_invariant(
        seed in 0u64..10_000,
        d in 1usize..6,
        u in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 36),
        n in 1u64..200,
    ) {
        let c = corpus(&[FamilySpec::new(FamilyKind::RandomContraction, d, seed)], 1).unwrap().remove(0).mat;
        let q = unitary_from(&u[..d * d], d);
        let cq = Mat::from_dmatrix(&q * c.as_dmatrix() * q.adjoint()).unwrap();
        let a = chernoff_defect_norm(&c, n).unwrap();
        let b = chernoff_defect_norm(&cq, n).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a));
    }

    #[test]
    fn sqrt_n_bound_never_fails_on_contractions(seed in 0u64..100_000, d in 1usize..7) {
        let c = corpus(&[FamilySpec::new(FamilyKind::RandomContraction, d, seed)], 1).unwrap().remove(0).mat;
        let grid: Vec<u64> = (1..=32).collect();
        for x in random_unit_vectors(d, 2, seed).unwrap() {
            let s = audit_bound(&c, &Probe::Vector(x), &grid, 0.0, BoundId::SqrtN, None).unwrap();
            prop_assert_eq!(s.violations, 0);
        }
    }

    #[test]
    fn split_parts_recombine(n in 1u64..20_000, delta in -0.5..0.5f64) {
        let s = poisson_split(n, delta).unwrap();
        let total = poisson_abs_moment(n).unwrap();
        prop_assert!((s.central_abs + s.tail_abs - total).abs() <= 1e-12 * total.max(1.0));
        prop_assert!((0.0..=1.0).contains(&s.tail_prob));
    }
}

/// `E|N − n| = 2e^{−n} n^{n+1} / n!` for `N ~ Poisson(n)`.
fn abs_moment_closed_form(n: u64) -> f64 {
    let x = n as f64;
    2.0 * (-x + (x + 1.0) * x.ln() - ln_gamma(x + 1.0)).exp()
}

#[test]
fn poisson_moments_match_closed_forms() {
    let mut n = 1u64;
    while n <= 10_000 {
        let m = poisson_abs_moment(n).unwrap();
        let oracle = abs_moment_closed_form(n);
        assert!((m - oracle).abs() <= 1e-9 * oracle, "n={n}: {m} vs {oracle}");
        assert!(m <= (n as f64).sqrt());
        let v = poisson_var_sum(n).unwrap();
        assert!((v - n as f64).abs() <= 1e-10 * n as f64);
        n *= 2;
    }
}

#[test]
fn normal_numerical_range_traces_the_eigenvalue_hull() {
    let u = unitary_from(
        &[
            (0.3, -0.2),
            (0.1, 0.5),
            (-0.4, 0.2),
            (0.7, 0.1),
            (0.0, -0.3),
            (0.2, 0.2),
            (0.5, 0.5),
            (-0.1, 0.0),
            (0.3, 0.3),
        ],
        3,
    );
    let lam = [C64::new(0.9, 0.1), C64::new(-0.3, 0.6), C64::new(0.1, -0.7)];
    let m = Mat::from_dmatrix(conj_diag(&u, &lam)).unwrap();
    let b = numerical_range_boundary(&m, 512).unwrap();
    for (&th, &z) in b.angles.iter().zip(&b.points) {
        // Support function of the hull in direction θ.
        let rot = C64::from_polar(1.0, th);
        let h = lam.iter().map(|l| (rot * l).re).fold(f64::NEG_INFINITY, f64::max);
        assert!(((rot * z).re - h).abs() < 1e-8, "θ={th}");
        assert!(dist_to_hull(z, &lam) < 1e-8);
    }
}

#[test]
fn ritt_constant_of_scalar_matches_closed_form() {
    // For λ ∈ (0, 1): (n+1)λⁿ(1−λ), maximised over n = 1..N directly.
    for lam in [0.1, 0.5, 0.9, 0.99] {
        let c = Mat::from_real_diag(&[lam]).unwrap();
        let r = ritt_constant(&c, 256).unwrap();
        let oracle = (1..=256).map(|n| (n as f64 + 1.0) * lam.powi(n) * (1.0 - lam)).fold(0.0, f64::max);
        assert!((r.k_hat - oracle).abs() < 1e-12, "λ={lam}");
    }
}

#[test]
fn quasi_sectorial_audit_marks_regime() {
    let c = Mat::from_real_diag(&[0.5, 0.9]).unwrap();
    let r = ritt_constant(&c, 512).unwrap();
    let grid = [1u64, 2, 3, 8, 64];
    let s = audit_bound(&c, &Probe::Norm, &grid, 0.5, BoundId::QuasiSectorial, Some(&r)).unwrap();
    // δ = ½: ⌊n⌋ ≤ (n+1)/2 only for n = 1.
    assert_eq!(s.audits[0].verdict, Verdict::Holds);
    assert!(s.audits[1..].iter().all(|a| a.verdict == Verdict::OutOfRegime));
    assert!(opnorm(&c).unwrap() < 1.0);
}

#[test]
fn ritt_constant_of_grid_without_half_misses_one_half() {
    // max over λ on {k/499} of 2λ(1−λ) sits at k = 249, 250; n = 1 dominates every larger n.
    let grid: Vec<f64> = (0..=499).map(|k| k as f64 / 499.0).collect();
    let r = ritt_constant(&Mat::from_real_diag(&grid).unwrap(), 512).unwrap();
    let oracle = 2.0 * 249.0 * 250.0 / (499.0 * 499.0);
    assert!((r.k_hat - oracle).abs() < 1e-12);
    assert!(0.5 - r.k_hat > 1e-6);
}
