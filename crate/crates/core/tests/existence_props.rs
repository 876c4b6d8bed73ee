use proptest::prelude::*;

use permanental::existence::{
    certify, check_necessary, eigenvalue_positivity, infdiv_series_check, inverse_is_m_matrix,
    vere_jones_check, CertifySettings, Verdict, VjOutcome, DEFAULT_TOL,
};
use permanental::matrix::{eigenvalues, inverse_with_condition, spectral_radius};
use permanental::numeric::logspace;
use permanental::{BetaOrder, KernelMatrix, SquareMatrix};

fn square(max_n: usize, lo: f64, hi: f64) -> impl Strategy<Value = SquareMatrix> {
    (1..=max_n).prop_flat_map(move |n| {
        prop::collection::vec(lo..hi, n * n)
            .prop_map(move |v| SquareMatrix::from_row_major(n, v).unwrap())
    })
}

/// (sI − P)⁻¹ for P ≥ 0 and s above the spectral radius of P.
fn m_inverse(max_n: usize) -> impl Strategy<Value = KernelMatrix> {
    (square(max_n, 0.0, 1.0), 0.05..2.0f64).prop_map(|(p, gap)| {
        let n = p.n();
        let p = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { p.get(i, j) }).unwrap();
        let s = spectral_radius(&p) + gap;
        let m = SquareMatrix::from_fn(n, |i, j| if i == j { s } else { -p.get(i, j) }).unwrap();
        KernelMatrix::new(inverse_with_condition(&m).unwrap().0)
    })
}

fn psd(max_n: usize) -> impl Strategy<Value = KernelMatrix> {
    square(max_n, -1.0, 1.0).prop_map(|a| {
        let n = a.n();
        KernelMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| a.get(i, k) * a.get(j, k)).sum::<f64>()
        })
        .unwrap()
    })
}

fn quick() -> CertifySettings {
    CertifySettings {
        max_total: 3,
        infdiv_degree: 3,
        ..CertifySettings::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn certify_is_invariant_under_diagonal_similarity(
        g in square(3, -1.0, 1.0),
        d in prop::collection::vec(0.3..3.0f64, 3),
        beta in prop::sample::select(vec![0.5, 1.0, 1.7]),
    ) {
        let n = g.n();
        let g = SquareMatrix::from_fn(n, |i, j| if i == j { g.get(i, i).abs() + 0.2 } else { g.get(i, j) }).unwrap();
        let beta = BetaOrder::new(beta).unwrap();
        let a = certify(&KernelMatrix::new(g.clone()), beta, &quick()).unwrap();
        let b = certify(&KernelMatrix::new(g.diagonal_similarity(&d[..n]).unwrap()), beta, &quick()).unwrap();
        prop_assert_eq!(a.verdict, b.verdict);
    }

    #[test]
    fn symmetric_psd_with_half_integer_beta_is_never_refuted(
        g in psd(4),
        k in 1u64..4,
    ) {
        let beta = BetaOrder::half_integer(k).unwrap();
        let rep = certify(&g, beta, &quick()).unwrap();
        prop_assert_ne!(rep.verdict, Verdict::Refuted, "{:?}", rep);
    }

    #[test]
    fn m_matrix_inverses_certify(g in m_inverse(4), beta in 0.1..3.0f64) {
        let beta = BetaOrder::new(beta).unwrap();
        prop_assert!(inverse_is_m_matrix(&g, DEFAULT_TOL).is_certified());
        let rep = certify(&g, beta, &quick()).unwrap();
        prop_assert_eq!(rep.verdict, Verdict::CertifiedAllBeta);
        for t in [0.5, 5.0] {
            let o = infdiv_series_check(&g, beta, t, 4, DEFAULT_TOL).unwrap();
            prop_assert!(!o.is_negative(), "{:?}", o);
        }
    }

    #[test]
    fn gaussian_covariances_pass_necessary_conditions(g in psd(5)) {
        let rep = check_necessary(&g);
        prop_assert!(rep.all_ok(), "{:?}", rep);
    }

    #[test]
    fn vere_jones_truncation_is_monotone(g in square(3, -1.0, 1.0)) {
        let g = KernelMatrix::new(g);
        let beta = BetaOrder::new(0.5).unwrap();
        let grid = [0.0, 0.1, 1.0, 10.0];
        let low = vere_jones_check(&g, beta, &grid, 2, DEFAULT_TOL).unwrap();
        let high = vere_jones_check(&g, beta, &grid, 3, DEFAULT_TOL).unwrap();
        if low.witness().is_some() {
            prop_assert!(high.witness().is_some());
        }
        if matches!(high, VjOutcome::PassUpTo { .. }) {
            prop_assert!(low.witness().is_none());
        }
    }
}

/// Real eigenvalues and the points r = −1/λ where det(I + rΓ) changes sign are
/// kept well inside and well separated on the grid; complex eigenvalues never
/// change the sign and are kept clearly off the real axis.
fn well_separated(g: &SquareMatrix) -> bool {
    let ev = eigenvalues(g);
    let scale = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut crossings = Vec::new();
    for z in &ev {
        if z.im != 0.0 {
            if z.im.abs() <= 1e-3 * scale {
                return false;
            }
        } else if z.re.abs() < 1e-3 * scale {
            return false;
        } else if z.re < 0.0 {
            crossings.push(-1.0 / z.re);
        }
    }
    crossings.sort_by(f64::total_cmp);
    crossings.iter().all(|&r| (2e-4..5e3).contains(&r))
        && crossings.windows(2).all(|w| w[1] / w[0] > 1.05)
}

#[test]
fn eigenvalue_positivity_matches_determinant_sign_on_dense_grid() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let mut grid = vec![0.0];
    grid.extend(logspace(1e-4, 1e4, 4001));
    let (mut tested, mut positive) = (0, 0);
    while tested < 500 {
        let n = rng.random_range(1..=5);
        let g = SquareMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0)).unwrap();
        if !well_separated(&g) {
            continue;
        }
        tested += 1;
        let det_ok = grid.iter().all(|&r| {
            let a =
                SquareMatrix::from_fn(n, |i, j| (i == j) as u8 as f64 + r * g.get(i, j)).unwrap();
            permanental::matrix::determinant(&a) > 0.0
        });
        let ev_ok = eigenvalue_positivity(&KernelMatrix::new(g.clone()));
        positive += ev_ok as usize;
        assert_eq!(ev_ok, det_ok, "{:?}", g.rows());
    }
    assert!(positive > 20 && positive < 480, "{positive}");
}
