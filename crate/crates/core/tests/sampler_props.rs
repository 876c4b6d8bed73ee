use permanental::permanent::laplace_transform;
use permanental::sampler::{
    decomposition_check, empirical_laplace, empirical_mean, sample_gaussian_square,
    sample_univariate,
};
use permanental::{BetaOrder, KernelMatrix};

fn kernel3() -> KernelMatrix {
    KernelMatrix::from_rows(&[
        vec![1.0, 0.4, 0.2],
        vec![0.4, 2.0, -0.3],
        vec![0.2, -0.3, 0.7],
    ])
    .unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn batches_are_bit_identical_across_runs_and_thread_counts() {
    let g = kernel3();
    let a = in_pool(1, || sample_gaussian_square(&g, 2, 20_000, 5).unwrap());
    let b = in_pool(1, || sample_gaussian_square(&g, 2, 20_000, 5).unwrap());
    let c = in_pool(4, || sample_gaussian_square(&g, 2, 20_000, 5).unwrap());
    assert_eq!(a.as_slice(), b.as_slice());
    assert_eq!(a.as_slice(), c.as_slice());
    let d = sample_gaussian_square(&g, 2, 20_000, 6).unwrap();
    assert_ne!(a.as_slice(), d.as_slice());
}

#[test]
fn relabeling_points_permutes_the_law() {
    let g = kernel3();
    let perm = [2usize, 0, 1];
    let h = KernelMatrix::new(g.matrix().permute(&perm).unwrap());
    let a = sample_gaussian_square(&g, 1, 100_000, 11).unwrap();
    let b = sample_gaussian_square(&h, 1, 100_000, 12).unwrap();
    for (new, &old) in perm.iter().enumerate() {
        let (ma, sa) = empirical_mean(&a, old);
        let (mb, sb) = empirical_mean(&b, new);
        assert!(
            (ma - mb).abs() <= 3.0 * (sa * sa + sb * sb).sqrt(),
            "{old}->{new}"
        );
    }
    let alpha = vec![vec![0.5, 0.2, 1.0]];
    let alpha_p: Vec<Vec<f64>> = vec![perm.iter().map(|&o| alpha[0][o]).collect()];
    let la = empirical_laplace(&a, &alpha).unwrap();
    let lb = empirical_laplace(&b, &alpha_p).unwrap();
    let se = (la.se[0].powi(2) + lb.se[0].powi(2)).sqrt();
    assert!((la.mean[0] - lb.mean[0]).abs() <= 3.0 * se);
}

#[test]
fn gaussian_square_laplace_transform_matches_determinant() {
    let g = kernel3();
    let grid = vec![
        vec![0.2, 0.0, 0.0],
        vec![0.0, 0.5, 0.3],
        vec![1.0, 1.0, 1.0],
        vec![0.1, 2.0, 0.4],
        vec![3.0, 0.0, 0.5],
    ];
    for copies in [1usize, 3] {
        let batch = sample_gaussian_square(&g, copies, 100_000, 40 + copies as u64).unwrap();
        let lt = empirical_laplace(&batch, &grid).unwrap();
        let beta = BetaOrder::half_integer(copies as u64).unwrap();
        for (k, a) in grid.iter().enumerate() {
            let exact = laplace_transform(g.matrix(), beta, a).unwrap();
            assert!(
                (lt.mean[k] - exact).abs() <= 3.0 * lt.se[k],
                "k={copies} {a:?}"
            );
        }
        for i in 0..3 {
            let (m, se) = empirical_mean(&batch, i);
            assert!((m - copies as f64 * g.get(i, i)).abs() <= 3.0 * se);
        }
    }
}

#[test]
fn univariate_gamma_matches_its_laplace_transform() {
    let beta = BetaOrder::new(0.37).unwrap();
    let batch = sample_univariate(1.6, beta, 100_000, 3).unwrap();
    let grid: Vec<Vec<f64>> = [0.1, 0.5, 1.0, 2.0, 5.0].iter().map(|&a| vec![a]).collect();
    let lt = empirical_laplace(&batch, &grid).unwrap();
    for (k, a) in grid.iter().enumerate() {
        let exact = (1.0 + a[0] * 1.6f64).powf(-0.37);
        assert!((lt.mean[k] - exact).abs() <= 3.0 * lt.se[k]);
    }
}

#[test]
fn decomposition_controls() {
    let g = KernelMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
    let same = decomposition_check(&g, (1, 1), 2, 100_000, 9).unwrap();
    assert!(same.max_ks < same.critical, "{same:?}");
    let diff = decomposition_check(&g, (1, 1), 3, 100_000, 9).unwrap();
    assert!(diff.max_ks > diff.critical, "{diff:?}");
}
