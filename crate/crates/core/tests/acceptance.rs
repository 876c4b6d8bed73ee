//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints its PASS/FAIL line; the process exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use permanental::existence::{
    default_r_grid, infdiv_series_check, inverse_is_m_matrix, is_m_matrix, vere_jones_check,
    InfDivOutcome, VjOutcome, DEFAULT_TOL,
};
use permanental::levy::{
    a_epsilon, a_epsilon_uniform, fbmq_kernel, stable_integral, stable_integral_closed, u_killed,
    u_t0, LevyExponent, QuadratureSettings,
};
use permanental::matrix::{inverse_with_condition, min_symmetric_eigenvalue};
use permanental::metric::{
    default_radii, distance_table, entropy_profile, sqrt_symmetrize, triangle_check, DistanceTable,
    FiniteMeasure,
};
use permanental::permanent::{
    beta_permanent_bruteforce, beta_permanent_dp, laplace_transform, moment, moment_numdiff_oracle,
    pairwise_independent_kernel, MomentConvention,
};
use permanental::sampler::{
    empirical_covariance, empirical_laplace, sample_bivariate, sample_gaussian_square,
};
use permanental::{BetaOrder, KernelMatrix, MultiIndex, SquareMatrix};

type Outcome = Result<String, String>;

fn rng(criterion: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xACCE_0000 + criterion)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Γ = (sI − P)⁻¹ with P ≥ 0 sparse-ish and s > ρ(P): always an M-matrix inverse.
fn random_m_inverse(r: &mut ChaCha8Rng, n: usize, symmetric: bool) -> KernelMatrix {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j && r.random_bool(0.7) {
                p[i * n + j] = r.random_range(0.0..1.0);
            }
        }
    }
    if symmetric {
        for i in 0..n {
            for j in 0..i {
                p[i * n + j] = p[j * n + i];
            }
        }
    }
    let pm = SquareMatrix::from_row_major(n, p.clone()).unwrap();
    let rho = permanental::matrix::spectral_radius(&pm);
    let s = rho + r.random_range(0.05..2.0);
    let m = SquareMatrix::from_fn(n, |i, j| if i == j { s } else { -p[i * n + j] }).unwrap();
    let (inv, _) = inverse_with_condition(&m).unwrap();
    KernelMatrix::new(inv)
}

fn c1_permanent_oracle() -> Outcome {
    let mut r = rng(1);
    let betas = [0.3, 0.5, 1.0, 2.0];
    let mut worst = 0.0f64;
    for t in 0..200 {
        let n = 2 + t % 7;
        let beta = BetaOrder::new(betas[t % 4]).unwrap();
        let b = SquareMatrix::from_fn(n, |_, _| r.random_range(-1.0..1.0)).unwrap();
        let bf = beta_permanent_bruteforce(&b, beta).unwrap();
        let dp = beta_permanent_dp(&b, beta).unwrap();
        worst = worst.max((dp - bf).abs() / bf.abs());
    }
    check(
        worst <= 1e-10,
        format!("max relative error {worst:.3e} (limit 1e-10)"),
    )
}

fn c2_pairwise_fixture() -> Outcome {
    let mut r = rng(2);
    let half = BetaOrder::half_integer(1).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (a, b, c) = (
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
        );
        let v = beta_permanent_dp(&pairwise_independent_kernel(a, b, c), half).unwrap();
        worst = worst.max((v - (0.125 + a * b * c / 2.0)).abs());
    }
    check(
        worst <= 1e-12,
        format!("max abs error {worst:.3e} (limit 1e-12)"),
    )
}

fn c3_bivariate_law() -> Outcome {
    let mut r = rng(3);
    let grid: Vec<Vec<f64>> = vec![
        vec![0.3, 0.0],
        vec![0.0, 0.7],
        vec![0.5, 0.5],
        vec![1.0, 2.0],
        vec![2.5, 1.5],
    ];
    let mut worst = 0.0f64;
    let mut nonsym = 0;
    for t in 0..10u64 {
        let g11: f64 = r.random_range(0.3..2.0);
        let g22 = r.random_range(0.3..2.0);
        let prod: f64 = r.random_range(0.0..1.0) * g11 * g22;
        let (g12, g21) = if t % 3 == 0 {
            (prod.sqrt(), prod.sqrt())
        } else {
            let f: f64 = r.random_range(0.2..5.0);
            let sign = if t % 3 == 1 { 1.0 } else { -1.0 };
            (sign * (prod * f).sqrt(), sign * (prod / f).sqrt())
        };
        if (g12 - g21).abs() > 1e-12 {
            nonsym += 1;
        }
        let g = KernelMatrix::from_rows(&[vec![g11, g12], vec![g21, g22]]).unwrap();
        let copies = 1 + (t as usize % 2);
        let beta = BetaOrder::half_integer(copies as u64).unwrap();
        let batch = sample_bivariate(&g, copies, 100_000, 1000 + t).unwrap();
        let lt = empirical_laplace(&batch, &grid).unwrap();
        for (k, a) in grid.iter().enumerate() {
            let exact = laplace_transform(g.matrix(), beta, a).unwrap();
            worst = worst.max((lt.mean[k] - exact).abs() / lt.se[k]);
        }
    }
    check(
        worst <= 3.0,
        format!("max |emp - exact| / SE = {worst:.2} (limit 3), {nonsym} non-symmetric kernels"),
    )
}

fn c4_m_matrix_fixtures() -> Outcome {
    let b = SquareMatrix::from_fn(3, |i, j| (i.min(j) + 1) as f64).unwrap();
    let (inv, _) = inverse_with_condition(&b).unwrap();
    let brown = is_m_matrix(&inv, DEFAULT_TOL).is_certified();
    let mut refuted = Vec::new();
    for eps in [0.05, 0.1, 0.3] {
        let a = KernelMatrix::new(a_epsilon(eps, [1.0, 2.0, 3.0]).unwrap());
        let u = KernelMatrix::new(a_epsilon_uniform(eps, 1.0, 2.0, 3.0).unwrap());
        refuted.push(
            !inverse_is_m_matrix(&a, DEFAULT_TOL).is_certified()
                && !inverse_is_m_matrix(&u, DEFAULT_TOL).is_certified(),
        );
    }
    check(
        brown && refuted.iter().all(|&x| x),
        format!("Brownian certified: {brown}; A_eps refuted for 0.05/0.1/0.3: {refuted:?}"),
    )
}

fn c5_no_false_refutation() -> Outcome {
    let mut r = rng(5);
    let betas = [0.3, 0.5, 1.0, 2.0];
    let grid = default_r_grid();
    let (mut vj_bad, mut id_bad, mut errors) = (0, 0, 0);
    for t in 0..500 {
        let n = 1 + t % 4;
        let g = random_m_inverse(&mut r, n, false);
        let beta = BetaOrder::new(betas[t % 4]).unwrap();
        match vere_jones_check(&g, beta, &grid, 4, DEFAULT_TOL) {
            Ok(VjOutcome::Violation { .. }) => vj_bad += 1,
            Ok(_) => {}
            Err(_) => errors += 1,
        }
        for tt in [10.0, 100.0, 1000.0] {
            match infdiv_series_check(&g, beta, tt, 4, DEFAULT_TOL) {
                Ok(o) if o.is_negative() => id_bad += 1,
                Ok(InfDivOutcome::Diverges { .. }) | Err(_) => errors += 1,
                Ok(_) => {}
            }
        }
    }
    check(
        vj_bad + id_bad + errors == 0,
        format!("{vj_bad} Vere-Jones violations, {id_bad} negative series coefficients, {errors} errors over 500 kernels"),
    )
}

fn c6_triangle() -> Outcome {
    let mut r = rng(6);
    let (mut viol, mut min_eig) = (0usize, f64::INFINITY);
    for t in 0..1000 {
        let g = random_m_inverse(&mut r, 3, t % 5 == 0);
        viol += triangle_check(&distance_table(&g).unwrap(), 1e-9).len();
        let s = sqrt_symmetrize(&g).unwrap();
        min_eig = min_eig.min(min_symmetric_eigenvalue(&s));
    }
    check(
        viol == 0 && min_eig >= -1e-8,
        format!(
            "{viol} triangle violations; min eigenvalue of sqrt-symmetrized kernels {min_eig:.3e}"
        ),
    )
}

fn c7_fbmq_quadrature() -> Outcome {
    let q = QuadratureSettings::default();
    let pts: Vec<f64> = (0..10).map(|i| 0.1 + 1.9 * i as f64 / 9.0).collect();
    let mut worst = 0.0f64;
    for (alpha, skew) in [(0.5, 0.0), (0.5, 0.5), (0.8, -0.3)] {
        let psi = LevyExponent::asymmetric_stable(alpha, skew, 1.0).unwrap();
        for &x in &pts {
            for &y in &pts {
                let num = u_t0(&psi, x, y, &q).map_err(|e| format!("({x},{y}): {e}"))?;
                let cf = fbmq_kernel(alpha, skew, x, y).unwrap();
                worst = worst
                    .max((num.u_xy - cf.u_xy).abs())
                    .max((num.u_yx - cf.u_yx).abs());
            }
        }
    }
    check(
        worst <= 1e-3,
        format!("max abs error {worst:.3e} (limit 1e-3)"),
    )
}

fn c8_special_function() -> Outcome {
    let q = QuadratureSettings::default();
    let mut worst = 0.0f64;
    for alpha in [0.3, 0.5, 0.8] {
        let num = stable_integral(alpha, &q).unwrap();
        let exact = stable_integral_closed(alpha).unwrap();
        worst = worst.max((num - exact).norm());
    }
    check(worst <= 1e-6, format!("max error {worst:.3e} (limit 1e-6)"))
}

fn c9_kernel_structure() -> Outcome {
    let mut r = rng(9);
    let q = QuadratureSettings::default();
    let families = [
        LevyExponent::asymmetric_stable(0.5, 0.4, 1.0).unwrap(),
        LevyExponent::symmetric_stable(0.7, 1.0).unwrap(),
        LevyExponent::brownian(),
    ];
    let (mut anti, mut min_eig) = (0.0f64, f64::INFINITY);
    for psi in &families {
        let pts: Vec<f64> = (0..12).map(|_| r.random_range(-2.0..2.0)).collect();
        let n = pts.len();
        let mut rg = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = u_killed(psi, 1.0, pts[i], pts[j], &q).unwrap();
                let kt = u_killed(psi, 1.0, pts[j], pts[i], &q).unwrap();
                anti = anti.max((k.h + kt.h).abs());
                rg[i * n + j] = k.r;
                rg[j * n + i] = k.r;
            }
        }
        for i in 0..4 {
            let (x, y) = (pts[i], pts[i + 4]);
            let k = u_t0(psi, x, y, &q).unwrap();
            let kt = u_t0(psi, y, x, &q).unwrap();
            anti = anti.max((k.h + kt.h).abs());
        }
        let gram = SquareMatrix::from_row_major(n, rg).unwrap();
        min_eig = min_eig.min(min_symmetric_eigenvalue(&gram));
    }
    check(
        anti <= 1e-10 && min_eig >= -1e-8,
        format!("max |H(x,y)+H(y,x)| {anti:.3e}; min Gram eigenvalue {min_eig:.3e}"),
    )
}

fn c10_covariance_identity() -> Outcome {
    let mut r = rng(10);
    let mut worst = 0.0f64;
    for t in 0..10u64 {
        let a = SquareMatrix::from_fn(3, |_, _| r.random_range(-1.0..1.0)).unwrap();
        let g = KernelMatrix::from_fn(3, |i, j| {
            (0..3).map(|k| a.get(i, k) * a.get(j, k)).sum::<f64>() + if i == j { 0.1 } else { 0.0 }
        })
        .unwrap();
        let batch = sample_gaussian_square(&g, 1, 100_000, 2000 + t).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let (c, se) = empirical_covariance(&batch, i, j);
                let e = 2.0 * g.get(i, j) * g.get(j, i);
                worst = worst.max((c - e).abs() / se);
            }
        }
    }
    check(
        worst <= 3.0,
        format!("max |cov - 2G(x,y)G(y,x)| / SE = {worst:.2} (limit 3)"),
    )
}

fn c11_moment_convention() -> Outcome {
    let mut r = rng(11);
    let conventions = [MomentConvention::VereJones, MomentConvention::HalfScaled];
    let mut agree = [0usize; 2];
    let mut both_or_neither = 0;
    for t in 0..20 {
        let n = 2 + t % 2;
        let g = SquareMatrix::from_fn(n, |i, j| {
            if i == j {
                r.random_range(0.5..1.5)
            } else {
                r.random_range(-0.5..0.8)
            }
        })
        .unwrap();
        let beta = BetaOrder::new(r.random_range(0.2..2.0)).unwrap();
        let nd = moment_numdiff_oracle(&g, beta, &MultiIndex::ones(n), 1e-3).unwrap();
        let hits: Vec<bool> = conventions
            .iter()
            .map(|&c| (moment(&g, beta, c).unwrap() - nd).abs() <= 1e-4)
            .collect();
        if hits[0] == hits[1] {
            both_or_neither += 1;
        }
        for k in 0..2 {
            agree[k] += hits[k] as usize;
        }
    }
    check(
        agree[0] == 20 && agree[1] == 0 && both_or_neither == 0,
        format!(
            "vere_jones agrees on {}/20, half_scaled on {}/20",
            agree[0], agree[1]
        ),
    )
}

fn c12_entropy() -> Outcome {
    let n = 512;
    let s: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let d = DistanceTable::from_fn(n, |i, j| (s[i] - s[j]).abs().sqrt()).unwrap();
    let prof = entropy_profile(&d, &FiniteMeasure::uniform(n), &default_radii(&d)).unwrap();
    let f = &prof.flags;
    let detail = format!(
        "J(D) finite: {}; J(finest)/J(D) = {:.4} (< 0.05: {}); ratio growth = {:.3} (>= 10: {})",
        f.j_diameter_finite,
        f.j_finest_over_j_diameter,
        f.j_vanishes,
        f.ratio_growth,
        f.ratio_diverges
    );
    check(
        f.j_diameter_finite && f.j_vanishes && f.ratio_diverges,
        detail,
    )
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn c13_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_permanental");
    let tmp = tempfile::tempdir().unwrap();
    let matrix = tmp.path().join("kernel.json");
    fs::write(
        &matrix,
        r#"{"n":3,"entries":[[1.0,0.4,0.2],[0.3,1.5,0.5],[0.1,0.6,0.8]]}"#,
    )
    .unwrap();
    let sym = tmp.path().join("sym.json");
    fs::write(&sym, r#"{"n":2,"entries":[[1.0,0.5],[0.5,2.0]]}"#).unwrap();
    let m = matrix.to_str().unwrap();
    let sm = sym.to_str().unwrap();
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("check", vec!["check", "--matrix", m, "--beta", "0.5"]),
        (
            "kernel",
            vec![
                "kernel", "--family", "fbmq", "--alpha", "0.5", "--skew", "0.3", "--grid",
                "0:0.25:2",
            ],
        ),
        (
            "kernel-quadrature",
            vec![
                "kernel",
                "--family",
                "stable",
                "--alpha",
                "0.5",
                "--skew",
                "0.3",
                "--points",
                "0.5,1,1.5",
            ],
        ),
        ("metric", vec!["metric", "--matrix", m]),
        (
            "sample",
            vec![
                "sample", "--matrix", sm, "--m", "5000", "--seed", "7", "--copies", "2",
            ],
        ),
        ("moments", vec!["moments", "--matrix", m, "--beta", "0.7"]),
        ("fixtures", vec!["fixtures", "--seed", "3"]),
    ];
    let mut mismatched = Vec::new();
    for (name, args) in &runs {
        let mut snaps = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("{name}-{rep}"));
            let status = Command::new(bin)
                .args(args)
                .args(["--threads", "1"])
                .env("PERMANENTAL_OUT", &out)
                .output()
                .map_err(|e| e.to_string())?;
            let code = status.status.code().unwrap_or(-1);
            if code == 2 || code == -1 {
                return Err(format!(
                    "{name} exited {code}: {}",
                    String::from_utf8_lossy(&status.stderr)
                ));
            }
            snaps.push(snapshot(&out));
        }
        if snaps[0].is_empty() || snaps[0] != snaps[1] {
            mismatched.push(*name);
        }
    }
    check(
        mismatched.is_empty(),
        format!(
            "{} subcommand runs compared; mismatched: {mismatched:?}",
            runs.len()
        ),
    )
}

fn main() {
    // Accept and ignore libtest arguments such as `--nocapture` or a filter.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("01 permanent DP vs brute force", c1_permanent_oracle),
        ("02 pairwise kernel half-permanent", c2_pairwise_fixture),
        ("03 bivariate law vs Laplace transform", c3_bivariate_law),
        ("04 M-matrix fixtures", c4_m_matrix_fixtures),
        ("05 no false refutation", c5_no_false_refutation),
        (
            "06 triangle inequality and sqrt-symmetrization",
            c6_triangle,
        ),
        ("07 FBMQ closed form vs quadrature", c7_fbmq_quadrature),
        ("08 stable special-function integral", c8_special_function),
        ("09 kernel antisymmetry and Gram PSD", c9_kernel_structure),
        (
            "10 Gaussian-square covariance identity",
            c10_covariance_identity,
        ),
        ("11 moment convention resolution", c11_moment_convention),
        ("12 entropy flags on the Brownian-type grid", c12_entropy),
        ("13 CLI determinism with one thread", c13_determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, f) in criteria {
        if let Some(flt) = &filter {
            if !name.contains(flt.as_str()) {
                continue;
            }
        }
        ran += 1;
        let t0 = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
