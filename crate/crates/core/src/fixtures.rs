//! Reference values reproduced by the `fixtures` command. Each fixture touches
//! a different module.

use serde::{Deserialize, Serialize};

use crate::existence::{
    certify, default_r_grid, inverse_is_m_matrix, vere_jones_sweep, CertifySettings, Verdict,
    DEFAULT_TOL,
};
use crate::levy::{
    a_epsilon, c_alpha_beta, fbmq_kernel, stable_integral, stable_integral_closed, u_t0,
    LevyExponent, QuadratureSettings,
};
use crate::matrix::{KernelMatrix, SquareMatrix};
use crate::metric::{distance_constant, distance_table, permanental_distance, triangle_check};
use crate::permanent::{
    beta_permanent_dp, moment, moment_numdiff_oracle, pairwise_independent_kernel, BetaOrder,
    MomentConvention, MultiIndex,
};
use crate::sampler::{empirical_covariance, sample_gaussian_square};
use crate::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureResult {
    pub name: String,
    pub module: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

fn fx(name: &str, module: &str, expected: String, observed: String, pass: bool) -> FixtureResult {
    FixtureResult {
        name: name.into(),
        module: module.into(),
        expected,
        observed,
        pass,
    }
}

fn brownian3() -> KernelMatrix {
    KernelMatrix::from_fn(3, |i, j| (i.min(j) + 1) as f64).expect("3x3")
}

/// Runs every fixture. `seed` drives the Monte Carlo fixture.
pub fn run_fixtures(seed: u64) -> Result<Vec<FixtureResult>> {
    let half = BetaOrder::half_integer(1)?;
    let q = QuadratureSettings::default();
    let mut out = Vec::new();

    for &(a, b, c) in &[(1.0, 1.0, 1.0), (0.5, 2.0, 0.3)] {
        let g = pairwise_independent_kernel(a, b, c);
        let v = beta_permanent_dp(&g, half)?;
        let e = 0.125 + a * b * c / 2.0;
        out.push(fx(
            &format!("half-permanent of pairwise kernel a={a} b={b} c={c}"),
            "permanent",
            format!("{e}"),
            format!("{v}"),
            (v - e).abs() <= 1e-12,
        ));
    }

    let id = SquareMatrix::identity(4);
    let v = beta_permanent_dp(&id, BetaOrder::new(0.3)?)?;
    out.push(fx(
        "permanent of identity is beta^n",
        "permanent",
        format!("{}", 0.3f64.powi(4)),
        format!("{v}"),
        (v - 0.3f64.powi(4)).abs() <= 1e-15,
    ));

    let g3 = KernelMatrix::from_rows(&[
        vec![1.0, 0.4, 0.2],
        vec![0.3, 1.5, 0.5],
        vec![0.1, 0.6, 0.8],
    ])?;
    let beta = BetaOrder::new(0.7)?;
    let vj = moment(g3.matrix(), beta, MomentConvention::VereJones)?;
    let nd = moment_numdiff_oracle(g3.matrix(), beta, &MultiIndex::ones(3), 1e-3)?;
    out.push(fx(
        "numdiff oracle matches vere_jones convention",
        "permanent",
        format!("{vj}"),
        format!("{nd}"),
        (vj - nd).abs() <= 1e-4,
    ));

    let rep = certify(&brownian3(), half, &CertifySettings::default())?;
    out.push(fx(
        "Brownian kernel min(i,j) certifies",
        "existence",
        "CERTIFIED_ALL_BETA".into(),
        serde_json::to_value(rep.verdict)?
            .as_str()
            .unwrap_or("")
            .to_string(),
        rep.verdict == Verdict::CertifiedAllBeta,
    ));

    for eps in [0.05, 0.1, 0.3] {
        let a = KernelMatrix::new(a_epsilon(eps, [1.0, 2.0, 3.0])?);
        let v = inverse_is_m_matrix(&a, DEFAULT_TOL);
        out.push(fx(
            &format!("inverse of perturbed Brownian kernel eps={eps} is not an M-matrix"),
            "existence",
            "refuted".into(),
            serde_json::to_string(&v)?,
            !v.is_certified(),
        ));
    }

    let pk = KernelMatrix::new(pairwise_independent_kernel(1.0, 1.0, 1.0));
    let sweep = vere_jones_sweep(&pk, half, &default_r_grid(), 1_000_000, DEFAULT_TOL)?;
    out.push(fx(
        "pairwise kernel a=b=c=1 refuted for beta=1/2",
        "existence",
        "negative expanded permanent".into(),
        format!("reached |k| = {}", sweep.reached),
        sweep.outcome.witness().is_some(),
    ));

    for alpha in [0.3, 0.5, 0.8] {
        let num = stable_integral(alpha, &q)?;
        let exact = stable_integral_closed(alpha)?;
        out.push(fx(
            &format!("stable integral alpha={alpha}"),
            "levy_kernels",
            format!("{exact}"),
            format!("{num}"),
            (num - exact).norm() <= 1e-6,
        ));
    }

    let mut all_pos = true;
    for a in [0.1, 0.5, 0.9] {
        for b in [-1.0, 0.0, 0.5] {
            all_pos &= c_alpha_beta(a, b)? > 0.0;
        }
    }
    out.push(fx(
        "C_alpha_beta > 0",
        "levy_kernels",
        "all positive".into(),
        format!("{all_pos}"),
        all_pos,
    ));

    let psi = LevyExponent::asymmetric_stable(0.5, 0.3, 1.0)?;
    let num = u_t0(&psi, 1.0, 2.0, &q)?;
    let cf = fbmq_kernel(0.5, 0.3, 1.0, 2.0)?;
    let err = (num.u_xy - cf.u_xy).abs().max((num.u_yx - cf.u_yx).abs());
    out.push(fx(
        "FBMQ alpha=0.5 skew=0.3 at (1,2): quadrature vs closed form",
        "levy_kernels",
        format!("{} / {}", cf.u_xy, cf.u_yx),
        format!("{} / {}", num.u_xy, num.u_yx),
        err <= 1e-3,
    ));

    let d = permanental_distance(&KernelMatrix::new(SquareMatrix::identity(2)), 0, 1)?;
    let e = distance_constant() * 2f64.sqrt();
    out.push(fx(
        "distance between independent unit coordinates",
        "metric",
        format!("{e}"),
        format!("{d}"),
        (d - e).abs() <= 1e-14,
    ));
    let viol = triangle_check(&distance_table(&brownian3())?, 1e-9);
    out.push(fx(
        "Brownian distance table satisfies the triangle inequality",
        "metric",
        "0 violations".into(),
        format!("{} violations", viol.len()),
        viol.is_empty(),
    ));

    let rho = 0.6;
    let g = KernelMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]])?;
    let batch = sample_gaussian_square(&g, 1, 100_000, seed)?;
    let (c, se) = empirical_covariance(&batch, 0, 1);
    out.push(fx(
        "cov(theta_x, theta_y) = 2 G(x,y) G(y,x)",
        "sampler",
        format!("{}", 2.0 * rho * rho),
        format!("{c} (se {se})"),
        (c - 2.0 * rho * rho).abs() <= 3.0 * se,
    ));

    Ok(out)
}

/// Fixed-width table, one fixture per line.
pub fn format_table(results: &[FixtureResult]) -> String {
    let w = results.iter().map(|r| r.name.len()).max().unwrap_or(4);
    let mut s = String::new();
    for r in results {
        s.push_str(&format!(
            "{:<4}  {:<13} {:<w$}  expected {}  observed {}\n",
            if r.pass { "PASS" } else { "FAIL" },
            r.module,
            r.name,
            r.expected,
            r.observed,
        ));
    }
    s
}
