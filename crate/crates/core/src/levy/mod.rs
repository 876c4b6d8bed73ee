//! Kernels built from Lévy processes: the potential density of the process
//! killed at its first hit of 0, the exponentially killed potential, and the
//! closed-form FBMQ family.

mod exponent;
pub mod quadrature;

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use exponent::{LevyExponent, LevyFamily};
pub use quadrature::{Estimate, QuadratureSettings, TailMode};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use quadrature::{half_line, Component, Trig};

/// Symmetric and antisymmetric parts of a kernel at (x, y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPair {
    pub r: f64,
    pub h: f64,
    pub u_xy: f64,
    pub u_yx: f64,
}

impl KernelPair {
    pub fn new(r: f64, h: f64) -> Self {
        // + 0.0 maps −0 to +0
        let h = h + 0.0;
        Self {
            r,
            h,
            u_xy: r + h,
            u_yx: r - h,
        }
    }

    pub fn from_values(u_xy: f64, u_yx: f64) -> Self {
        Self {
            r: 0.5 * (u_xy + u_yx),
            h: 0.5 * (u_xy - u_yx),
            u_xy,
            u_yx,
        }
    }
}

fn cos_c(coef: f64, freq: f64, weight: usize) -> Component {
    Component {
        coef,
        freq,
        trig: Trig::Cos,
        weight,
    }
}

fn sin_c(coef: f64, freq: f64, weight: usize) -> Component {
    Component {
        coef,
        freq,
        trig: Trig::Sin,
        weight,
    }
}

/// Re(1/ψ) and −Im(1/ψ).
fn weights(
    psi: &LevyExponent,
) -> (
    impl Fn(f64) -> f64 + Sync + '_,
    impl Fn(f64) -> f64 + Sync + '_,
) {
    let wr = move |l: f64| {
        let z = psi.eval(l);
        z.re / z.norm_sqr()
    };
    let wh = move |l: f64| {
        let z = psi.eval(l);
        z.im / z.norm_sqr()
    };
    (wr, wh)
}

/// u_{T0} through its symmetric and antisymmetric parts:
///
/// R = (1/π)∫₀^∞ (1 − cos λx − cos λy + cos λ(x−y)) Re(1/ψ) dλ,
/// H = −(1/π)∫₀^∞ (sin λx − sin λy − sin λ(x−y)) (−Im(1/ψ)) dλ.
pub fn u_t0_rh(
    psi: &LevyExponent,
    x: f64,
    y: f64,
    q: &QuadratureSettings,
) -> Result<(KernelPair, f64)> {
    let (wr, wh) = weights(psi);
    let z = x - y;
    let r_head =
        |l: f64| 4.0 * (0.5 * l * x).sin() * (0.5 * l * y).sin() * (0.5 * l * z).cos() * wr(l);
    let r_comps = [
        cos_c(1.0, 0.0, 0),
        cos_c(-1.0, x, 0),
        cos_c(-1.0, y, 0),
        cos_c(1.0, z, 0),
    ];
    let r = half_line(&r_head, &r_comps, &[&wr], q)?;
    let h_head =
        |l: f64| -4.0 * (0.5 * l * x).sin() * (0.5 * l * y).sin() * (0.5 * l * z).sin() * wh(l);
    let h_comps = [sin_c(1.0, x, 0), sin_c(-1.0, y, 0), sin_c(-1.0, z, 0)];
    let h = half_line(&h_head, &h_comps, &[&wh], q)?;
    Ok((
        KernelPair::new(r.value / PI, -h.value / PI),
        (r.error + h.error) / PI,
    ))
}

/// φ(x) = (1/π)∫₀^∞ [(1 − cos λx) Re(1/ψ) − sin λx · (−Im(1/ψ))] dλ.
pub fn phi(psi: &LevyExponent, x: f64, q: &QuadratureSettings) -> Result<Estimate> {
    if x == 0.0 {
        return Ok(Estimate::default());
    }
    let (wr, wh) = weights(psi);
    let head = |l: f64| 2.0 * (0.5 * l * x).sin().powi(2) * wr(l) - (l * x).sin() * wh(l);
    let comps = [cos_c(1.0, 0.0, 0), cos_c(-1.0, x, 0), sin_c(-1.0, x, 1)];
    let e = half_line(&head, &comps, &[&wr, &wh], q)?;
    Ok(Estimate {
        value: e.value / PI,
        error: e.error / PI,
    })
}

/// u_{T0} through φ: u(x,y) = φ(x) + φ(−y) − φ(x−y).
pub fn u_t0_phi(
    psi: &LevyExponent,
    x: f64,
    y: f64,
    q: &QuadratureSettings,
) -> Result<(KernelPair, f64)> {
    let vals: Vec<Estimate> = [x, -y, x - y, y, -x, y - x]
        .par_iter()
        .map(|&t| phi(psi, t, q))
        .collect::<Result<_>>()?;
    let u_xy = vals[0].value + vals[1].value - vals[2].value;
    let u_yx = vals[3].value + vals[4].value - vals[5].value;
    let err = vals.iter().map(|e| e.error).sum();
    Ok((KernelPair::from_values(u_xy, u_yx), err))
}

/// Potential density of the process killed at the first hit of 0. Both
/// quadrature paths are evaluated; they must agree within twice the combined
/// tolerance.
pub fn u_t0(psi: &LevyExponent, x: f64, y: f64, q: &QuadratureSettings) -> Result<KernelPair> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite point ({x}, {y})")));
    }
    let (a, ea) = u_t0_rh(psi, x, y, q)?;
    let (b, eb) = u_t0_phi(psi, x, y, q)?;
    let diff = (a.u_xy - b.u_xy).abs().max((a.u_yx - b.u_yx).abs());
    let tolerance = 2.0 * (ea + eb + 8.0 * q.abs_tol.max(q.rel_tol * a.r.abs()));
    if diff > tolerance {
        return Err(Error::QuadratureNonConvergence {
            error: diff,
            tolerance,
        });
    }
    Ok(a)
}

/// Exponentially killed potential u^κ(x,y):
///
/// R = (1/π)∫₀^∞ cos λ(x−y) Re(κ+ψ)/|κ+ψ|² dλ,
/// H = (1/π)∫₀^∞ sin λ(x−y) Im(κ+ψ)/|κ+ψ|² dλ.
pub fn u_killed(
    psi: &LevyExponent,
    killrate: f64,
    x: f64,
    y: f64,
    q: &QuadratureSettings,
) -> Result<KernelPair> {
    if !(killrate > 0.0) {
        return Err(Error::Domain(format!(
            "kill rate must be > 0, got {killrate}"
        )));
    }
    let z = x - y;
    let wr = |l: f64| {
        let w = psi.eval(l) + killrate;
        w.re / w.norm_sqr()
    };
    let wi = |l: f64| {
        let w = psi.eval(l) + killrate;
        w.im / w.norm_sqr()
    };
    let r_head = |l: f64| (l * z).cos() * wr(l);
    let r = half_line(&r_head, &[cos_c(1.0, z, 0)], &[&wr], q)?;
    let h = if z == 0.0 {
        0.0
    } else {
        let h_head = |l: f64| (l * z).sin() * wi(l);
        half_line(&h_head, &[sin_c(1.0, z, 0)], &[&wi], q)?.value
    };
    Ok(KernelPair::new(r.value / PI, h / PI))
}

/// Γ(−α) via Γ(−α) = π / (sin(−πα) Γ(1+α)).
pub fn gamma_neg(alpha: f64) -> f64 {
    PI / ((-PI * alpha).sin() * statrs::function::gamma::gamma(1.0 + alpha))
}

fn check_unit(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// C_{α,β} = −sin((α+1)π/2) Γ(−α) / (π (1 + β² tan²((α+1)π/2))).
pub fn c_alpha_beta(alpha: f64, skew: f64) -> Result<f64> {
    check_unit(alpha)?;
    let a = (alpha + 1.0) * FRAC_PI_2;
    let t = a.tan();
    Ok(-a.sin() * gamma_neg(alpha) / (PI * (1.0 + skew * skew * t * t)))
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Closed-form FBMQ kernel:
/// u(x,y) = C[(1 − β sgn x)|x|^α + (1 + β sgn y)|y|^α − (1 − β sgn(x−y))|x−y|^α].
pub fn fbmq_kernel(alpha: f64, skew: f64, x: f64, y: f64) -> Result<KernelPair> {
    if !(-1.0..=1.0).contains(&skew) {
        return Err(Error::Domain(format!(
            "skew must lie in [-1, 1], got {skew}"
        )));
    }
    let c = c_alpha_beta(alpha, skew)?;
    let p = |v: f64| v.abs().powf(alpha);
    let z = x - y;
    let r = c * (p(x) + p(y) - p(z));
    let h = -skew * c * (sgn(x) * p(x) - sgn(y) * p(y) - sgn(z) * p(z));
    Ok(KernelPair::new(r, h))
}

/// ∫₀^∞ (1 − e^{iλ}) / λ^{α+1} dλ by quadrature.
pub fn stable_integral(alpha: f64, q: &QuadratureSettings) -> Result<Complex64> {
    check_unit(alpha)?;
    let a = alpha + 1.0;
    let w = move |l: f64| l.powf(-a);
    let re_head = |l: f64| 2.0 * (0.5 * l).sin().powi(2) * w(l);
    let re = half_line(
        &re_head,
        &[cos_c(1.0, 0.0, 0), cos_c(-1.0, 1.0, 0)],
        &[&w],
        q,
    )?;
    let im_head = |l: f64| -l.sin() * w(l);
    let im = half_line(&im_head, &[sin_c(-1.0, 1.0, 0)], &[&w], q)?;
    Ok(Complex64::new(re.value, im.value))
}

/// −(sin((α+1)π/2) + i cos((α+1)π/2)) Γ(−α).
pub fn stable_integral_closed(alpha: f64) -> Result<Complex64> {
    check_unit(alpha)?;
    let a = (alpha + 1.0) * FRAC_PI_2;
    Ok(-Complex64::new(a.sin(), a.cos()) * gamma_neg(alpha))
}

/// ½(|x|^α + |y|^α − |x−y|^α).
pub fn fbm_covariance(alpha: f64, x: f64, y: f64) -> f64 {
    let p = |v: f64| v.abs().powf(alpha);
    0.5 * (p(x) + p(y) - p(x - y))
}

/// 𝒢(x,y) = Γ̃(x,y) + ε|x−y|^{α/2} for x ≥ y and Γ̃(x,y) − ε|x−y|^{α/2} for x < y.
pub fn perturbed_fbm_kernel(alpha: f64, eps: f64, x: f64, y: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) || !(eps >= 0.0) {
        return Err(Error::Domain(format!(
            "need alpha in (0, 2] and eps >= 0, got {alpha}, {eps}"
        )));
    }
    let sigma = (x - y).abs().powf(0.5 * alpha);
    let base = fbm_covariance(alpha, x, y);
    Ok(if x >= y {
        base + eps * sigma
    } else {
        base - eps * sigma
    })
}

/// 𝒢 with α = 1 at three points.
pub fn a_epsilon(eps: f64, points: [f64; 3]) -> Result<SquareMatrix> {
    let mut rows = vec![vec![0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rows[i][j] = perturbed_fbm_kernel(1.0, eps, points[i], points[j])?;
        }
    }
    SquareMatrix::from_rows(&rows)
}

/// The variant perturbing every off-diagonal entry by ε|x−y|^{1/2}, with
/// the sign pattern − above and + below the diagonal.
pub fn a_epsilon_uniform(eps: f64, x: f64, y: f64, z: f64) -> Result<SquareMatrix> {
    let e = eps * (x - y).abs().sqrt();
    SquareMatrix::from_rows(&[
        vec![x, x - e, x - e],
        vec![x + e, y, y - e],
        vec![x + e, y + e, z],
    ])
}

/// Builds the n×n matrix of `f` over `points`, in parallel over rows.
pub fn kernel_matrix(
    points: &[f64],
    f: impl Fn(f64, f64) -> Result<f64> + Sync,
) -> Result<SquareMatrix> {
    let n = points.len();
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|&x| points.iter().map(|&y| f(x, y)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let m = SquareMatrix::from_rows(&rows)?;
    debug_assert_eq!(m.n(), n);
    Ok(m)
}
