//! Quadrature for half-line Fourier-type integrals.
//!
//! An integrand is given twice: a numerically stable closed expression `head`
//! used on [0, Λ], and for λ ≥ Λ a sum of single-frequency components
//! `coef · trig(ωλ) · w(λ)`, each integrated separately over half periods with
//! Wynn-epsilon acceleration of the partial sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// Kronrod 21-point nodes on [0, 1]; odd positions (1, 3, …, 9) are the
// 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208980109424,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// Integrate past Λ component by component with series acceleration.
    #[default]
    Oscillatory,
    /// Drop the tail, choosing Λ so that the envelope bound meets the tolerance.
    PowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSettings {
    /// Λ: start of the tail.
    pub cutoff: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of panels per adaptive call.
    pub max_subdivisions: usize,
    pub tail: TailMode,
    /// Largest Λ accepted in [`TailMode::PowerBound`].
    pub max_cutoff: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            cutoff: 50.0,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_subdivisions: 4000,
            tail: TailMode::Oscillatory,
            max_cutoff: 1e5,
        }
    }
}

impl QuadratureSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidInput(
                "cutoff and tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Integral estimate with its error bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, o: Estimate) -> Estimate {
        Estimate {
            value: self.value + o.value,
            error: self.error + o.error,
        }
    }
}

fn gk21(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Estimate {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[10];
    let mut g = 0.0;
    for i in 0..10 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    Estimate {
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

/// Globally adaptive Gauss–Kronrod on [a, b].
pub fn integrate(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_subdivisions: usize,
) -> Result<Estimate> {
    let mut panels = vec![(a, b, gk21(f, a, b))];
    loop {
        let (value, error) = panels
            .iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.2.value, e + p.2.error));
        let target = abs_tol.max(rel_tol * value.abs());
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::QuadratureNonConvergence {
                error,
                tolerance: target,
            });
        }
        if error <= target {
            return Ok(Estimate { value, error });
        }
        if panels.len() >= max_subdivisions {
            return Err(Error::QuadratureNonConvergence {
                error,
                tolerance: target,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .map(|(i, _)| i)
            .unwrap();
        let (pa, pb, _) = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            // Panel cannot be split further in floating point.
            return Err(Error::QuadratureNonConvergence {
                error,
                tolerance: target,
            });
        }
        panels.push((pa, mid, gk21(f, pa, mid)));
        panels.push((mid, pb, gk21(f, mid, pb)));
    }
}

/// Wynn epsilon extrapolation of a sequence of partial sums. Returns the
/// latest extrapolated value and the difference to the previous one.
fn wynn_epsilon(s: &[f64]) -> (f64, f64) {
    let n = s.len();
    if n < 3 {
        let last = *s.last().unwrap_or(&0.0);
        let prev = if n >= 2 { s[n - 2] } else { f64::INFINITY };
        return (last, (last - prev).abs());
    }
    let mut prev_col: Vec<f64> = vec![0.0; n + 1];
    let mut col: Vec<f64> = s.to_vec();
    let mut best = (s[n - 1], (s[n - 1] - s[n - 2]).abs());
    let mut k = 0;
    while col.len() > 1 {
        let mut next = Vec::with_capacity(col.len() - 1);
        for i in 0..col.len() - 1 {
            let d = col[i + 1] - col[i];
            let v = if d == 0.0 {
                f64::INFINITY
            } else {
                prev_col[i + 1] + 1.0 / d
            };
            next.push(v);
        }
        prev_col = col;
        col = next;
        k += 1;
        if k % 2 == 0 && col.len() >= 2 {
            let a = col[col.len() - 1];
            let b = col[col.len() - 2];
            if a.is_finite() && b.is_finite() {
                let diff = (a - b).abs();
                if diff <= best.1 {
                    best = (a, diff);
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Cos,
    Sin,
}

/// `coef · trig(freq·λ) · weights[weight](λ)`, valid for λ ≥ Λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub coef: f64,
    pub freq: f64,
    pub trig: Trig,
    pub weight: usize,
}

pub type Weight<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

/// ∫_Λ^∞ w(λ) dλ via λ = Λ e^s, summed over doubling s-intervals.
fn tail_plain(w: Weight<'_>, cutoff: f64, q: &QuadratureSettings) -> Result<Estimate> {
    let g = |s: f64| {
        let l = cutoff * s.exp();
        l * w(l)
    };
    let mut total = Estimate::default();
    // Keeps ψ(λ) and |ψ|² well inside the floating-point range.
    let s_max = (1e60 / cutoff).ln();
    let (mut a, mut len) = (0.0, 1.0);
    let mut small = 0;
    while a < s_max {
        let b = (a + len).min(s_max);
        let piece = integrate(&g, a, b, q.abs_tol * 1e-2, q.rel_tol, q.max_subdivisions)?;
        total = total + piece;
        if piece.value.abs() <= q.abs_tol * 1e-3 {
            small += 1;
            if small >= 2 {
                return Ok(total);
            }
        } else {
            small = 0;
        }
        a = b;
        len *= 2.0;
    }
    Ok(total)
}

/// ∫_Λ^∞ trig(ωλ) w(λ) dλ over half periods with epsilon acceleration.
fn tail_oscillatory(
    w: Weight<'_>,
    freq: f64,
    trig: Trig,
    cutoff: f64,
    q: &QuadratureSettings,
) -> Result<Estimate> {
    let f = |l: f64| {
        let t = match trig {
            Trig::Cos => (freq * l).cos(),
            Trig::Sin => (freq * l).sin(),
        };
        t * w(l)
    };
    let half = std::f64::consts::PI / freq;
    let mut partial = Vec::new();
    let mut acc = 0.0;
    let mut piece_err = 0.0;
    let mut last = (f64::NAN, f64::INFINITY);
    for k in 0..600 {
        let a = cutoff + k as f64 * half;
        let p = integrate(
            &f,
            a,
            a + half,
            q.abs_tol * 1e-3,
            q.rel_tol,
            q.max_subdivisions,
        )?;
        acc += p.value;
        piece_err += p.error;
        partial.push(acc);
        if partial.len() >= 8 {
            let window = &partial[partial.len().saturating_sub(40)..];
            last = wynn_epsilon(window);
            if last.1 <= q.abs_tol * 0.1 {
                return Ok(Estimate {
                    value: last.0,
                    error: last.1 + piece_err,
                });
            }
        }
    }
    Err(Error::QuadratureNonConvergence {
        error: last.1,
        tolerance: q.abs_tol,
    })
}

/// Local power exponent γ of |f| near 0, from two probe points.
fn probe_exponent(f: &dyn Fn(f64) -> f64, l0: f64) -> Option<f64> {
    let (a, b) = (l0 * 1e-6, l0 * 1e-3);
    let (fa, fb) = (f(a).abs(), f(b).abs());
    if fa > 0.0 && fb > 0.0 && fa.is_finite() && fb.is_finite() {
        Some((fb / fa).ln() / (b / a).ln())
    } else {
        None
    }
}

/// ∫₀^∞ of an integrand given by `head` on [0, Λ] and `components` beyond.
pub fn half_line(
    head: &(dyn Fn(f64) -> f64 + Sync),
    components: &[Component],
    weights: &[Weight<'_>],
    q: &QuadratureSettings,
) -> Result<Estimate> {
    q.validate()?;
    let cutoff = match q.tail {
        TailMode::Oscillatory => q.cutoff,
        TailMode::PowerBound => power_bound_cutoff(components, weights, q)?,
    };
    let wmax = components.iter().map(|c| c.freq.abs()).fold(0.0, f64::max);
    let l0 = if wmax > 0.0 {
        (1.0 / wmax).min(1.0)
    } else {
        1.0
    }
    .min(cutoff);

    // First panel with λ = l0·t^p so that the transformed integrand is regular.
    let gamma = probe_exponent(head, l0);
    let p = match gamma {
        Some(g) if g > -1.0 => (2.0 / (1.0 + g)).clamp(1.0, 12.0),
        _ => 4.0,
    };
    let first = |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        let l = l0 * t.powf(p);
        head(l) * l0 * p * t.powf(p - 1.0)
    };
    let tol = q.abs_tol;
    let e0 = integrate(&first, 0.0, 1.0, tol * 0.25, q.rel_tol, q.max_subdivisions)?;
    let e1 = if cutoff > l0 {
        integrate(head, l0, cutoff, tol * 0.25, q.rel_tol, q.max_subdivisions)?
    } else {
        Estimate::default()
    };
    let mut total = e0 + e1;
    if q.tail == TailMode::PowerBound {
        return Ok(total);
    }

    // Merge equal (frequency, trig, weight) components.
    let mut merged: Vec<Component> = Vec::new();
    for c in components {
        let (freq, trig, coef) = match (c.freq.abs(), c.trig) {
            (w, Trig::Sin) if w == 0.0 => continue,
            (w, Trig::Cos) if w == 0.0 => (0.0, Trig::Cos, c.coef),
            (w, Trig::Sin) => (w, Trig::Sin, c.coef * c.freq.signum()),
            (w, Trig::Cos) => (w, Trig::Cos, c.coef),
        };
        match merged
            .iter_mut()
            .find(|m| m.freq == freq && m.trig == trig && m.weight == c.weight)
        {
            Some(m) => m.coef += coef,
            None => merged.push(Component {
                coef,
                freq,
                trig,
                weight: c.weight,
            }),
        }
    }
    let n_tail = merged.iter().filter(|c| c.coef != 0.0).count().max(1) as f64;
    let sub = QuadratureSettings {
        abs_tol: q.abs_tol * 0.5 / n_tail,
        ..*q
    };
    for c in merged.iter().filter(|c| c.coef != 0.0) {
        let w = weights[c.weight];
        let term = if c.freq == 0.0 {
            tail_plain(w, cutoff, &sub)?
        } else {
            tail_oscillatory(w, c.freq, c.trig, cutoff, &sub)?
        };
        total = total
            + Estimate {
                value: c.coef * term.value,
                error: c.coef.abs() * term.error,
            };
    }
    Ok(total)
}

/// Λ such that Σ|coef|·∫_Λ^∞ C λ^{−a} dλ ≤ abs_tol, with C and a read off
/// the weights at the configured cutoff.
fn power_bound_cutoff(
    components: &[Component],
    weights: &[Weight<'_>],
    q: &QuadratureSettings,
) -> Result<f64> {
    let l = q.cutoff;
    let mut worst_bound = 0.0f64;
    let mut need = l;
    for c in components {
        let w = weights[c.weight];
        let (w1, w2) = (w(l).abs(), w(2.0 * l).abs());
        if w1 == 0.0 {
            continue;
        }
        let a = (w1 / w2).log2();
        if !(a > 1.0) {
            return Err(Error::QuadratureNonConvergence {
                error: f64::INFINITY,
                tolerance: q.abs_tol,
            });
        }
        let cw = w1 * l.powf(a);
        // |coef|·cw·Λ^{1−a}/(a−1) ≤ tol / #components
        let share = q.abs_tol / components.len() as f64;
        let lam = (c.coef.abs() * cw / ((a - 1.0) * share)).powf(1.0 / (a - 1.0));
        if lam > need {
            need = lam;
        }
        worst_bound = worst_bound.max(c.coef.abs() * cw * q.max_cutoff.powf(1.0 - a) / (a - 1.0));
    }
    if need > q.max_cutoff {
        return Err(Error::QuadratureNonConvergence {
            error: worst_bound * components.len() as f64,
            tolerance: q.abs_tol,
        });
    }
    Ok(need)
}
