//! Existence tests for β-permanental vectors with a given kernel.
//!
//! Every check here either produces a concrete witness of non-existence, a
//! certificate (Γ⁻¹ is an M-matrix), or a "pass up to truncation" that proves
//! nothing by itself. [`certify`] runs the whole battery and assembles an
//! [`ExistenceReport`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    eigenvalues, inverse_with_condition, matmul, spectral_radius, KernelMatrix, SquareMatrix,
};
use crate::numeric::logspace;
use crate::permanent::{
    beta_permanent_dp, expand_multi_index, shifted_determinant, BetaOrder, MultiIndex, DP_LIMIT,
};

/// Relative tolerance for sign checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// {0} ∪ 61 log-spaced points in [1e-3, 1e3].
pub fn default_r_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(logspace(1e-3, 1e3, 61));
    g
}

// ---------------------------------------------------------------------------
// necessary conditions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NecessaryCondition {
    /// Γ(x,x) ≥ 0
    DiagonalNonnegative,
    /// Γ(x,x)Γ(y,y) − Γ(x,y)Γ(y,x) ≥ 0
    PairMinor,
    /// Γ(x,y)Γ(y,x) ≥ 0
    CrossProduct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessaryWitness {
    pub condition: NecessaryCondition,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessaryReport {
    pub diagonal_ok: bool,
    pub minor_ok: bool,
    pub product_ok: bool,
    /// First violating index pair for each failed condition.
    pub witnesses: Vec<NecessaryWitness>,
}

impl NecessaryReport {
    pub fn all_ok(&self) -> bool {
        self.diagonal_ok && self.minor_ok && self.product_ok
    }
}

pub fn check_necessary(g: &KernelMatrix) -> NecessaryReport {
    check_necessary_with(g, DEFAULT_TOL)
}

pub fn check_necessary_with(g: &KernelMatrix, tol: f64) -> NecessaryReport {
    let n = g.n();
    let scale = g.matrix().max_abs();
    let t1 = tol * scale;
    let t2 = tol * scale * scale;
    let mut witnesses = Vec::new();
    let mut first = |cond: NecessaryCondition, i, j, value| {
        if !witnesses
            .iter()
            .any(|w: &NecessaryWitness| w.condition == cond)
        {
            witnesses.push(NecessaryWitness {
                condition: cond,
                i,
                j,
                value,
            });
        }
    };
    for i in 0..n {
        let d = g.get(i, i);
        if d < -t1 {
            first(NecessaryCondition::DiagonalNonnegative, i, i, d);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let cross = g.get(i, j) * g.get(j, i);
            let minor = g.get(i, i) * g.get(j, j) - cross;
            if minor < -t2 {
                first(NecessaryCondition::PairMinor, i, j, minor);
            }
            if cross < -t2 {
                first(NecessaryCondition::CrossProduct, i, j, cross);
            }
        }
    }
    let failed = |c| witnesses.iter().any(|w| w.condition == c);
    NecessaryReport {
        diagonal_ok: !failed(NecessaryCondition::DiagonalNonnegative),
        minor_ok: !failed(NecessaryCondition::PairMinor),
        product_ok: !failed(NecessaryCondition::CrossProduct),
        witnesses,
    }
}

// ---------------------------------------------------------------------------
// resolvent and M-matrices

/// Γ_r = Γ(I + rΓ)⁻¹.
pub fn modified_resolvent(g: &KernelMatrix, r: f64) -> Result<SquareMatrix> {
    modified_resolvent_with(g, r, DEFAULT_TOL)
}

pub fn modified_resolvent_with(g: &KernelMatrix, r: f64, tol: f64) -> Result<SquareMatrix> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("r must be >= 0, got {r}")));
    }
    if r == 0.0 {
        return Ok(g.matrix().clone());
    }
    let n = g.n();
    let shifted =
        SquareMatrix::from_fn(n, |i, j| (if i == j { 1.0 } else { 0.0 }) + r * g.get(i, j))?;
    let det = shifted_determinant(g.matrix(), &vec![r; n]);
    match inverse_with_condition(&shifted) {
        Some((inv, cond)) if cond * tol <= 1.0 => matmul(g.matrix(), &inv),
        Some((_, cond)) => Err(Error::SingularResolvent { r, det, cond }),
        None => Err(Error::SingularResolvent {
            r,
            det,
            cond: f64::INFINITY,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MMatrixFailure {
    PositiveOffDiagonal,
    NegativeInverseEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MMatrixWitness {
    pub failure: MMatrixFailure,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MMatrixVerdict {
    Certified,
    Refuted { witness: MMatrixWitness },
    Singular { condition: f64 },
}

impl MMatrixVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, MMatrixVerdict::Certified)
    }
}

/// A is an M-matrix when a_ij ≤ 0 for i ≠ j, A is nonsingular and A⁻¹ ≥ 0.
/// `tol` is relative to the largest entry of A (resp. A⁻¹).
pub fn is_m_matrix(a: &SquareMatrix, tol: f64) -> MMatrixVerdict {
    let n = a.n();
    let scale = a.max_abs();
    for i in 0..n {
        for j in 0..n {
            if i != j && a.get(i, j) > tol * scale {
                return MMatrixVerdict::Refuted {
                    witness: MMatrixWitness {
                        failure: MMatrixFailure::PositiveOffDiagonal,
                        i,
                        j,
                        value: a.get(i, j),
                    },
                };
            }
        }
    }
    let (inv, cond) = match inverse_with_condition(a) {
        Some(x) => x,
        None => {
            return MMatrixVerdict::Singular {
                condition: f64::INFINITY,
            }
        }
    };
    if cond * tol > 1.0 {
        return MMatrixVerdict::Singular { condition: cond };
    }
    let iscale = inv.max_abs();
    for i in 0..n {
        for j in 0..n {
            if inv.get(i, j) < -tol * iscale {
                return MMatrixVerdict::Refuted {
                    witness: MMatrixWitness {
                        failure: MMatrixFailure::NegativeInverseEntry,
                        i,
                        j,
                        value: inv.get(i, j),
                    },
                };
            }
        }
    }
    MMatrixVerdict::Certified
}

/// Runs [`is_m_matrix`] on Γ⁻¹.
pub fn inverse_is_m_matrix(g: &KernelMatrix, tol: f64) -> MMatrixVerdict {
    match inverse_with_condition(g.matrix()) {
        Some((inv, cond)) if cond * tol <= 1.0 => is_m_matrix(&inv, tol),
        Some((_, cond)) => MMatrixVerdict::Singular { condition: cond },
        None => MMatrixVerdict::Singular {
            condition: f64::INFINITY,
        },
    }
}

// ---------------------------------------------------------------------------
// Vere-Jones criterion

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VjViolation {
    /// det(I + rΓ) < 0.
    NonPositiveDeterminant { det: f64 },
    /// |Γ_r(𝐤)|_β < 0; `scale` is |abs(Γ_r(𝐤))|_β, the rounding reference.
    NegativePermanent {
        index: MultiIndex,
        value: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VjWitness {
    pub r: f64,
    pub violation: VjViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VjOutcome {
    Violation {
        witness: VjWitness,
    },
    PassUpTo {
        max_total: usize,
        /// Grid points skipped because I + rΓ was numerically singular.
        inconclusive_r: Vec<f64>,
    },
}

impl VjOutcome {
    pub fn witness(&self) -> Option<&VjWitness> {
        match self {
            VjOutcome::Violation { witness } => Some(witness),
            VjOutcome::PassUpTo { .. } => None,
        }
    }
}

enum PerR {
    Violation(VjWitness),
    Skipped(f64),
    Resolvent(SquareMatrix),
}

fn resolvent_at(g: &KernelMatrix, r: f64, tol: f64) -> PerR {
    let n = g.n();
    let det = shifted_determinant(g.matrix(), &vec![r; n]);
    // |det(I + rΓ)| ≤ ∏ row 1-norms
    let scale: f64 = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| ((i == j) as u8 as f64 + r * g.get(i, j)).abs())
                .sum::<f64>()
        })
        .product();
    if det < -tol * scale {
        return PerR::Violation(VjWitness {
            r,
            violation: VjViolation::NonPositiveDeterminant { det },
        });
    }
    if det <= tol * scale {
        return PerR::Skipped(r);
    }
    match modified_resolvent_with(g, r, tol) {
        Ok(m) => PerR::Resolvent(m),
        Err(_) => PerR::Skipped(r),
    }
}

fn negative_permanent(
    gr: &SquareMatrix,
    beta: BetaOrder,
    index: &MultiIndex,
    tol: f64,
) -> Result<Option<VjViolation>> {
    let b = expand_multi_index(gr, index)?;
    let value = beta_permanent_dp(&b, beta)?;
    if value >= 0.0 {
        return Ok(None);
    }
    let scale = beta_permanent_dp(&b.map(f64::abs)?, beta)?;
    Ok(
        (value < -tol * scale).then(|| VjViolation::NegativePermanent {
            index: index.clone(),
            value,
            scale,
        }),
    )
}

/// Checks det(I + rΓ) > 0 and |Γ_r(𝐤)|_β ≥ 0 for every r in `r_grid` and every
/// multi-index with |𝐤| ≤ `max_total`. The first violation in (r, 𝐤) order is
/// returned; it proves that no β-permanental vector has kernel Γ.
pub fn vere_jones_check(
    g: &KernelMatrix,
    beta: BetaOrder,
    r_grid: &[f64],
    max_total: usize,
    tol: f64,
) -> Result<VjOutcome> {
    if max_total > DP_LIMIT {
        return Err(Error::DimensionLimit {
            what: "expanded permanent",
            n: max_total,
            limit: DP_LIMIT,
        });
    }
    let indices = MultiIndex::up_to(g.n(), max_total);
    let per_r: Vec<PerR> = r_grid
        .par_iter()
        .map(|&r| resolvent_at(g, r, tol))
        .collect();

    let mut inconclusive_r = Vec::new();
    let mut first: Option<VjWitness> = None;
    for (slot, &r) in per_r.iter().zip(r_grid) {
        match slot {
            PerR::Violation(w) => {
                first = Some(w.clone());
                break;
            }
            PerR::Skipped(r) => inconclusive_r.push(*r),
            PerR::Resolvent(gr) => {
                let hits: Vec<Option<VjViolation>> = indices
                    .par_iter()
                    .map(|k| negative_permanent(gr, beta, k, tol))
                    .collect::<Result<_>>()?;
                if let Some(v) = hits.into_iter().flatten().next() {
                    first = Some(VjWitness { r, violation: v });
                    break;
                }
            }
        }
    }
    Ok(match first {
        Some(witness) => VjOutcome::Violation { witness },
        None => VjOutcome::PassUpTo {
            max_total,
            inconclusive_r,
        },
    })
}

/// Result of raising the truncation order until a witness appears.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VjSweep {
    pub outcome: VjOutcome,
    /// Highest |𝐤| fully checked.
    pub reached: usize,
    pub evaluations: usize,
}

/// Checks |𝐤| = 1, 2, … level by level until a violation is found, the DP cap
/// is reached, or the next level would exceed `budget` expanded-permanent
/// evaluations.
pub fn vere_jones_sweep(
    g: &KernelMatrix,
    beta: BetaOrder,
    r_grid: &[f64],
    budget: usize,
    tol: f64,
) -> Result<VjSweep> {
    let n = g.n();
    let per_r: Vec<PerR> = r_grid
        .par_iter()
        .map(|&r| resolvent_at(g, r, tol))
        .collect();
    let mut inconclusive_r = Vec::new();
    let mut resolvents = Vec::new();
    for (slot, &r) in per_r.into_iter().zip(r_grid) {
        match slot {
            PerR::Violation(witness) => {
                return Ok(VjSweep {
                    outcome: VjOutcome::Violation { witness },
                    reached: 0,
                    evaluations: 0,
                })
            }
            PerR::Skipped(r) => inconclusive_r.push(r),
            PerR::Resolvent(m) => resolvents.push((r, m)),
        }
    }
    let mut evaluations = 0usize;
    let mut reached = 0usize;
    for total in 1..=DP_LIMIT {
        let level = MultiIndex::with_total(n, total);
        let cost = level.len() * resolvents.len();
        if evaluations + cost > budget {
            break;
        }
        evaluations += cost;
        for (r, gr) in &resolvents {
            let hits: Vec<Option<VjViolation>> = level
                .par_iter()
                .map(|k| negative_permanent(gr, beta, k, tol))
                .collect::<Result<_>>()?;
            if let Some(v) = hits.into_iter().flatten().next() {
                return Ok(VjSweep {
                    outcome: VjOutcome::Violation {
                        witness: VjWitness {
                            r: *r,
                            violation: v,
                        },
                    },
                    reached: total,
                    evaluations,
                });
            }
        }
        reached = total;
    }
    Ok(VjSweep {
        outcome: VjOutcome::PassUpTo {
            max_total: reached,
            inconclusive_r,
        },
        reached,
        evaluations,
    })
}

// ---------------------------------------------------------------------------
// spectrum

/// True iff every real eigenvalue of Γ is > −tol (zero is allowed).
pub fn eigenvalue_positivity(g: &KernelMatrix) -> bool {
    eigenvalue_positivity_with(g, DEFAULT_TOL)
}

pub fn eigenvalue_positivity_with(g: &KernelMatrix, tol: f64) -> bool {
    let ev = eigenvalues(g.matrix());
    let scale = ev.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    ev.iter()
        .filter(|z| z.im.abs() <= tol.sqrt() * scale)
        .all(|z| z.re > -tol * scale)
}

// ---------------------------------------------------------------------------
// infinite divisibility series

/// Homogeneous polynomial in n variables: exponent vector → (coefficient,
/// the same coefficient computed from |M|, and from |M| + δ).
type Poly = std::collections::BTreeMap<Vec<u8>, (f64, f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub exponents: Vec<u8>,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum InfDivOutcome {
    PassUpTo {
        t: f64,
        max_degree: usize,
        /// The smallest non-constant coefficient seen.
        min_coefficient: Monomial,
    },
    NegativeCoefficient {
        t: f64,
        monomial: Monomial,
    },
    Diverges {
        t: f64,
        spectral_radius: f64,
    },
}

impl InfDivOutcome {
    pub fn is_negative(&self) -> bool {
        matches!(self, InfDivOutcome::NegativeCoefficient { .. })
    }
}

/// Expands log F(𝒮) = −β log det(I + 𝒮Γ), 𝒮 = diag((1 − sᵢ)t), as a power
/// series in s up to total degree `max_degree` and reports the most negative
/// non-constant coefficient. The constant term log F(tI) is exempt.
///
/// A coefficient c counts as negative when c < −(tol·a + (b − a)), where a and
/// b are the same coefficient computed from |M| and from |M| + tol·max|M|. The
/// second term absorbs entries of M that are zero up to rounding.
///
/// With A = I + tΓ and M = I − A⁻¹ the expansion is
/// `−β log det A + β Σ_m tr((diag(s) M)^m) / m`.
pub fn infdiv_series_check(
    g: &KernelMatrix,
    beta: BetaOrder,
    t: f64,
    max_degree: usize,
    tol: f64,
) -> Result<InfDivOutcome> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    let n = g.n();
    let shifted =
        SquareMatrix::from_fn(n, |i, j| (if i == j { 1.0 } else { 0.0 }) + t * g.get(i, j))?;
    let (ainv, _) = inverse_with_condition(&shifted).ok_or(Error::SingularResolvent {
        r: t,
        det: shifted_determinant(g.matrix(), &vec![t; n]),
        cond: f64::INFINITY,
    })?;
    let m = SquareMatrix::from_fn(n, |i, j| (if i == j { 1.0 } else { 0.0 }) - ainv.get(i, j))?;
    let radius = spectral_radius(&m);
    if radius >= 1.0 {
        return Err(Error::SeriesDivergence { radius });
    }

    let floor = tol * m.max_abs();
    // q[i][j] holds the homogeneous degree-d polynomial ((diag(s) M)^d)_{ij}.
    let unit = |i: usize| {
        let mut e = vec![0u8; n];
        e[i] = 1;
        e
    };
    let mut q: Vec<Vec<Poly>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut p = Poly::new();
                    let v = m.get(i, j);
                    p.insert(unit(i), (v, v.abs(), v.abs() + floor));
                    p
                })
                .collect()
        })
        .collect();

    let bv = beta.value();
    let mut min_mono: Option<Monomial> = None;
    let mut worst: Option<(Monomial, f64)> = None;
    for degree in 1..=max_degree {
        if degree > 1 {
            // q ← q · (diag(s) M): entry (i,j) = Σ_l q_il · s_l M_lj
            let mut next: Vec<Vec<Poly>> = vec![vec![Poly::new(); n]; n];
            for i in 0..n {
                for l in 0..n {
                    for (e, &(c, a, b)) in &q[i][l] {
                        let mut e2 = e.clone();
                        e2[l] += 1;
                        for (j, slot) in next[i].iter_mut().enumerate() {
                            let w = m.get(l, j);
                            let ent = slot.entry(e2.clone()).or_insert((0.0, 0.0, 0.0));
                            ent.0 += c * w;
                            ent.1 += a * w.abs();
                            ent.2 += b * (w.abs() + floor);
                        }
                    }
                }
            }
            q = next;
        }
        let mut trace = Poly::new();
        for (i, row) in q.iter().enumerate() {
            for (e, &(c, a, b)) in &row[i] {
                let ent = trace.entry(e.clone()).or_insert((0.0, 0.0, 0.0));
                ent.0 += c;
                ent.1 += a;
                ent.2 += b;
            }
        }
        let scale = bv / degree as f64;
        for (e, (c, a, b)) in trace {
            let coef = c * scale;
            let mag = tol * a * scale + (b - a) * scale;
            if min_mono.as_ref().is_none_or(|mm| coef < mm.coefficient) {
                min_mono = Some(Monomial {
                    exponents: e.clone(),
                    coefficient: coef,
                });
            }
            if coef < -mag && worst.as_ref().is_none_or(|(w, _)| coef < w.coefficient) {
                worst = Some((
                    Monomial {
                        exponents: e,
                        coefficient: coef,
                    },
                    mag,
                ));
            }
        }
    }
    Ok(match worst {
        Some((monomial, _)) => InfDivOutcome::NegativeCoefficient { t, monomial },
        None => InfDivOutcome::PassUpTo {
            t,
            max_degree,
            min_coefficient: min_mono.unwrap_or(Monomial {
                exponents: vec![0; n],
                coefficient: 0.0,
            }),
        },
    })
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    CertifiedAllBeta,
    Refuted,
    Inconclusive,
}

impl Verdict {
    /// CLI exit code: 0 certified, 1 refuted, 3 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::CertifiedAllBeta => 0,
            Verdict::Refuted => 1,
            Verdict::Inconclusive => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifySettings {
    pub r_grid: Vec<f64>,
    /// Truncation |𝐤| ≤ max_total for the Vere-Jones check.
    pub max_total: usize,
    /// When set, keep raising |𝐤| past `max_total` until a witness is found
    /// or this many expanded permanents have been evaluated.
    pub sweep_budget: Option<usize>,
    pub infdiv_t: Vec<f64>,
    pub infdiv_degree: usize,
    pub tol: f64,
}

impl Default for CertifySettings {
    fn default() -> Self {
        Self {
            r_grid: default_r_grid(),
            max_total: 4,
            sweep_budget: None,
            infdiv_t: vec![10.0, 100.0, 1000.0],
            infdiv_degree: 4,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub n: usize,
    pub beta: f64,
    pub kernel_hash: String,
    pub symmetric: bool,
    pub necessary: NecessaryReport,
    pub eigenvalue_ok: bool,
    pub m_matrix: MMatrixVerdict,
    pub vj_truncated: VjOutcome,
    pub infdiv_series: Vec<InfDivOutcome>,
    pub verdict: Verdict,
}

/// Runs the full battery. REFUTED needs a concrete witness; CERTIFIED_ALL_BETA
/// needs Γ⁻¹ to be an M-matrix; anything else is INCONCLUSIVE.
pub fn certify(
    g: &KernelMatrix,
    beta: BetaOrder,
    settings: &CertifySettings,
) -> Result<ExistenceReport> {
    let tol = settings.tol;
    let necessary = check_necessary_with(g, tol);
    let eigenvalue_ok = eigenvalue_positivity_with(g, tol);
    let m_matrix = inverse_is_m_matrix(g, tol);
    let max_total = settings.max_total.min(DP_LIMIT);
    let mut vj = vere_jones_check(g, beta, &settings.r_grid, max_total, tol)?;
    if let (Some(budget), None) = (settings.sweep_budget, vj.witness()) {
        let sweep = vere_jones_sweep(g, beta, &settings.r_grid, budget, tol)?;
        if sweep.outcome.witness().is_some() || sweep.reached > max_total {
            vj = sweep.outcome;
        }
    }
    let infdiv_series = settings
        .infdiv_t
        .iter()
        .map(
            |&t| match infdiv_series_check(g, beta, t, settings.infdiv_degree, tol) {
                Err(Error::SeriesDivergence { radius }) => Ok(InfDivOutcome::Diverges {
                    t,
                    spectral_radius: radius,
                }),
                other => other,
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let verdict = if !necessary.all_ok() || vj.witness().is_some() {
        Verdict::Refuted
    } else if m_matrix.is_certified() {
        Verdict::CertifiedAllBeta
    } else {
        Verdict::Inconclusive
    };
    Ok(ExistenceReport {
        n: g.n(),
        beta: beta.value(),
        kernel_hash: g.matrix().content_hash(),
        symmetric: g.is_symmetric(),
        necessary,
        eigenvalue_ok,
        m_matrix,
        vj_truncated: vj,
        infdiv_series,
        verdict,
    })
}
