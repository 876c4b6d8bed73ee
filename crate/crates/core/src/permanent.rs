//! β-permanents and the moment/Laplace-transform identities built on them.
//!
//! The β-permanent of an n×n matrix B is
//!
//! ```text
//! |B|_β = Σ_σ β^{m(σ)} b_{1,σ(1)} ⋯ b_{n,σ(n)}
//! ```
//!
//! where m(σ) is the number of cycles of σ. Two independent algorithms are
//! provided: [`beta_permanent_bruteforce`] enumerates all n! permutations and
//! [`beta_permanent_dp`] runs a subset dynamic program over cycle covers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{determinant, SquareMatrix};
use crate::numeric::CompensatedSum;

/// Largest n accepted by [`beta_permanent_bruteforce`].
pub const BRUTEFORCE_LIMIT: usize = 10;
/// Largest n accepted by [`beta_permanent_dp`].
pub const DP_LIMIT: usize = 20;

/// The exponent β > 0, optionally carrying an exact rational form p/q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaOrder {
    value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rational: Option<(u64, u64)>,
}

impl BetaOrder {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Domain(format!("β must be positive, got {value}")));
        }
        Ok(Self {
            value,
            rational: None,
        })
    }

    pub fn rational(p: u64, q: u64) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::Domain(format!("β = {p}/{q} must be positive")));
        }
        Ok(Self {
            value: p as f64 / q as f64,
            rational: Some((p, q)),
        })
    }

    /// β = k/2, the Gaussian-square orders.
    pub fn half_integer(k: u64) -> Result<Self> {
        Self::rational(k, 2)
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn as_rational(&self) -> Option<(u64, u64)> {
        self.rational
    }

    /// `Some(k)` when β = k/2 exactly.
    pub fn as_half_integer(&self) -> Option<u64> {
        match self.rational {
            Some((p, q)) if (2 * p) % q == 0 => Some(2 * p / q),
            _ => {
                let k = (2.0 * self.value).round();
                ((2.0 * self.value - k).abs() < 1e-12 && k >= 1.0).then_some(k as u64)
            }
        }
    }
}

/// A multi-index 𝐤 = (k₁, …, kₙ) with |𝐤| ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(k: Vec<usize>) -> Result<Self> {
        if k.iter().sum::<usize>() == 0 {
            return Err(Error::InvalidInput("multi-index must have |k| >= 1".into()));
        }
        Ok(Self(k))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// All multi-indices of length `n` with |𝐤| = `total` (stars and bars),
    /// in lexicographically decreasing order of the leading components.
    pub fn with_total(n: usize, total: usize) -> Vec<MultiIndex> {
        fn rec(n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if cur.len() == n - 1 {
                cur.push(left);
                out.push(MultiIndex(cur.clone()));
                cur.pop();
                return;
            }
            for k in (0..=left).rev() {
                cur.push(k);
                rec(n, left - k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if n == 0 || total == 0 {
            return out;
        }
        rec(n, total, &mut Vec::with_capacity(n), &mut out);
        out
    }

    /// All multi-indices with 1 ≤ |𝐤| ≤ `max_total`, ordered by total.
    pub fn up_to(n: usize, max_total: usize) -> Vec<MultiIndex> {
        (1..=max_total)
            .flat_map(|t| Self::with_total(n, t))
            .collect()
    }
}

/// Reference β-permanent by enumeration of all permutations.
pub fn beta_permanent_bruteforce(b: &SquareMatrix, beta: BetaOrder) -> Result<f64> {
    let n = b.n();
    if n > BRUTEFORCE_LIMIT {
        return Err(Error::DimensionLimit {
            what: "brute-force permanent",
            n,
            limit: BRUTEFORCE_LIMIT,
        });
    }
    // beta^0..=beta^n
    let powers: Vec<f64> = (0..=n).map(|m| beta.value().powi(m as i32)).collect();
    let mut perm = vec![0usize; n];
    let mut acc = CompensatedSum::new();

    fn cycles(perm: &[usize]) -> usize {
        let mut seen = 0u32;
        let mut count = 0;
        for start in 0..perm.len() {
            if seen & (1 << start) != 0 {
                continue;
            }
            count += 1;
            let mut j = start;
            while seen & (1 << j) == 0 {
                seen |= 1 << j;
                j = perm[j];
            }
        }
        count
    }

    fn rec(
        b: &SquareMatrix,
        row: usize,
        used: u32,
        prod: f64,
        perm: &mut [usize],
        powers: &[f64],
        acc: &mut CompensatedSum,
    ) {
        let n = b.n();
        if row == n {
            acc.add(powers[cycles(perm)] * prod);
            return;
        }
        for col in 0..n {
            if used & (1 << col) != 0 {
                continue;
            }
            let entry = b.get(row, col);
            if entry == 0.0 {
                continue;
            }
            perm[row] = col;
            rec(
                b,
                row + 1,
                used | (1 << col),
                prod * entry,
                perm,
                powers,
                acc,
            );
        }
    }

    rec(b, 0, 0, 1.0, &mut perm, &powers, &mut acc);
    Ok(acc.value())
}

/// β-permanent by dynamic programming over cycle covers.
///
/// Cycles are generated in order of their smallest element: each new cycle
/// starts at the lowest uncovered index `s` and may only visit indices above
/// `s`. A partial state is (s, covered set, current endpoint), so every cycle
/// cover of {0, …, n−1} is produced exactly once. Time O(n²·2ⁿ), memory
/// O(n·2ⁿ) for the largest layer.
pub fn beta_permanent_dp(b: &SquareMatrix, beta: BetaOrder) -> Result<f64> {
    let n = b.n();
    if n > DP_LIMIT {
        return Err(Error::DimensionLimit {
            what: "DP permanent",
            n,
            limit: DP_LIMIT,
        });
    }
    let beta = beta.value();
    let full: usize = (1 << n) - 1;

    // closed[mask]: total weight of disjoint cycle sets covering exactly `mask`
    // that were produced in canonical order.
    let mut closed = vec![CompensatedSum::new(); 1 << n];
    closed[0].add(1.0);

    for s in 0..n {
        let low: usize = (1 << (s + 1)) - 1;
        let high_bits = n - 1 - s;
        let width = n - s; // endpoints s..n, stored as v - s
        let mut open = vec![CompensatedSum::new(); (1 << high_bits) * width];

        // Seed: closed sets whose lowest uncovered index is s. They contain
        // 0..s, and bit s is clear.
        for x in 0..(1usize << high_bits) {
            let prev = (low >> 1) | (x << (s + 1));
            let c = closed[prev].value();
            if c != 0.0 {
                open[x * width].add(beta * c);
            }
        }

        for x in 0..(1usize << high_bits) {
            let mask = low | (x << (s + 1));
            for off in 0..width {
                let v = s + off;
                if off > 0 && x & (1 << (off - 1)) == 0 {
                    continue;
                }
                let val = open[x * width + off].value();
                if val == 0.0 {
                    continue;
                }
                closed[mask].add(val * b.get(v, s));
                for u in (s + 1)..n {
                    let bit = 1 << (u - s - 1);
                    if x & bit != 0 {
                        continue;
                    }
                    let w = b.get(v, u);
                    if w != 0.0 {
                        open[(x | bit) * width + (u - s)].add(val * w);
                    }
                }
            }
        }
    }
    Ok(closed[full].value())
}

/// β-permanent with the DP algorithm (the default route).
pub fn beta_permanent(b: &SquareMatrix, beta: BetaOrder) -> Result<f64> {
    beta_permanent_dp(b, beta)
}

/// Evaluates many (B, β) pairs in parallel. Results are in input order.
pub fn beta_permanent_batch(items: &[(SquareMatrix, BetaOrder)]) -> Vec<Result<f64>> {
    items
        .par_iter()
        .map(|(b, beta)| beta_permanent_dp(b, *beta))
        .collect()
}

/// The |𝐤|×|𝐤| matrix B(𝐤) whose index i belongs to block l when
/// K_{l−1} < i ≤ K_l, K_l = k₁ + … + k_l.
pub fn expand_multi_index(b: &SquareMatrix, k: &MultiIndex) -> Result<SquareMatrix> {
    if k.len() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: b.n(),
            got: k.len(),
        });
    }
    let blocks: Vec<usize> = k
        .as_slice()
        .iter()
        .enumerate()
        .flat_map(|(l, &kl)| std::iter::repeat_n(l, kl))
        .collect();
    SquareMatrix::from_fn(blocks.len(), |i, j| b.get(blocks[i], blocks[j]))
}

/// det(I + diag(α)Γ) for arbitrary real α.
pub(crate) fn shifted_determinant(g: &SquareMatrix, alpha: &[f64]) -> f64 {
    let n = g.n();
    let m = SquareMatrix::from_fn(n, |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        d + alpha[i] * g.get(i, j)
    })
    .expect("finite entries");
    determinant(&m)
}

/// det(I + diag(α)Γ)^(−β).
pub fn laplace_transform(g: &SquareMatrix, beta: BetaOrder, alpha: &[f64]) -> Result<f64> {
    if alpha.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            got: alpha.len(),
        });
    }
    if let Some(a) = alpha.iter().find(|a| !(**a >= 0.0)) {
        return Err(Error::Domain(format!("α components must be >= 0, got {a}")));
    }
    laplace_unchecked(g, beta, alpha)
}

/// Same as [`laplace_transform`] but allows negative α (used by the
/// finite-difference oracle near the origin).
fn laplace_unchecked(g: &SquareMatrix, beta: BetaOrder, alpha: &[f64]) -> Result<f64> {
    let det = shifted_determinant(g, alpha);
    if !(det > 0.0) {
        return Err(Error::NonPositiveDeterminant { det });
    }
    Ok(det.powf(-beta.value()))
}

/// Which normalization a moment is reported in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentConvention {
    /// E ∏ (θᵢ/2) = Perm_β(Γ): the moments of θ/2, whose Laplace transform
    /// is E exp(−Σ αᵢ θᵢ/2) = det(I + αΓ)^(−β).
    VereJones,
    /// E ∏ θᵢ = 2ⁿ Perm_β(Γ) under the ½-scaled Laplace transform.
    HalfScaled,
}

/// Mixed moment of order (1, …, 1) from the β-permanent.
pub fn moment(g: &SquareMatrix, beta: BetaOrder, convention: MomentConvention) -> Result<f64> {
    let p = beta_permanent_dp(g, beta)?;
    Ok(match convention {
        MomentConvention::VereJones => p,
        MomentConvention::HalfScaled => p * 2f64.powi(g.n() as i32),
    })
}

/// Mixed moment of arbitrary order: the β-permanent of the expanded kernel.
pub fn moment_of_order(
    g: &SquareMatrix,
    beta: BetaOrder,
    order: &MultiIndex,
    convention: MomentConvention,
) -> Result<f64> {
    let expanded = expand_multi_index(g, order)?;
    moment(&expanded, beta, convention)
}

/// Largest rounding bound accepted by [`moment_numdiff_oracle`].
const NUMDIFF_ROUNDING_LIMIT: f64 = 1e-6;

/// Central-difference stencil for the k-th derivative: (offsets, weights·hᵏ).
fn stencil(k: usize) -> Option<(&'static [i32], &'static [f64])> {
    Some(match k {
        0 => (&[0], &[1.0]),
        1 => (&[-1, 1], &[-0.5, 0.5]),
        2 => (&[-1, 0, 1], &[1.0, -2.0, 1.0]),
        3 => (&[-2, -1, 1, 2], &[-0.5, 1.0, -1.0, 0.5]),
        4 => (&[-2, -1, 0, 1, 2], &[1.0, -4.0, 6.0, -4.0, 1.0]),
        _ => return None,
    })
}

/// Mixed moment E ∏ (θᵢ/2)^{kᵢ} from central differences of the Laplace
/// transform at α = 0. Truncation error is O(step²) in each coordinate.
///
/// This route never touches a permanent and serves as the independent check
/// on [`moment`]; it agrees with [`MomentConvention::VereJones`].
pub fn moment_numdiff_oracle(
    g: &SquareMatrix,
    beta: BetaOrder,
    order: &MultiIndex,
    step: f64,
) -> Result<f64> {
    let n = g.n();
    if order.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: order.len(),
        });
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    let stencils = order
        .as_slice()
        .iter()
        .map(|&k| {
            stencil(k)
                .ok_or_else(|| Error::Domain(format!("per-coordinate order {k} > 4 not supported")))
        })
        .collect::<Result<Vec<_>>>()?;
    let total = order.total();
    let weight_mass: f64 = stencils
        .iter()
        .map(|(_, w)| w.iter().map(|x| x.abs()).sum::<f64>())
        .product();
    let bound = f64::EPSILON * weight_mass / step.powi(total as i32);
    if bound > NUMDIFF_ROUNDING_LIMIT {
        return Err(Error::StepTooSmall {
            step,
            order: total,
            bound,
        });
    }

    let mut acc = CompensatedSum::new();
    let mut idx = vec![0usize; n];
    let mut alpha = vec![0.0; n];
    'outer: loop {
        let mut w = 1.0;
        for i in 0..n {
            let (off, wt) = stencils[i];
            alpha[i] = off[idx[i]] as f64 * step;
            w *= wt[idx[i]];
        }
        acc.add(w * laplace_unchecked(g, beta, &alpha)?);
        // odometer
        for i in 0..n {
            idx[i] += 1;
            if idx[i] < stencils[i].0.len() {
                continue 'outer;
            }
            idx[i] = 0;
        }
        break;
    }
    let sign = if total % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * acc.value() / step.powi(total as i32))
}

/// A permanent result tagged with the hash of its input, for JSON output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermanentRecord {
    pub input_hash: String,
    pub n: usize,
    pub beta: f64,
    pub method: String,
    pub value: f64,
}

impl PermanentRecord {
    pub fn compute(b: &SquareMatrix, beta: BetaOrder) -> Result<Self> {
        Ok(Self {
            input_hash: b.content_hash(),
            n: b.n(),
            beta: beta.value(),
            method: "dp".into(),
            value: beta_permanent_dp(b, beta)?,
        })
    }
}

/// The pairwise-independence kernel [[1,a,0],[0,1,b],[c,0,1]].
pub fn pairwise_independent_kernel(a: f64, b: f64, c: f64) -> SquareMatrix {
    SquareMatrix::from_rows(&[vec![1.0, a, 0.0], vec![0.0, 1.0, b], vec![c, 0.0, 1.0]])
        .expect("finite parameters")
}
