//! The permanental distance and entropy integrals over a finite index set.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{KernelMatrix, SquareMatrix};
use crate::numeric::logspace;
use crate::sampler::SampleBatch;

/// 4√(2/3)
pub fn distance_constant() -> f64 {
    4.0 * (2.0f64 / 3.0).sqrt()
}

/// Relative tolerance for radicands and products.
pub const DISTANCE_TOL: f64 = 1e-9;

/// Symmetric table of pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceTable {
    n: usize,
    data: Vec<f64>,
}

impl DistanceTable {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::InvalidInput(format!("distance ({i}, {j}) = {d}")));
                }
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn diameter(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_positive(&self) -> Option<f64> {
        self.data
            .iter()
            .cloned()
            .filter(|&d| d > 0.0)
            .min_by(f64::total_cmp)
    }

    /// Rows `i,j,d` for i < j.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "j", "d"])?;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                out.write_record([i.to_string(), j.to_string(), self.get(i, j).to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Probability weights on the index set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMeasure {
    weights: Vec<f64>,
}

impl FiniteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput(
                "weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn pair_radicand(g: &KernelMatrix, i: usize, j: usize) -> Result<f64> {
    let (gii, gjj, gij, gji) = (g.get(i, i), g.get(j, j), g.get(i, j), g.get(j, i));
    let scale = gii.abs().max(gjj.abs()).max(gij.abs()).max(gji.abs());
    let prod = gij * gji;
    if prod < -DISTANCE_TOL * scale * scale {
        return Err(Error::NegativeProduct { i, j, value: prod });
    }
    let rad = gii + gjj - 2.0 * prod.max(0.0).sqrt();
    if rad < -DISTANCE_TOL * scale {
        return Err(Error::NegativeRadicand { i, j, value: rad });
    }
    Ok(rad.max(0.0))
}

/// d(i,j) = 4√(2/3)·(Γᵢᵢ + Γⱼⱼ − 2√(ΓᵢⱼΓⱼᵢ))^{1/2}.
pub fn permanental_distance(g: &KernelMatrix, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Ok(0.0);
    }
    Ok(distance_constant() * pair_radicand(g, i, j)?.sqrt())
}

pub fn distance_table(g: &KernelMatrix) -> Result<DistanceTable> {
    let n = g.n();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            rows.push(if i < j {
                permanental_distance(g, i, j)?
            } else {
                0.0
            });
        }
    }
    DistanceTable::from_fn(n, |i, j| rows[i * n + j])
}

/// Symmetric matrix with entries √(ΓᵢⱼΓⱼᵢ); the diagonal is kept.
pub fn sqrt_symmetrize(g: &KernelMatrix) -> Result<SquareMatrix> {
    let n = g.n();
    let scale = g.matrix().max_abs();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = g.get(i, j) * g.get(j, i);
            if p < -DISTANCE_TOL * scale * scale {
                return Err(Error::NegativeProduct { i, j, value: p });
            }
        }
    }
    SquareMatrix::from_fn(n, |i, j| {
        if i == j {
            g.get(i, i)
        } else {
            (g.get(i, j) * g.get(j, i)).max(0.0).sqrt()
        }
    })
}

/// All (i, j, k), i < j, k ∉ {i, j}, with d(i,j) > d(i,k) + d(k,j) + tol.
/// Indices are zero-based.
pub fn triangle_check(d: &DistanceTable, tol: f64) -> Vec<(usize, usize, usize)> {
    let n = d.n();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut out = Vec::new();
            for j in (i + 1)..n {
                for k in 0..n {
                    if k != i && k != j && d.get(i, j) > d.get(i, k) + d.get(k, j) + tol {
                        out.push((i, j, k));
                    }
                }
            }
            out
        })
        .collect()
}

/// Flags for the entropy conditions, with the numbers behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyFlags {
    pub j_diameter_finite: bool,
    /// J at the finest positive radius divided by J(D).
    pub j_finest_over_j_diameter: f64,
    pub j_vanishes: bool,
    /// (J(δ)/δ at the finest radius) / (J(D)/D).
    pub ratio_growth: f64,
    pub ratio_diverges: bool,
}

/// Thresholds behind [`EntropyFlags`].
pub const VANISH_FRACTION: f64 = 0.05;
pub const RATIO_GROWTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub radii: Vec<f64>,
    /// ∫₀^a (log 1/μ(B(t,u)))^{1/2} du, sup over t.
    pub j: Vec<f64>,
    /// ∫₀^a log 1/μ(B(t,u)) du, sup over t.
    pub i_linear: Vec<f64>,
    pub diameter: f64,
    pub flags: EntropyFlags,
}

impl EntropyProfile {
    /// J at `a` by linear interpolation on the radius grid; J(a) = J(D) past D.
    pub fn j_at(&self, a: f64) -> f64 {
        interp(&self.radii, &self.j, a)
    }

    /// Rows `radius,J,I`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["radius", "J", "I"])?;
        for k in 0..self.radii.len() {
            out.write_record([
                self.radii[k].to_string(),
                self.j[k].to_string(),
                self.i_linear[k].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let k = xs.partition_point(|&v| v < x);
    if k >= xs.len() {
        return *ys.last().unwrap();
    }
    let (x0, x1, y0, y1) = (xs[k - 1], xs[k], ys[k - 1], ys[k]);
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// {0} ∪ 200 log-spaced radii from (min positive distance)/2 to the diameter.
pub fn default_radii(d: &DistanceTable) -> Vec<f64> {
    let mut r = vec![0.0];
    if let Some(lo) = d.min_positive() {
        r.extend(logspace(lo / 2.0, d.diameter(), 200));
    }
    r
}

/// Entropy integrals over closed balls, trapezoid rule on `radii` (which must
/// start at 0 and increase). A ball of zero measure makes the integrand +∞.
pub fn entropy_profile(
    d: &DistanceTable,
    mu: &FiniteMeasure,
    radii: &[f64],
) -> Result<EntropyProfile> {
    let n = d.n();
    if mu.weights().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: mu.weights().len(),
        });
    }
    if radii.first() != Some(&0.0) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "radii must start at 0 and increase strictly".into(),
        ));
    }
    let per_center: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|t| {
            let mut nb: Vec<(f64, f64)> = (0..n).map(|s| (d.get(t, s), mu.weights()[s])).collect();
            nb.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cum = Vec::with_capacity(n);
            let mut acc = 0.0;
            for &(_, w) in &nb {
                acc += w;
                cum.push(acc);
            }
            let logs: Vec<f64> = radii
                .iter()
                .map(|&u| {
                    let k = nb.partition_point(|p| p.0 <= u);
                    let m = if k == 0 { 0.0 } else { cum[k - 1] };
                    if m <= 0.0 {
                        f64::INFINITY
                    } else {
                        (-m.ln()).max(0.0)
                    }
                })
                .collect();
            (
                cumulative_trapezoid(radii, logs.iter().map(|l| l.sqrt())),
                cumulative_trapezoid(radii, logs.iter().cloned()),
            )
        })
        .collect();
    let sup = |pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> Vec<f64> {
        (0..radii.len())
            .map(|k| per_center.iter().map(|c| pick(c)[k]).fold(0.0, f64::max))
            .collect()
    };
    let j = sup(|c| &c.0);
    let i_linear = sup(|c| &c.1);
    let diameter = d.diameter();
    let flags = entropy_flags(radii, &j);
    Ok(EntropyProfile {
        radii: radii.to_vec(),
        j,
        i_linear,
        diameter,
        flags,
    })
}

fn cumulative_trapezoid(x: &[f64], f: impl Iterator<Item = f64>) -> Vec<f64> {
    let f: Vec<f64> = f.collect();
    let mut out = vec![0.0; x.len()];
    for k in 1..x.len() {
        let h = x[k] - x[k - 1];
        out[k] = out[k - 1] + 0.5 * h * (f[k] + f[k - 1]);
    }
    out
}

fn entropy_flags(radii: &[f64], j: &[f64]) -> EntropyFlags {
    let last = radii.len() - 1;
    let jd = j[last];
    let finest = radii.iter().position(|&r| r > 0.0).unwrap_or(last);
    let frac = if jd > 0.0 { j[finest] / jd } else { f64::NAN };
    let growth = if jd > 0.0 && radii[finest] > 0.0 {
        (j[finest] / radii[finest]) / (jd / radii[last])
    } else {
        f64::NAN
    };
    EntropyFlags {
        j_diameter_finite: jd.is_finite(),
        j_finest_over_j_diameter: frac,
        j_vanishes: frac < VANISH_FRACTION,
        ratio_growth: growth,
        ratio_diverges: growth >= RATIO_GROWTH,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub path: usize,
    pub scale: f64,
    /// sup over pairs with d(s,t) ≤ scale of |θ_s − θ_t| / J(d(s,t)/2).
    pub entropy_ratio: f64,
    /// sup over pairs with d(s,t) ≤ scale of |θ_s − θ_t| / (|x−y|^a log(1/|x−y|))^{1/2}.
    pub functional_ratio: Option<f64>,
    pub sup_theta: f64,
    pub reference: f64,
}

/// Coordinates and exponent for the functional-form column.
#[derive(Debug, Clone, Copy)]
pub struct FunctionalForm<'a> {
    pub coords: &'a [f64],
    pub exponent: f64,
}

/// Diagnostic modulus table, one row per (path, scale). `reference` is
/// 30·(sup θ)^{1/2}.
pub fn modulus_report(
    paths: &SampleBatch,
    d: &DistanceTable,
    profile: &EntropyProfile,
    scales: &[f64],
    form: Option<FunctionalForm<'_>>,
) -> Result<Vec<ModulusRow>> {
    let n = d.n();
    if paths.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: paths.n(),
        });
    }
    let mut pairs: Vec<(f64, usize, usize, f64, Option<f64>)> = Vec::new();
    for s in 0..n {
        for t in (s + 1)..n {
            let dst = d.get(s, t);
            let jv = profile.j_at(dst / 2.0);
            let fv = form.and_then(|f| {
                let h = (f.coords[s] - f.coords[t]).abs();
                (h > 0.0 && h < 1.0).then(|| (h.powf(f.exponent) * (1.0 / h).ln()).sqrt())
            });
            pairs.push((dst, s, t, jv, fv));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rows: Vec<Vec<ModulusRow>> = (0..paths.m())
        .into_par_iter()
        .map(|p| {
            let th = paths.sample(p);
            let sup_theta = th.iter().cloned().fold(0.0, f64::max);
            let mut out = Vec::with_capacity(scales.len());
            let (mut k, mut er, mut fr) = (0usize, 0.0f64, None::<f64>);
            for &sc in scales {
                while k < pairs.len() && pairs[k].0 <= sc {
                    let (_, s, t, jv, fv) = pairs[k];
                    let diff = (th[s] - th[t]).abs();
                    if jv > 0.0 {
                        er = er.max(diff / jv);
                    }
                    if let Some(f) = fv {
                        fr = Some(fr.unwrap_or(0.0).max(diff / f));
                    }
                    k += 1;
                }
                out.push(ModulusRow {
                    path: p,
                    scale: sc,
                    entropy_ratio: er,
                    functional_ratio: fr,
                    sup_theta,
                    reference: 30.0 * sup_theta.sqrt(),
                });
            }
            out
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::min_symmetric_eigenvalue;

    fn k(rows: &[&[f64]]) -> KernelMatrix {
        KernelMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let id = KernelMatrix::new(SquareMatrix::identity(2));
        assert_eq!(permanental_distance(&id, 1, 1).unwrap(), 0.0);
        let d = permanental_distance(&id, 0, 1).unwrap();
        assert!((d - distance_constant() * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distance_zero_radicand_and_errors() {
        let g = k(&[&[1.0, 2.0], &[0.5, 1.0]]);
        assert_eq!(permanental_distance(&g, 0, 1).unwrap(), 0.0);
        assert!(matches!(
            permanental_distance(&k(&[&[1.0, 2.0], &[3.0, 1.0]]), 0, 1),
            Err(Error::NegativeRadicand { .. })
        ));
        assert!(matches!(
            permanental_distance(&k(&[&[1.0, -1.0], &[1.0, 1.0]]), 0, 1),
            Err(Error::NegativeProduct { .. })
        ));
    }

    #[test]
    fn sqrt_symmetrize_examples() {
        let g = k(&[&[1.0, 2.0], &[0.5, 1.0]]);
        let s = sqrt_symmetrize(&g).unwrap();
        assert_eq!(s.rows(), vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let sym = k(&[&[2.0, 0.3], &[0.3, 1.0]]);
        assert_eq!(sqrt_symmetrize(&sym).unwrap(), *sym.matrix());
    }

    #[test]
    fn sqrt_symmetrize_brownian_psd() {
        let g = KernelMatrix::from_fn(3, |i, j| (i.min(j) + 1) as f64).unwrap();
        assert!(min_symmetric_eigenvalue(&sqrt_symmetrize(&g).unwrap()) >= -1e-8);
    }

    #[test]
    fn triangle_examples() {
        let two = DistanceTable::from_fn(2, |_, _| 5.0).unwrap();
        assert!(triangle_check(&two, 1e-9).is_empty());
        let bad =
            DistanceTable::from_fn(3, |i, j| if (i, j) == (0, 1) { 3.0 } else { 1.0 }).unwrap();
        assert_eq!(triangle_check(&bad, 1e-9), vec![(0, 1, 2)]);
    }

    #[test]
    fn entropy_single_point() {
        let d = DistanceTable::from_fn(1, |_, _| 0.0).unwrap();
        let p = entropy_profile(&d, &FiniteMeasure::uniform(1), &[0.0, 0.5, 1.0]).unwrap();
        assert!(p.j.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn entropy_equidistant_closed_form() {
        let (m, c) = (7usize, 2.0);
        let d = DistanceTable::from_fn(m, |_, _| c).unwrap();
        let p = entropy_profile(&d, &FiniteMeasure::uniform(m), &default_radii(&d)).unwrap();
        assert_eq!(p.j[0], 0.0);
        let s = (m as f64).ln().sqrt();
        for (a, j) in p.radii.iter().zip(&p.j) {
            if *a < c {
                assert!((j - a * s).abs() < 1e-12, "{a} {j}");
            }
        }
        assert!(p.j.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn entropy_zero_measure_ball_is_infinite() {
        let d = DistanceTable::from_fn(2, |_, _| 1.0).unwrap();
        let mu = FiniteMeasure::new(vec![1.0, 0.0]).unwrap();
        let p = entropy_profile(&d, &mu, &[0.0, 0.5, 1.0]).unwrap();
        assert!(p.j[1].is_infinite());
        assert!(!p.flags.j_diameter_finite);
    }

    #[test]
    fn measure_validation() {
        assert!(FiniteMeasure::new(vec![0.5, 0.4]).is_err());
        assert!(FiniteMeasure::new(vec![0.5, -0.5, 1.0]).is_err());
    }

    #[test]
    fn modulus_constant_path_is_zero() {
        let n = 5;
        let d = DistanceTable::from_fn(n, |i, j| ((j - i) as f64).sqrt()).unwrap();
        let prof = entropy_profile(&d, &FiniteMeasure::uniform(n), &default_radii(&d)).unwrap();
        let g = KernelMatrix::new(SquareMatrix::from_fn(n, |_, _| 1.0).unwrap());
        let batch = crate::sampler::sample_gaussian_square(&g, 1, 3, 0).unwrap();
        let coords: Vec<f64> = (0..n).map(|i| i as f64 / 10.0).collect();
        let rows = modulus_report(
            &batch,
            &d,
            &prof,
            &[1.0, 2.0],
            Some(FunctionalForm {
                coords: &coords,
                exponent: 1.0,
            }),
        )
        .unwrap();
        assert_eq!(rows.len(), 6);
        for r in rows {
            assert!(r.entropy_ratio < 1e-9 * (1.0 + r.sup_theta));
        }
    }

    #[test]
    fn csv_outputs() {
        let d = DistanceTable::from_fn(3, |i, j| (i + j) as f64).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "i,j,d\n0,1,1\n0,2,2\n1,2,3\n"
        );
    }
}
