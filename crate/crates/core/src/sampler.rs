//! Constructive samplers: squares of Gaussian vectors, gamma marginals, and the
//! bivariate law of a possibly non-symmetric 2×2 kernel.

use std::io::Write;

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::existence::check_necessary;
use crate::matrix::{KernelMatrix, SquareMatrix};
use crate::metric::sqrt_symmetrize;
use crate::numeric::pairwise_sum;
use crate::permanent::BetaOrder;
use crate::rng::{fill_blocks, BLOCK_SIZE};

/// Eigenvalues above −PSD_CLIP·max(1, ‖Γ‖) are clipped to zero.
pub const PSD_CLIP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleMethod {
    GaussianSquare { copies: usize },
    Univariate,
    Bivariate { copies: usize },
}

/// `m` samples of an `n`-vector, stored sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    m: usize,
    n: usize,
    data: Vec<f64>,
    pub seed: u64,
    pub kernel_hash: String,
    pub beta: f64,
    pub method: SampleMethod,
}

/// Provenance written next to a batch CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub seed: u64,
    pub kernel_hash: String,
    pub beta: f64,
    pub method: SampleMethod,
    pub m: usize,
    pub n: usize,
    pub rng: String,
    pub block_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl SampleBatch {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample(&self, s: usize) -> &[f64] {
        &self.data[s * self.n..(s + 1) * self.n]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.m).map(|s| self.data[s * self.n + i]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Coordinatewise sum of two batches of the same shape.
    pub fn add(&self, other: &SampleBatch) -> Result<SampleBatch> {
        if self.m != other.m || self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.m * self.n,
                got: other.m * other.n,
            });
        }
        Ok(SampleBatch {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
            beta: self.beta + other.beta,
            ..self.clone()
        })
    }

    pub fn sidecar(&self, config_hash: Option<String>) -> SampleSidecar {
        SampleSidecar {
            seed: self.seed,
            kernel_hash: self.kernel_hash.clone(),
            beta: self.beta,
            method: self.method.clone(),
            m: self.m,
            n: self.n,
            rng: "chacha20, stream = block index".into(),
            block_size: BLOCK_SIZE,
            config_hash,
        }
    }

    /// One row per sample, columns `theta_0 … theta_{n-1}`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record((0..self.n).map(|i| format!("theta_{i}")))?;
        for s in 0..self.m {
            out.write_record(self.sample(s).iter().map(|x| x.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Symmetric square-root factor L with L Lᵀ = Γ, negative eigenvalues clipped.
pub fn psd_factor(g: &SquareMatrix) -> Result<SquareMatrix> {
    let asym = g.asymmetry();
    if asym > crate::matrix::SYMMETRY_TOL * g.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let eig = SymmetricEigen::new(g.to_dmatrix());
    let clip = PSD_CLIP * g.max_abs().max(1.0);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min < -clip {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    let n = g.n();
    let mut l = eig.eigenvectors.clone();
    for j in 0..n {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n {
            l[(i, j)] *= s;
        }
    }
    SquareMatrix::from_dmatrix(&l)
}

fn gaussian_squares(l: &SquareMatrix, copies: usize, m: usize, seed: u64) -> Vec<f64> {
    let n = l.n();
    fill_blocks(seed, m, n, |rng, rows| {
        let mut z = vec![0.0; n];
        for row in rows.chunks_mut(n) {
            for _ in 0..copies {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                for (i, out) in row.iter_mut().enumerate() {
                    let gi: f64 = (0..n).map(|j| l.get(i, j) * z[j]).sum();
                    *out += gi * gi;
                }
            }
        }
    })
}

/// θ = Σ_{j≤k} G_j², G_j i.i.d. centred Gaussian with covariance Γ. The law is
/// β-permanental with β = k/2.
pub fn sample_gaussian_square(
    g: &KernelMatrix,
    copies: usize,
    m: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if copies == 0 || m == 0 {
        return Err(Error::InvalidInput("copies and m must be positive".into()));
    }
    let l = psd_factor(g.matrix())?;
    Ok(SampleBatch {
        m,
        n: g.n(),
        data: gaussian_squares(&l, copies, m, seed),
        seed,
        kernel_hash: g.matrix().content_hash(),
        beta: copies as f64 / 2.0,
        method: SampleMethod::GaussianSquare { copies },
    })
}

/// Gamma with shape β and scale 2Γ₁₁.
pub fn sample_univariate(
    gamma_xx: f64,
    beta: BetaOrder,
    m: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if !(gamma_xx > 0.0 && gamma_xx.is_finite()) || m == 0 {
        return Err(Error::InvalidInput(format!(
            "need gamma_xx > 0 and m > 0, got {gamma_xx}, {m}"
        )));
    }
    let dist =
        Gamma::new(beta.value(), 2.0 * gamma_xx).map_err(|e| Error::Domain(e.to_string()))?;
    let data = fill_blocks(seed, m, 1, |rng, rows| {
        for x in rows {
            *x = dist.sample(rng);
        }
    });
    let g = SquareMatrix::from_row_major(1, vec![gamma_xx])?;
    Ok(SampleBatch {
        m,
        n: 1,
        data,
        seed,
        kernel_hash: g.content_hash(),
        beta: beta.value(),
        method: SampleMethod::Univariate,
    })
}

/// Bivariate k/2-permanental law of a 2×2 kernel, via Gaussian squares with
/// covariance [[Γ₁₁, √(Γ₁₂Γ₂₁)], [√(Γ₁₂Γ₂₁), Γ₂₂]].
pub fn sample_bivariate(
    g: &KernelMatrix,
    copies: usize,
    m: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if g.n() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: g.n(),
        });
    }
    let nec = check_necessary(g);
    if let Some(w) = nec.witnesses.first() {
        return Err(Error::Domain(format!(
            "necessary condition {:?} fails at ({}, {}): {}",
            w.condition, w.i, w.j, w.value
        )));
    }
    let cov = KernelMatrix::new(sqrt_symmetrize(g)?);
    let mut batch = sample_gaussian_square(&cov, copies, m, seed)?;
    batch.kernel_hash = g.matrix().content_hash();
    batch.method = SampleMethod::Bivariate { copies };
    Ok(batch)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalLT {
    pub alpha: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = pairwise_sum(xs) / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Mean of exp(−½⟨α, θ⟩) and its standard error at each grid point.
pub fn empirical_laplace(batch: &SampleBatch, alpha_grid: &[Vec<f64>]) -> Result<EmpiricalLT> {
    let mut mean = Vec::with_capacity(alpha_grid.len());
    let mut se = Vec::with_capacity(alpha_grid.len());
    for a in alpha_grid {
        if a.len() != batch.n {
            return Err(Error::DimensionMismatch {
                expected: batch.n,
                got: a.len(),
            });
        }
        let vals: Vec<f64> = (0..batch.m)
            .map(|s| {
                let dot: f64 = a.iter().zip(batch.sample(s)).map(|(x, y)| x * y).sum();
                (-0.5 * dot).exp()
            })
            .collect();
        let (mu, e) = mean_se(&vals);
        mean.push(mu);
        se.push(e);
    }
    Ok(EmpiricalLT {
        alpha: alpha_grid.to_vec(),
        mean,
        se,
    })
}

/// Sample mean of coordinate `i` and its standard error.
pub fn empirical_mean(batch: &SampleBatch, i: usize) -> (f64, f64) {
    mean_se(&batch.column(i))
}

/// Sample covariance of coordinates `i`, `j` and its asymptotic standard error.
pub fn empirical_covariance(batch: &SampleBatch, i: usize, j: usize) -> (f64, f64) {
    let (xi, xj) = (batch.column(i), batch.column(j));
    let m = batch.m as f64;
    let (mi, mj) = (pairwise_sum(&xi) / m, pairwise_sum(&xj) / m);
    let prod: Vec<f64> = xi
        .iter()
        .zip(&xj)
        .map(|(a, b)| (a - mi) * (b - mj))
        .collect();
    let (c, se) = mean_se(&prod);
    (c * m / (m - 1.0), se)
}

/// Two-sample Kolmogorov–Smirnov statistic sup |F₁ − F₂|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    d
}

/// Asymptotic KS critical value at level `alpha`.
pub fn ks_critical(alpha: f64, m1: usize, m2: usize) -> f64 {
    let (a, b) = (m1 as f64, m2 as f64);
    (-(alpha / 2.0).ln() / 2.0).sqrt() * ((a + b) / (a * b)).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub left: (usize, usize),
    pub right: usize,
    pub ks: Vec<f64>,
    pub max_ks: f64,
    pub critical: f64,
    pub level: f64,
    pub consistent: bool,
}

/// Level of the KS comparison before the Bonferroni split across coordinates.
pub const KS_LEVEL: f64 = 1e-3;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Compares θ_{k₁/2} + θ'_{k₂/2} against θ_{k/2} coordinatewise. With
/// k = k₁ + k₂ the two sides have the same law.
pub fn decomposition_check(
    g: &KernelMatrix,
    left: (usize, usize),
    right: usize,
    m: usize,
    seed: u64,
) -> Result<DecompositionReport> {
    let a = sample_gaussian_square(g, left.0, m, splitmix(seed))?;
    let b = sample_gaussian_square(g, left.1, m, splitmix(seed ^ 1))?;
    let c = sample_gaussian_square(g, right, m, splitmix(seed ^ 2))?;
    let sum = a.add(&b)?;
    let ks: Vec<f64> = (0..g.n())
        .map(|i| ks_statistic(&sum.column(i), &c.column(i)))
        .collect();
    let max_ks = ks.iter().cloned().fold(0.0, f64::max);
    let level = KS_LEVEL / g.n() as f64;
    let critical = ks_critical(level, m, m);
    Ok(DecompositionReport {
        left,
        right,
        ks,
        max_ks,
        critical,
        level,
        consistent: max_ks <= critical,
    })
}
