//! Command-line front end. Every option can come from a JSON config file
//! (`--config`) or from a flag of the same name; flags win.
//!
//! Exit codes: 0 success or certified, 1 refuted or a failed fixture,
//! 2 invalid input or a numerical error, 3 inconclusive.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::existence::{certify, default_r_grid, CertifySettings, DEFAULT_TOL};
use crate::fixtures::{format_table, run_fixtures};
use crate::levy::{
    fbmq_kernel, kernel_matrix, perturbed_fbm_kernel, u_killed, u_t0, KernelPair, LevyExponent,
    QuadratureSettings, TailMode,
};
use crate::matrix::{KernelMatrix, SquareMatrix};
use crate::metric::{
    default_radii, distance_table, entropy_profile, triangle_check, FiniteMeasure,
};
use crate::permanent::{
    moment_numdiff_oracle, moment_of_order, BetaOrder, MomentConvention, MultiIndex,
};
use crate::sampler::{sample_bivariate, sample_gaussian_square, sample_univariate};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PERMANENTAL_OUT";
/// Used when neither `out_dir` nor the environment variable is set.
pub const DEFAULT_OUT_DIR: &str = "permanental-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Check,
    Kernel,
    Metric,
    Sample,
    Moments,
    Fixtures,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Closed-form FBMQ kernel.
    Fbmq,
    /// Killed-at-zero potential of the asymmetric stable process (quadrature).
    Stable,
    /// Killed-at-zero potential of the symmetric stable process (quadrature).
    Symmetric,
    /// 1-potential-type kernel of Brownian motion killed at rate `killrate`.
    Brownian,
    /// Exponentially killed potential of the asymmetric stable process.
    Killed,
    /// Perturbed fractional Brownian covariance.
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Gaussian,
    Univariate,
    Bivariate,
}

/// Effective configuration. Field names are the config-file keys and, with
/// `_` replaced by `-`, the flag names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Parser)]
#[serde(deny_unknown_fields, default)]
#[command(
    name = "permanental",
    version,
    about = "Permanental vectors: existence checks, kernels, metrics and sampling"
)]
pub struct RunConfig {
    /// Subcommand to run.
    #[arg(value_enum)]
    pub command: Option<CommandKind>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Kernel matrix file (JSON or CSV).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<KernelFamily>,
    /// Comma-separated evaluation points.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub points: Option<Vec<f64>>,
    /// Evaluation grid `start:step:end`, inclusive.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub skew: Option<f64>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub killrate: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_k: Option<usize>,
    #[arg(long)]
    pub sweep_budget: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub copies: Option<usize>,
    #[arg(long, value_enum)]
    pub sample_method: Option<SampleKind>,
    /// Finite-difference step for the moment oracle.
    #[arg(long)]
    pub step: Option<f64>,
    /// Largest total order in the moments table.
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Comma-separated measure weights for the entropy integrals.
    #[arg(long, value_delimiter = ',')]
    pub measure: Option<Vec<f64>>,
    #[arg(long)]
    pub quad_abs_tol: Option<f64>,
    #[arg(long)]
    pub quad_rel_tol: Option<f64>,
    #[arg(long)]
    pub quad_cutoff: Option<f64>,
    #[arg(long, value_enum)]
    pub tail_mode: Option<TailModeArg>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TailModeArg {
    Oscillatory,
    PowerBound,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    /// File values overlaid by flag values.
    pub fn merged(flags: RunConfig) -> Result<RunConfig> {
        let mut cfg = match &flags.config {
            Some(p) => serde_json::from_str::<RunConfig>(&fs::read_to_string(p)?)?,
            None => RunConfig::default(),
        };
        overlay!(cfg, flags; command, matrix, family, points, grid, alpha, skew, scale, killrate,
            eps, beta, tol, max_k, sweep_budget, seed, m, copies, sample_method, step, max_order,
            measure, quad_abs_tol, quad_rel_tol, quad_cutoff, tail_mode, out_dir, threads);
        cfg.config = None;
        Ok(cfg)
    }

    /// SHA-256 over the canonical JSON of the settings that affect results,
    /// plus the bytes of the matrix file when one is given.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = None;
        c.threads = None;
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&c)?);
        if let Some(p) = &self.matrix {
            h.update(fs::read(p)?);
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    fn beta(&self) -> Result<BetaOrder> {
        BetaOrder::new(self.beta.unwrap_or(0.5))
    }

    fn quadrature(&self) -> QuadratureSettings {
        let d = QuadratureSettings::default();
        QuadratureSettings {
            abs_tol: self.quad_abs_tol.unwrap_or(d.abs_tol),
            rel_tol: self.quad_rel_tol.unwrap_or(d.rel_tol),
            cutoff: self.quad_cutoff.unwrap_or(d.cutoff),
            tail: match self.tail_mode {
                Some(TailModeArg::PowerBound) => TailMode::PowerBound,
                _ => TailMode::Oscillatory,
            },
            ..d
        }
    }

    fn eval_points(&self) -> Result<Vec<f64>> {
        match (&self.points, &self.grid) {
            (Some(_), Some(_)) => Err(Error::InvalidInput("give either points or grid".into())),
            (Some(p), None) => Ok(p.clone()),
            (None, Some(g)) => parse_grid(g),
            (None, None) => Err(Error::InvalidInput("a family needs points or grid".into())),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.command.is_none() {
            return Err(Error::InvalidInput("no command given".into()));
        }
        if self.matrix.is_some() && self.family.is_some() {
            return Err(Error::InvalidInput(
                "exactly one kernel source: matrix or family".into(),
            ));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0) {
                return Err(Error::InvalidInput(format!("beta must be > 0, got {b}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidInput("threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// `start:step:end`, inclusive of `end` when it lies on the lattice.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::InvalidInput(format!("grid must be start:step:end, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (a, h, b) = (v[0], v[1], v[2]);
    if !(h > 0.0) || b < a || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    let n = ((b - a) / h + 1e-9).floor() as usize + 1;
    if n > 100_000 {
        return Err(Error::InvalidInput(format!("grid has {n} points")));
    }
    Ok((0..n).map(|i| a + i as f64 * h).collect())
}

struct Family {
    kind: KernelFamily,
    psi: Option<LevyExponent>,
    cfg: RunConfig,
    q: QuadratureSettings,
}

impl Family {
    fn new(cfg: &RunConfig, kind: KernelFamily) -> Result<Self> {
        let alpha = cfg.alpha.unwrap_or(0.5);
        let skew = cfg.skew.unwrap_or(0.0);
        let scale = cfg.scale.unwrap_or(1.0);
        let psi = match kind {
            KernelFamily::Stable | KernelFamily::Killed => {
                Some(LevyExponent::asymmetric_stable(alpha, skew, scale)?)
            }
            KernelFamily::Symmetric => Some(LevyExponent::symmetric_stable(alpha, scale)?),
            KernelFamily::Brownian => Some(LevyExponent::brownian()),
            KernelFamily::Fbmq | KernelFamily::Perturbed => None,
        };
        Ok(Self {
            kind,
            psi,
            cfg: cfg.clone(),
            q: cfg.quadrature(),
        })
    }

    fn pair(&self, x: f64, y: f64) -> Result<KernelPair> {
        let c = &self.cfg;
        let alpha = c.alpha.unwrap_or(0.5);
        match self.kind {
            KernelFamily::Fbmq => fbmq_kernel(alpha, c.skew.unwrap_or(0.0), x, y),
            KernelFamily::Stable | KernelFamily::Symmetric => {
                u_t0(self.psi.as_ref().expect("exponent"), x, y, &self.q)
            }
            KernelFamily::Brownian | KernelFamily::Killed => u_killed(
                self.psi.as_ref().expect("exponent"),
                c.killrate.unwrap_or(1.0),
                x,
                y,
                &self.q,
            ),
            KernelFamily::Perturbed => {
                let eps = c.eps.unwrap_or(0.0);
                let a = c.alpha.unwrap_or(1.0);
                Ok(KernelPair::from_values(
                    perturbed_fbm_kernel(a, eps, x, y)?,
                    perturbed_fbm_kernel(a, eps, y, x)?,
                ))
            }
        }
    }
}

fn load_kernel(cfg: &RunConfig) -> Result<KernelMatrix> {
    match (&cfg.matrix, cfg.family) {
        (Some(p), None) => Ok(KernelMatrix::new(SquareMatrix::read(p)?)),
        (None, Some(kind)) => {
            let fam = Family::new(cfg, kind)?;
            let pts = cfg.eval_points()?;
            Ok(KernelMatrix::new(kernel_matrix(&pts, |x, y| {
                Ok(fam.pair(x, y)?.u_xy)
            })?))
        }
        _ => Err(Error::InvalidInput(
            "exactly one kernel source: matrix or family".into(),
        )),
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, bytes)?;
    Ok(p)
}

fn csv_with_hash(hash: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(buf, "# config_hash={hash}")?;
    body(&mut buf)?;
    Ok(buf)
}

fn json_with_hash<T: Serialize>(hash: &str, value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_value(value)?;
    if let serde_json::Value::Object(m) = &mut v {
        m.insert("config_hash".into(), hash.into());
    }
    let mut out = serde_json::to_vec_pretty(&v)?;
    out.push(b'\n');
    Ok(out)
}

/// Outcome of a run: exit code and files written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Executes a merged configuration.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let threads = cfg.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &RunConfig) -> Result<RunOutcome> {
    let hash = cfg.hash()?;
    let dir = cfg.out_dir();
    let mut files = Vec::new();
    let command = cfg.command.expect("validated");
    let (exit_code, summary) = match command {
        CommandKind::Check => {
            let g = load_kernel(cfg)?;
            let settings = CertifySettings {
                r_grid: default_r_grid(),
                max_total: cfg.max_k.unwrap_or(4),
                sweep_budget: cfg.sweep_budget,
                tol: cfg.tol.unwrap_or(DEFAULT_TOL),
                ..CertifySettings::default()
            };
            let rep = certify(&g, cfg.beta()?, &settings)?;
            files.push(write_file(
                &dir,
                "existence_report.json",
                &json_with_hash(&hash, &rep)?,
            )?);
            let v = serde_json::to_value(rep.verdict)?;
            (
                rep.verdict.exit_code(),
                format!("verdict {}", v.as_str().unwrap_or("?")),
            )
        }
        CommandKind::Kernel => {
            let kind = cfg
                .family
                .ok_or_else(|| Error::InvalidInput("kernel needs a family".into()))?;
            let fam = Family::new(cfg, kind)?;
            let pts = cfg.eval_points()?;
            let pairs: Vec<(f64, f64)> = pts
                .iter()
                .flat_map(|&x| pts.iter().map(move |&y| (x, y)))
                .collect();
            use rayon::prelude::*;
            let vals: Vec<KernelPair> = pairs
                .par_iter()
                .map(|&(x, y)| fam.pair(x, y))
                .collect::<Result<_>>()?;
            let bytes = csv_with_hash(&hash, |buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["x", "y", "R", "H", "u_xy", "u_yx"])?;
                for ((x, y), k) in pairs.iter().zip(&vals) {
                    w.write_record([x, y, &k.r, &k.h, &k.u_xy, &k.u_yx].map(|v| v.to_string()))?;
                }
                w.flush()?;
                Ok(())
            })?;
            files.push(write_file(&dir, "kernel.csv", &bytes)?);
            (0, format!("{} kernel rows", vals.len()))
        }
        CommandKind::Metric => {
            let g = load_kernel(cfg)?;
            let d = distance_table(&g)?;
            let mu = match &cfg.measure {
                Some(w) => FiniteMeasure::new(w.clone())?,
                None => FiniteMeasure::uniform(g.n()),
            };
            let prof = entropy_profile(&d, &mu, &default_radii(&d))?;
            let viol = triangle_check(&d, cfg.tol.unwrap_or(DEFAULT_TOL));
            files.push(write_file(
                &dir,
                "distances.csv",
                &csv_with_hash(&hash, |b| d.write_csv(b))?,
            )?);
            files.push(write_file(
                &dir,
                "entropy.csv",
                &csv_with_hash(&hash, |b| prof.write_csv(b))?,
            )?);
            #[derive(Serialize)]
            struct MetricReport<'a> {
                n: usize,
                diameter: f64,
                triangle_violations: &'a [(usize, usize, usize)],
                flags: &'a crate::metric::EntropyFlags,
            }
            let rep = MetricReport {
                n: d.n(),
                diameter: prof.diameter,
                triangle_violations: &viol,
                flags: &prof.flags,
            };
            files.push(write_file(
                &dir,
                "metric_report.json",
                &json_with_hash(&hash, &rep)?,
            )?);
            (0, format!("{} triangle violations", viol.len()))
        }
        CommandKind::Sample => {
            let m = cfg.m.unwrap_or(10_000);
            let seed = cfg.seed.unwrap_or(0);
            let copies = cfg.copies.unwrap_or(1);
            let batch = match cfg.sample_method.unwrap_or(SampleKind::Gaussian) {
                SampleKind::Gaussian => {
                    sample_gaussian_square(&load_kernel(cfg)?, copies, m, seed)?
                }
                SampleKind::Bivariate => sample_bivariate(&load_kernel(cfg)?, copies, m, seed)?,
                SampleKind::Univariate => {
                    let g = load_kernel(cfg)?;
                    if g.n() != 1 {
                        return Err(Error::DimensionMismatch {
                            expected: 1,
                            got: g.n(),
                        });
                    }
                    sample_univariate(g.get(0, 0), cfg.beta()?, m, seed)?
                }
            };
            files.push(write_file(
                &dir,
                "samples.csv",
                &csv_with_hash(&hash, |b| batch.write_csv(b))?,
            )?);
            let side = batch.sidecar(Some(hash.clone()));
            let mut bytes = serde_json::to_vec_pretty(&side)?;
            bytes.push(b'\n');
            files.push(write_file(&dir, "samples.json", &bytes)?);
            (0, format!("{m} samples"))
        }
        CommandKind::Moments => {
            let g = load_kernel(cfg)?;
            let beta = cfg.beta()?;
            let step = cfg.step.unwrap_or(1e-3);
            #[derive(Serialize)]
            struct Row {
                order: Vec<usize>,
                vere_jones: f64,
                half_scaled: f64,
                numdiff: f64,
                abs_diff: f64,
            }
            let mut rows = Vec::new();
            for k in MultiIndex::up_to(g.n(), cfg.max_order.unwrap_or(2)) {
                if k.as_slice().iter().any(|&v| v > 4) {
                    continue;
                }
                let vj = moment_of_order(g.matrix(), beta, &k, MomentConvention::VereJones)?;
                let hs = moment_of_order(g.matrix(), beta, &k, MomentConvention::HalfScaled)?;
                let nd = moment_numdiff_oracle(g.matrix(), beta, &k, step)?;
                rows.push(Row {
                    order: k.as_slice().to_vec(),
                    vere_jones: vj,
                    half_scaled: hs,
                    numdiff: nd,
                    abs_diff: (vj - nd).abs(),
                });
            }
            #[derive(Serialize)]
            struct Table {
                beta: f64,
                step: f64,
                convention: MomentConvention,
                rows: Vec<Row>,
            }
            let n_rows = rows.len();
            let t = Table {
                beta: beta.value(),
                step,
                convention: MomentConvention::VereJones,
                rows,
            };
            files.push(write_file(
                &dir,
                "moments.json",
                &json_with_hash(&hash, &t)?,
            )?);
            (0, format!("{n_rows} moment rows"))
        }
        CommandKind::Fixtures => {
            let res = run_fixtures(cfg.seed.unwrap_or(0))?;
            let table = format_table(&res);
            #[derive(Serialize)]
            struct Fx<'a> {
                fixtures: &'a [crate::fixtures::FixtureResult],
            }
            files.push(write_file(
                &dir,
                "fixtures.json",
                &json_with_hash(&hash, &Fx { fixtures: &res })?,
            )?);
            let failed = res.iter().filter(|r| !r.pass).count();
            (i32::from(failed > 0), table)
        }
    };
    Ok(RunOutcome {
        exit_code,
        files,
        summary,
    })
}

/// Parses `args`, runs, prints a summary, returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let flags = match RunConfig::try_parse_from(args) {
        Ok(f) => f,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = RunConfig::merged(flags).and_then(|cfg| run(&cfg));
    match result {
        Ok(out) => {
            print!("{}", out.summary);
            if !out.summary.ends_with('\n') {
                println!();
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
