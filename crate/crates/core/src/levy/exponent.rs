use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::logspace;

/// Parameters of a built-in exponent family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LevyFamily {
    /// c|λ|^{α+1}(1 − i·skew·sign(λ)·tan((α+1)π/2))
    AsymmetricStable {
        alpha: f64,
        skew: f64,
        scale: f64,
    },
    /// c|λ|^{α+1}
    SymmetricStable {
        alpha: f64,
        scale: f64,
    },
    /// λ²/2
    Brownian,
    Custom,
}

type PsiFn = dyn Fn(f64) -> Complex64 + Send + Sync;

/// Characteristic exponent ψ with E e^{iλX_t} = e^{−tψ(λ)}.
#[derive(Clone)]
pub struct LevyExponent {
    family: LevyFamily,
    psi: Arc<PsiFn>,
}

impl fmt::Debug for LevyExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyExponent")
            .field("family", &self.family)
            .finish()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

impl LevyExponent {
    pub fn asymmetric_stable(alpha: f64, skew: f64, scale: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(-1.0..=1.0).contains(&skew) || !(scale > 0.0) {
            return Err(Error::Domain(format!(
                "need skew in [-1, 1] and scale > 0, got {skew}, {scale}"
            )));
        }
        let a = alpha + 1.0;
        let t = (a * std::f64::consts::FRAC_PI_2).tan();
        Ok(Self {
            family: LevyFamily::AsymmetricStable { alpha, skew, scale },
            psi: Arc::new(move |l: f64| {
                if l == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let m = scale * l.abs().powf(a);
                Complex64::new(m, -m * skew * l.signum() * t)
            }),
        })
    }

    pub fn symmetric_stable(alpha: f64, scale: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(scale > 0.0) {
            return Err(Error::Domain(format!("scale must be > 0, got {scale}")));
        }
        let a = alpha + 1.0;
        Ok(Self {
            family: LevyFamily::SymmetricStable { alpha, scale },
            psi: Arc::new(move |l: f64| Complex64::new(scale * l.abs().powf(a), 0.0)),
        })
    }

    pub fn brownian() -> Self {
        Self {
            family: LevyFamily::Brownian,
            psi: Arc::new(|l: f64| Complex64::new(0.5 * l * l, 0.0)),
        }
    }

    /// Wraps a user exponent after checking ψ(−λ) = conj ψ(λ) and Re ψ(λ) > 0
    /// on a log-spaced sample of λ.
    pub fn custom(psi: impl Fn(f64) -> Complex64 + Send + Sync + 'static) -> Result<Self> {
        for l in logspace(1e-3, 1e3, 25) {
            let (p, m) = (psi(l), psi(-l));
            if (m - p.conj()).norm() > 1e-10 * (1.0 + p.norm()) {
                return Err(Error::Domain(format!(
                    "psi(-{l}) is not the conjugate of psi({l})"
                )));
            }
            if !(p.re > 0.0) {
                return Err(Error::Domain(format!(
                    "Re psi({l}) = {} is not positive",
                    p.re
                )));
            }
        }
        Ok(Self {
            family: LevyFamily::Custom,
            psi: Arc::new(psi),
        })
    }

    pub fn family(&self) -> LevyFamily {
        self.family
    }

    pub fn eval(&self, lambda: f64) -> Complex64 {
        (self.psi)(lambda)
    }
}
