//! Baseline cumulative hazards `Λ0` for the two-parameter families.
//!
//! The model hazard is `τ γ t^(γ-1) λ0(t^γ)`, so the families only need to
//! supply `Λ0`, its first three derivatives and its inverse.

use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest argument accepted by the Gompertz baseline before `exp` overflows.
pub const GOMPERTZ_MAX_ARG: f64 = 700.0;

/// Baseline distribution of the transformed time `s = t^γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BaselineFamily {
    /// `Λ0(s) = s`
    #[default]
    Weibull,
    /// `Λ0(s) = exp(s) - 1`
    Gompertz,
    /// `Λ0(s) = log(1 + s)`
    LogLogistic,
}

/// Baseline hazard and its first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardDerivs {
    pub hazard: f64,
    pub d1: f64,
    pub d2: f64,
}

fn check_arg(s: f64) -> Result<()> {
    if !s.is_finite() || s < 0.0 {
        return Err(Error::Domain { what: "baseline argument", value: s });
    }
    Ok(())
}

impl BaselineFamily {
    pub const ALL: [BaselineFamily; 3] = [Self::Weibull, Self::Gompertz, Self::LogLogistic];

    pub fn name(self) -> &'static str {
        match self {
            Self::Weibull => "weibull",
            Self::Gompertz => "gompertz",
            Self::LogLogistic => "loglogistic",
        }
    }

    /// `Λ0(s)` for `s >= 0`.
    pub fn cumulative(self, s: f64) -> Result<f64> {
        check_arg(s)?;
        Ok(match self {
            Self::Weibull => s,
            Self::Gompertz => {
                if s > GOMPERTZ_MAX_ARG {
                    return Err(Error::Overflow(s));
                }
                s.exp_m1()
            }
            Self::LogLogistic => s.ln_1p(),
        })
    }

    /// `(λ0, λ0', λ0'')` at `s > 0`.
    pub fn hazard_derivs(self, s: f64) -> Result<HazardDerivs> {
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::Domain { what: "baseline argument", value: s });
        }
        Ok(match self {
            Self::Weibull => HazardDerivs { hazard: 1.0, d1: 0.0, d2: 0.0 },
            Self::Gompertz => {
                if s > GOMPERTZ_MAX_ARG {
                    return Err(Error::Overflow(s));
                }
                let e = s.exp();
                HazardDerivs { hazard: e, d1: e, d2: e }
            }
            Self::LogLogistic => {
                let r = 1.0 / (1.0 + s);
                HazardDerivs { hazard: r, d1: -r * r, d2: 2.0 * r * r * r }
            }
        })
    }

    /// `log λ0(s)`, evaluated without forming `λ0` where that would lose precision.
    pub fn log_hazard(self, s: f64) -> Result<f64> {
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::Domain { what: "baseline argument", value: s });
        }
        Ok(match self {
            Self::Weibull => 0.0,
            Self::Gompertz => {
                if s > GOMPERTZ_MAX_ARG {
                    return Err(Error::Overflow(s));
                }
                s
            }
            Self::LogLogistic => -s.ln_1p(),
        })
    }

    /// `Λ0⁻¹(u)` for `u >= 0`.
    pub fn inverse_cumulative(self, u: f64) -> Result<f64> {
        if u.is_nan() || u < 0.0 {
            return Err(Error::Domain { what: "cumulative hazard", value: u });
        }
        Ok(match self {
            Self::Weibull => u,
            Self::Gompertz => u.ln_1p(),
            Self::LogLogistic => u.exp_m1(),
        })
    }
}

impl fmt::Display for BaselineFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weibull" => Ok(Self::Weibull),
            "gompertz" => Ok(Self::Gompertz),
            "loglogistic" | "log-logistic" => Ok(Self::LogLogistic),
            other => Err(Error::InvalidData(alloc::format!("unknown baseline family `{other}`"))),
        }
    }
}
