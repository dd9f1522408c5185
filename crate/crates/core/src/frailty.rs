//! Frailty structures and their dispersion parameters.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounds on `log σ` in the unconstrained outer search.
pub const LOG_SIGMA_MIN: f64 = -20.0;
pub const LOG_SIGMA_MAX: f64 = 10.0;
/// `|ρ|` is capped here; reaching the cap is reported as a boundary estimate.
pub const RHO_CAP: f64 = 1.0 - 1e-6;

/// Which random effects enter the scale and shape predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    /// No frailty.
    #[serde(rename = "NF")]
    None,
    /// Scale frailty only.
    #[serde(rename = "ScF")]
    Scale,
    /// Shape frailty only.
    #[serde(rename = "ShF")]
    Shape,
    /// Independent scale and shape frailties.
    #[serde(rename = "IF")]
    Independent,
    /// Shape frailty proportional to the scale frailty, `v_α = φ v_β`.
    #[serde(rename = "CF")]
    Common,
    /// Correlated bivariate normal pair.
    #[serde(rename = "BVNF")]
    Bivariate,
}

impl Structure {
    pub const ALL: [Structure; 6] =
        [Self::None, Self::Bivariate, Self::Independent, Self::Common, Self::Scale, Self::Shape];

    pub fn code(self) -> &'static str {
        match self {
            Self::None => "NF",
            Self::Scale => "ScF",
            Self::Shape => "ShF",
            Self::Independent => "IF",
            Self::Common => "CF",
            Self::Bivariate => "BVNF",
        }
    }

    /// Number of dispersion parameters.
    pub fn df_r(self) -> usize {
        match self {
            Self::None => 0,
            Self::Scale | Self::Shape => 1,
            Self::Independent | Self::Common => 2,
            Self::Bivariate => 3,
        }
    }

    /// Whether `v_β` is a free parameter block.
    pub fn has_scale_block(self) -> bool {
        matches!(self, Self::Scale | Self::Independent | Self::Common | Self::Bivariate)
    }

    /// Whether `v_α` is a free parameter block.
    pub fn has_shape_block(self) -> bool {
        matches!(self, Self::Shape | Self::Independent | Self::Bivariate)
    }

    /// Number of free random-effect vectors of length `q`.
    pub fn blocks(self) -> usize {
        self.has_scale_block() as usize + self.has_shape_block() as usize
    }

    /// Whether the shape predictor carries a random effect at all.
    pub fn shape_varies(self) -> bool {
        self.has_shape_block() || self == Self::Common
    }

    /// Names of the dispersion parameters, in the order used everywhere else.
    pub fn dispersion_names(self) -> &'static [&'static str] {
        match self {
            Self::None => &[],
            Self::Scale => &["sigma_beta"],
            Self::Shape => &["sigma_alpha"],
            Self::Independent => &["sigma_beta", "sigma_alpha"],
            Self::Common => &["sigma_beta", "phi"],
            Self::Bivariate => &["sigma_beta", "sigma_alpha", "rho"],
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Self::ALL
            .into_iter()
            .find(|st| st.code().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Structure(alloc::format!("unknown frailty structure `{t}`")))
    }
}

/// A frailty structure together with its dispersion values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "structure")]
pub enum FrailtySpec {
    #[serde(rename = "NF")]
    None,
    #[serde(rename = "ScF")]
    Scale { sigma_beta: f64 },
    #[serde(rename = "ShF")]
    Shape { sigma_alpha: f64 },
    #[serde(rename = "IF")]
    Independent { sigma_beta: f64, sigma_alpha: f64 },
    #[serde(rename = "CF")]
    Common { sigma_beta: f64, phi: f64 },
    #[serde(rename = "BVNF")]
    Bivariate { sigma_beta: f64, sigma_alpha: f64, rho: f64 },
}

/// Per-cluster normal density pieces: `ℓ2` constant and the 2×2 precision.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Precision {
    pub log_norm: f64,
    pub bb: f64,
    pub aa: f64,
    pub ba: f64,
}

impl FrailtySpec {
    pub fn structure(&self) -> Structure {
        match self {
            Self::None => Structure::None,
            Self::Scale { .. } => Structure::Scale,
            Self::Shape { .. } => Structure::Shape,
            Self::Independent { .. } => Structure::Independent,
            Self::Common { .. } => Structure::Common,
            Self::Bivariate { .. } => Structure::Bivariate,
        }
    }

    /// Starting dispersion: every carried parameter at 0.1.
    pub fn initial(structure: Structure) -> Self {
        Self::from_values(structure, &[0.1, 0.1, 0.1]).expect("three values cover every structure")
    }

    /// Builds a spec from natural-scale values in [`Structure::dispersion_names`] order.
    pub fn from_values(structure: Structure, values: &[f64]) -> Result<Self> {
        if values.len() < structure.df_r() {
            return Err(Error::Dimension(alloc::format!(
                "{structure} needs {} dispersion values, got {}",
                structure.df_r(),
                values.len()
            )));
        }
        let spec = match structure {
            Structure::None => Self::None,
            Structure::Scale => Self::Scale { sigma_beta: values[0] },
            Structure::Shape => Self::Shape { sigma_alpha: values[0] },
            Structure::Independent => Self::Independent { sigma_beta: values[0], sigma_alpha: values[1] },
            Structure::Common => Self::Common { sigma_beta: values[0], phi: values[1] },
            Structure::Bivariate => Self::Bivariate { sigma_beta: values[0], sigma_alpha: values[1], rho: values[2] },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Natural-scale dispersion values in [`Structure::dispersion_names`] order.
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Self::None => vec![],
            Self::Scale { sigma_beta } => vec![sigma_beta],
            Self::Shape { sigma_alpha } => vec![sigma_alpha],
            Self::Independent { sigma_beta, sigma_alpha } => vec![sigma_beta, sigma_alpha],
            Self::Common { sigma_beta, phi } => vec![sigma_beta, phi],
            Self::Bivariate { sigma_beta, sigma_alpha, rho } => vec![sigma_beta, sigma_alpha, rho],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |what: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain { what, value: v })
            }
        };
        match *self {
            Self::None => Ok(()),
            Self::Scale { sigma_beta } => positive("sigma_beta", sigma_beta),
            Self::Shape { sigma_alpha } => positive("sigma_alpha", sigma_alpha),
            Self::Independent { sigma_beta, sigma_alpha } => {
                positive("sigma_beta", sigma_beta)?;
                positive("sigma_alpha", sigma_alpha)
            }
            Self::Common { sigma_beta, phi } => {
                positive("sigma_beta", sigma_beta)?;
                if phi.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Domain { what: "phi", value: phi })
                }
            }
            Self::Bivariate { sigma_beta, sigma_alpha, rho } => {
                positive("sigma_beta", sigma_beta)?;
                positive("sigma_alpha", sigma_alpha)?;
                if rho.is_finite() && rho.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::Domain { what: "rho", value: rho })
                }
            }
        }
    }

    /// `φ` for the common structure, zero otherwise.
    pub fn phi(&self) -> f64 {
        match *self {
            Self::Common { phi, .. } => phi,
            _ => 0.0,
        }
    }

    /// Unconstrained coordinates: `log σ`, `atanh ρ`, raw `φ`.
    pub fn to_unconstrained(&self) -> Vec<f64> {
        match *self {
            Self::None => vec![],
            Self::Scale { sigma_beta } => vec![sigma_beta.ln()],
            Self::Shape { sigma_alpha } => vec![sigma_alpha.ln()],
            Self::Independent { sigma_beta, sigma_alpha } => vec![sigma_beta.ln(), sigma_alpha.ln()],
            Self::Common { sigma_beta, phi } => vec![sigma_beta.ln(), phi],
            Self::Bivariate { sigma_beta, sigma_alpha, rho } => {
                vec![sigma_beta.ln(), sigma_alpha.ln(), rho.atanh()]
            }
        }
    }

    /// Inverse of [`to_unconstrained`](Self::to_unconstrained) with the boundary caps applied.
    /// The flag reports whether any coordinate was clamped.
    pub fn from_unconstrained(structure: Structure, u: &[f64]) -> Result<(Self, bool)> {
        if u.len() != structure.df_r() {
            return Err(Error::Dimension(alloc::format!(
                "{structure} has {} dispersion coordinates, got {}",
                structure.df_r(),
                u.len()
            )));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain { what: "dispersion coordinate", value: f64::NAN });
        }
        let mut clamped = false;
        let mut sigma = |x: f64| {
            let c = x.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX);
            clamped |= c != x;
            c.exp()
        };
        let spec = match structure {
            Structure::None => Self::None,
            Structure::Scale => Self::Scale { sigma_beta: sigma(u[0]) },
            Structure::Shape => Self::Shape { sigma_alpha: sigma(u[0]) },
            Structure::Independent => Self::Independent { sigma_beta: sigma(u[0]), sigma_alpha: sigma(u[1]) },
            Structure::Common => Self::Common { sigma_beta: sigma(u[0]), phi: u[1] },
            Structure::Bivariate => {
                let sb = sigma(u[0]);
                let sa = sigma(u[1]);
                let r = u[2].tanh();
                let rc = r.clamp(-RHO_CAP, RHO_CAP);
                clamped |= rc != r;
                Self::Bivariate { sigma_beta: sb, sigma_alpha: sa, rho: rc }
            }
        };
        Ok((spec, clamped))
    }

    /// Derivative of each natural-scale value with respect to its unconstrained coordinate.
    pub fn jacobian_diag(&self) -> Vec<f64> {
        match *self {
            Self::None => vec![],
            Self::Scale { sigma_beta } => vec![sigma_beta],
            Self::Shape { sigma_alpha } => vec![sigma_alpha],
            Self::Independent { sigma_beta, sigma_alpha } => vec![sigma_beta, sigma_alpha],
            Self::Common { sigma_beta, .. } => vec![sigma_beta, 1.0],
            Self::Bivariate { sigma_beta, sigma_alpha, rho } => vec![sigma_beta, sigma_alpha, 1.0 - rho * rho],
        }
    }

    pub(crate) fn precision(&self) -> Precision {
        let ln2pi = (2.0 * PI).ln();
        match *self {
            Self::None => Precision { log_norm: 0.0, bb: 0.0, aa: 0.0, ba: 0.0 },
            Self::Scale { sigma_beta } | Self::Common { sigma_beta, .. } => Precision {
                log_norm: -0.5 * ln2pi - sigma_beta.ln(),
                bb: 1.0 / (sigma_beta * sigma_beta),
                aa: 0.0,
                ba: 0.0,
            },
            Self::Shape { sigma_alpha } => Precision {
                log_norm: -0.5 * ln2pi - sigma_alpha.ln(),
                bb: 0.0,
                aa: 1.0 / (sigma_alpha * sigma_alpha),
                ba: 0.0,
            },
            Self::Independent { sigma_beta, sigma_alpha } => {
                Self::Bivariate { sigma_beta, sigma_alpha, rho: 0.0 }.precision()
            }
            Self::Bivariate { sigma_beta, sigma_alpha, rho } => {
                let one_m = 1.0 - rho * rho;
                Precision {
                    log_norm: -(ln2pi + sigma_beta.ln() + sigma_alpha.ln() + 0.5 * one_m.ln()),
                    bb: 1.0 / (one_m * sigma_beta * sigma_beta),
                    aa: 1.0 / (one_m * sigma_alpha * sigma_alpha),
                    ba: -rho / (one_m * sigma_beta * sigma_alpha),
                }
            }
        }
    }
}
