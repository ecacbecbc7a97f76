use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Subclass of Gibbs-type prior with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Variant {
    Dp { theta: f64 },
    Py { alpha: f64, theta: f64 },
    Ngg { alpha: f64, beta: f64 },
    Nig { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dp,
    Py,
    Ngg,
    Nig,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dp" => Ok(Family::Dp),
            "py" => Ok(Family::Py),
            "ngg" => Ok(Family::Ngg),
            "nig" => Ok(Family::Nig),
            other => Err(Error::Parse(format!("unknown model family `{other}` (dp, py, ngg, nig)"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Dp => "dp",
            Family::Py => "py",
            Family::Ngg => "ngg",
            Family::Nig => "nig",
        })
    }
}

/// Monte-Carlo settings for weight tables without a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { samples: 100_000, seed: 0x5eed_1b9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsModel {
    pub variant: Variant,
    #[serde(default)]
    pub mc: McConfig,
}

impl GibbsModel {
    pub fn new(variant: Variant) -> Result<Self> {
        let model = GibbsModel { variant, mc: McConfig::default() };
        model.validate()?;
        Ok(model)
    }

    pub fn dp(theta: f64) -> Result<Self> {
        Self::new(Variant::Dp { theta })
    }

    pub fn py(alpha: f64, theta: f64) -> Result<Self> {
        Self::new(Variant::Py { alpha, theta })
    }

    pub fn ngg(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Variant::Ngg { alpha, beta })
    }

    pub fn nig(beta: f64) -> Result<Self> {
        Self::new(Variant::Nig { beta })
    }

    /// Builds a model of `family` from a discount and a free parameter
    /// (`θ` for DP/PY, `β` for NGG/NIG); `alpha` is ignored where it is fixed.
    pub fn from_family(family: Family, alpha: f64, free: f64) -> Result<Self> {
        match family {
            Family::Dp => Self::dp(free),
            Family::Py => Self::py(alpha, free),
            Family::Ngg => Self::ngg(alpha, free),
            Family::Nig => Self::nig(free),
        }
    }

    pub fn with_mc(mut self, mc: McConfig) -> Self {
        self.mc = mc;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.variant {
            Variant::Dp { theta } => theta > 0.0 && theta.is_finite(),
            Variant::Py { alpha, theta } => {
                alpha > 0.0 && alpha < 1.0 && theta > -alpha && theta.is_finite()
            }
            Variant::Ngg { alpha, beta } => alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta.is_finite(),
            Variant::Nig { beta } => beta > 0.0 && beta.is_finite(),
        };
        if !ok {
            return Err(Error::domain(format!("invalid model parameters: {:?}", self.variant)));
        }
        if !self.is_closed_form() && self.mc.samples == 0 {
            return Err(Error::domain("Monte-Carlo sample count must be positive"));
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        match self.variant {
            Variant::Dp { .. } => Family::Dp,
            Variant::Py { .. } => Family::Py,
            Variant::Ngg { .. } => Family::Ngg,
            Variant::Nig { .. } => Family::Nig,
        }
    }

    /// Discount parameter; 0 for DP, 1/2 for NIG.
    pub fn alpha(&self) -> f64 {
        match self.variant {
            Variant::Dp { .. } => 0.0,
            Variant::Py { alpha, .. } | Variant::Ngg { alpha, .. } => alpha,
            Variant::Nig { .. } => 0.5,
        }
    }

    /// `θ` for DP/PY, `β` for NGG/NIG.
    pub fn free_parameter(&self) -> f64 {
        match self.variant {
            Variant::Dp { theta } | Variant::Py { theta, .. } => theta,
            Variant::Ngg { beta, .. } | Variant::Nig { beta } => beta,
        }
    }

    /// Same family and Monte-Carlo settings with new parameters.
    pub fn with_parameters(&self, alpha: f64, free: f64) -> Result<Self> {
        Ok(Self::from_family(self.family(), alpha, free)?.with_mc(self.mc))
    }

    /// Whether `α` is a free parameter of the family.
    pub fn has_free_alpha(&self) -> bool {
        matches!(self.variant, Variant::Py { .. } | Variant::Ngg { .. })
    }

    /// True for DP and PY, whose weights and primitives have closed forms.
    pub fn is_closed_form(&self) -> bool {
        matches!(self.variant, Variant::Dp { .. } | Variant::Py { .. })
    }

    /// `(α, θ)` of the closed-form families.
    pub fn closed_form_parameters(&self) -> Option<(f64, f64)> {
        match self.variant {
            Variant::Dp { theta } => Some((0.0, theta)),
            Variant::Py { alpha, theta } => Some((alpha, theta)),
            _ => None,
        }
    }

    /// `(α, β)` of the generalized gamma families; NIG maps to `(1/2, β)`.
    pub fn ngg_parameters(&self) -> Option<(f64, f64)> {
        match self.variant {
            Variant::Ngg { alpha, beta } => Some((alpha, beta)),
            Variant::Nig { beta } => Some((0.5, beta)),
            _ => None,
        }
    }
}

impl fmt::Display for GibbsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.variant {
            Variant::Dp { theta } => write!(f, "DP(theta={theta})"),
            Variant::Py { alpha, theta } => write!(f, "PY(alpha={alpha}, theta={theta})"),
            Variant::Ngg { alpha, beta } => write!(f, "NGG(alpha={alpha}, beta={beta})"),
            Variant::Nig { beta } => write!(f, "NIG(beta={beta})"),
        }
    }
}
