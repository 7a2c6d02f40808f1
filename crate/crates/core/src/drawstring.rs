//! Inputs of the tube theorem and the dispatch to the two constructions.

use crate::cutoff::{self, CutoffParams};
use crate::error::{Error, Result};
use crate::gluing::{self, GlueParams};
use crate::radial_metric::RadialProfile;
use serde::{Deserialize, Serialize};

/// Which construction builds the profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Four pieces glued with `C^{1,1}` matching, then smoothed.
    A,
    /// One explicit formula with cutoffs.
    B,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Method::A),
            "B" | "b" => Ok(Method::B),
            _ => Err(Error::domain("method", format!("expected A or B, got {s:?}"))),
        }
    }
}

/// `(k, ε, δ, r0)` plus the construction to use.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DrawstringSpec {
    pub k: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub r0: f64,
    pub method: Method,
    /// Optional extra cap on `r1`, so that members of a family can share a
    /// common outer radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1_max: Option<f64>,
}

impl DrawstringSpec {
    pub fn new(k: f64, epsilon: f64, delta: f64, r0: f64, method: Method) -> Self {
        DrawstringSpec { k, epsilon, delta, r0, method, r1_max: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.k.is_finite() {
            return Err(Error::domain("k", "must be finite"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::domain("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::domain("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::domain("r0", format!("must be positive, got {}", self.r0)));
        }
        if self.k > 0.0 && self.r0 >= std::f64::consts::FRAC_PI_2 / self.k.sqrt() {
            return Err(Error::domain("r0", "must stay below the equator of the model sphere"));
        }
        if let Some(m) = self.r1_max {
            if !(m > 0.0) {
                return Err(Error::domain("r1_max", "must be positive"));
            }
        }
        Ok(())
    }
}

/// A named inequality a parameter choice was certified against.
#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub holds: bool,
    /// Signed slack; nonnegative when the inequality holds.
    pub margin: f64,
}

impl ParamCheck {
    pub fn new(name: impl Into<String>, margin: f64) -> Self {
        ParamCheck { name: name.into(), holds: margin >= 0.0, margin }
    }

    /// Check of `lhs <= rhs` with the margin relative to `rhs`.
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let m = if rhs != 0.0 { (rhs - lhs) / rhs.abs() } else { -lhs };
        ParamCheck { name: name.into(), holds: lhs <= rhs, margin: m }
    }
}

/// Constants resolved by either construction.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "method")]
pub enum SolvedParams {
    A(GlueParams),
    B(CutoffParams),
}

impl SolvedParams {
    pub fn r1(&self) -> f64 {
        match self {
            SolvedParams::A(p) => p.r1,
            SolvedParams::B(p) => p.r1,
        }
    }

    /// Inequalities the constants were certified against.
    pub fn checks(&self) -> &[ParamCheck] {
        match self {
            SolvedParams::A(p) => &p.checks,
            SolvedParams::B(p) => &p.checks,
        }
    }
}

/// A built profile together with its constants.
#[derive(Clone, Debug)]
pub struct Drawstring {
    pub spec: DrawstringSpec,
    pub profile: RadialProfile,
    pub params: SolvedParams,
}

/// Build by the method named in `spec.method`.
pub fn build(spec: &DrawstringSpec) -> Result<Drawstring> {
    spec.validate()?;
    let (profile, params) = match spec.method {
        Method::A => {
            let (p, g) = gluing::build_drawstring_a(spec)?;
            (p, SolvedParams::A(g))
        }
        Method::B => {
            let (p, c) = cutoff::build_drawstring_b(spec)?;
            (p, SolvedParams::B(c))
        }
    };
    Ok(Drawstring { spec: *spec, profile, params })
}
