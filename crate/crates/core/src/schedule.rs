//! Warmness, the β factor, and burn-in / post-burn-in lengths for the
//! long-run, subsample and multi-start averaging schemes.
//!
//! All lengths are evaluated with `ln M` directly, never `M`, so large
//! dimensions do not overflow; rounding up happens once, at the end.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

/// `β = exp(−2(ε₁ + ε₂‖K‖²_J/2))`.
pub fn beta_factor(eps1: f64, eps2: f64, norm_kj_sq: f64) -> f64 {
    (-2.0 * (eps1 + eps2 * norm_kj_sq / 2.0)).exp()
}

/// `ln M` for the one-step-after-a-proper-move start:
/// `ln 3 + d·ln(120‖K‖²_J) + 3ε₁ + 2ε₂‖K‖²_J + 1`.
pub fn warmness_log_bound(dim: usize, norm_kj_sq: f64, eps1: f64, eps2: f64) -> Result<f64> {
    if dim == 0 {
        return arg("dimension must be at least 1");
    }
    if !(norm_kj_sq > 0.0) {
        return arg(format!("‖K‖²_J must be positive, got {norm_kj_sq}"));
    }
    if eps1 < 0.0 || eps2 < 0.0 {
        return arg("approximation errors must be nonnegative");
    }
    Ok(3f64.ln() + dim as f64 * (120.0 * norm_kj_sq).ln() + 3.0 * eps1 + 2.0 * eps2 * norm_kj_sq + 1.0)
}

/// Conductance lower bound for the Gaussian walk,
/// `(c/4)·β·sqrt(2/(πe))·min{h·sqrt(λ_min)/2, 1}` with `c = β/(3e)` and `h = σ/8`.
pub fn gaussian_walk_phi(beta: f64, sigma: f64, lambda_min: f64) -> f64 {
    let e = std::f64::consts::E;
    let pi = std::f64::consts::PI;
    let c = beta / (3.0 * e);
    let h = sigma / 8.0;
    c / 4.0 * beta * (2.0 / (pi * e)).sqrt() * (h * lambda_min.sqrt() / 2.0).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LongRun,
    Subsample,
    MultiStart,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::LongRun, Method::Subsample, Method::MultiStart];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::LongRun => "long_run",
            Method::Subsample => "subsample",
            Method::MultiStart => "multi_start",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long_run" | "lr" => Ok(Method::LongRun),
            "subsample" | "ss" => Ok(Method::Subsample),
            "multi_start" | "ms" => Ok(Method::MultiStart),
            other => arg(format!("unknown method {other:?}")),
        }
    }
}

/// Where the conductance value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiSource {
    #[default]
    User,
    /// Gaussian-walk lower bound from `σ`, `β` and `λ_min`.
    Theoretical,
    /// Autocovariance-decay proxy; optimistic.
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleInputs {
    pub phi: f64,
    pub ln_m: f64,
    pub g_bar: f64,
    pub gamma0: f64,
    pub eps: f64,
    #[serde(default)]
    pub phi_source: PhiSource,
}

impl ScheduleInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi <= 1.0) {
            return arg(format!("phi must lie in (0, 1], got {}", self.phi));
        }
        if !(self.eps > 0.0) {
            return arg(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.ln_m >= 0.0) {
            return arg(format!("ln_m must be nonnegative, got {}", self.ln_m));
        }
        if !(self.g_bar >= 0.0) {
            return arg(format!("g_bar must be nonnegative, got {}", self.g_bar));
        }
        if !(self.gamma0 >= 0.0) {
            return arg(format!("gamma0 must be nonnegative, got {}", self.gamma0));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub method: Method,
    /// Burn-in steps.
    pub burn_in: u64,
    /// Post-burn-in draws.
    pub draws: u64,
    /// Spacing between draws (subsample only).
    pub spacing: u64,
    #[serde(default)]
    pub phi_source: PhiSource,
}

impl SchedulePlan {
    /// A hand-specified plan.
    pub fn fixed(method: Method, burn_in: u64, draws: u64, spacing: u64) -> Result<Self> {
        if draws == 0 || spacing == 0 {
            return arg("a plan needs at least one draw and spacing ≥ 1");
        }
        if method != Method::Subsample && spacing != 1 {
            return arg("spacing applies to the subsample method only");
        }
        Ok(Self {
            method,
            burn_in,
            draws,
            spacing,
            phi_source: PhiSource::User,
        })
    }

    /// Walk transitions consumed: `B + N`, `B + S·N`, or `N·(B + 1)` for
    /// multi-start (each chain's initial proper move counts as one step).
    pub fn total_steps(&self) -> u64 {
        match self.method {
            Method::LongRun => self.burn_in + self.draws,
            Method::Subsample => self.burn_in + self.spacing * self.draws,
            Method::MultiStart => self.draws * (self.burn_in + 1),
        }
    }

    /// Work measure used to compare schemes: `B + N`, `B + S·N`, `B·N`.
    pub fn complexity(&self) -> f64 {
        let (b, n, s) = (self.burn_in as f64, self.draws as f64, self.spacing as f64);
        match self.method {
            Method::LongRun => b + n,
            Method::Subsample => b + s * n,
            Method::MultiStart => b * n,
        }
    }
}

/// Sufficient lengths for `MSE < ε`:
///
/// - `B = (2/φ²)·ln(24·sqrt(M)·ḡ²/ε)`
/// - long run: `N = (γ₀/ε)(6/φ²)`
/// - subsample: `N = 3γ₀/ε`, `S = (2/φ²)·ln(6γ₀/ε)`
/// - multi-start: `N = 2γ₀/(3ε)`
///
/// `γ₀ = 0` (a constant integrand) yields `N = 1`.
pub fn plan(method: Method, inputs: &ScheduleInputs) -> Result<SchedulePlan> {
    inputs.validate()?;
    let phi_sq = inputs.phi * inputs.phi;
    let burn_in = if inputs.g_bar == 0.0 {
        0.0
    } else {
        let log_arg = 24f64.ln() + inputs.ln_m / 2.0 + 2.0 * inputs.g_bar.ln() - inputs.eps.ln();
        (2.0 / phi_sq) * log_arg.max(0.0)
    };
    let ratio = inputs.gamma0 / inputs.eps;
    let (draws, spacing) = if inputs.gamma0 == 0.0 {
        (1.0, 1.0)
    } else {
        match method {
            Method::LongRun => (ratio * 6.0 / phi_sq, 1.0),
            Method::Subsample => (3.0 * ratio, (2.0 / phi_sq) * (6.0 * ratio).ln().max(0.0)),
            Method::MultiStart => (2.0 * ratio / 3.0, 1.0),
        }
    };
    Ok(SchedulePlan {
        method,
        burn_in: ceil_u64(burn_in)?,
        draws: ceil_u64(draws)?.max(1),
        spacing: ceil_u64(spacing)?.max(1),
        phi_source: inputs.phi_source,
    })
}

fn ceil_u64(x: f64) -> Result<u64> {
    // absorb representation error in exact integer results before rounding up
    let r = x.round();
    let v = if (x - r).abs() <= 1e-9 * r.abs().max(1.0) { r } else { x.ceil() };
    if !(v >= 0.0 && v < u64::MAX as f64) {
        return Err(Error::Numerical(format!("schedule length {x} is not representable")));
    }
    Ok(v as u64)
}
