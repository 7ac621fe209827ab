//! JSON run configuration. Every section is optional; command-line flags
//! override file values, and each subcommand fills in the defaults it uses
//! before the configuration is echoed into the run manifest.

use std::path::{Path, PathBuf};

use qbayes::isoperimetry::FactorKind;
use qbayes::models::ModelDescriptor;
use qbayes::schedule::{Method, PhiSource, ScheduleInputs};
use qbayes::DEFAULT_SUPPORT_C;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, CliResult};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "ModelConfig::is_empty")]
    pub model: ModelConfig,
    #[serde(skip_serializing_if = "WalkSection::is_empty")]
    pub walk: WalkSection,
    #[serde(skip_serializing_if = "ScheduleSection::is_empty")]
    pub schedule: ScheduleSection,
    #[serde(skip_serializing_if = "DiagnosticsSection::is_empty")]
    pub diagnostics: DiagnosticsSection,
    #[serde(skip_serializing_if = "IsoSection::is_empty")]
    pub iso: IsoSection,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .or_else(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).or_else(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn seed(&mut self) -> u64 {
        *self.seed.get_or_insert(DEFAULT_SEED)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Family {
    GaussianLocation,
    Poisson,
    LinearRegression,
    Quantile,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
    /// CSV to use instead of synthetic data; must have the family's columns.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
}

/// A model section with every default applied.
#[derive(Debug, Clone)]
pub struct ModelChoice {
    pub descriptor: ModelDescriptor,
    pub n: usize,
    pub data: Option<PathBuf>,
}

impl ModelConfig {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub fn resolve(&mut self) -> CliResult<ModelChoice> {
        let family = *self.family.get_or_insert(Family::GaussianLocation);
        let dim = *self.dim.get_or_insert(2);
        let n = *self.n.get_or_insert(1000);
        if dim == 0 {
            return config_err("model.dim must be at least 1");
        }
        if n == 0 {
            return config_err("model.n must be at least 1");
        }
        let theta0 = self.theta0.get_or_insert_with(|| vec![0.0; dim]).clone();
        if theta0.len() != dim {
            return config_err(format!("model.theta0 has {} entries but model.dim is {dim}", theta0.len()));
        }
        if family != Family::Quantile && self.alpha.is_some() {
            return config_err("model.alpha applies to the quantile family only");
        }
        if family != Family::LinearRegression && self.noise_sd.is_some() {
            return config_err("model.noise_sd applies to the linear_regression family only");
        }
        let theta0 = Some(theta0);
        let descriptor = match family {
            Family::GaussianLocation => ModelDescriptor::GaussianLocation { dim, theta0 },
            Family::Poisson => ModelDescriptor::Poisson { dim, theta0 },
            Family::LinearRegression => ModelDescriptor::LinearRegression {
                dim,
                theta0,
                noise_sd: *self.noise_sd.get_or_insert(1.0),
            },
            Family::Quantile => {
                let alpha = *self.alpha.get_or_insert(0.5);
                if !(alpha > 0.0 && alpha < 1.0) {
                    return config_err(format!("model.alpha must lie in (0, 1), got {alpha}"));
                }
                ModelDescriptor::Quantile { dim, theta0, alpha }
            }
        };
        Ok(ModelChoice {
            descriptor,
            n,
            data: self.data.clone(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkSection {
    /// Proposal scale; the default step size when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Support constant `C` in `‖K‖ = C·sqrt(d/λ_min)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Chain length for sampling, pilots and benchmarks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

impl WalkSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub fn c(&mut self) -> CliResult<f64> {
        let c = *self.c.get_or_insert(DEFAULT_SUPPORT_C);
        if !(c > 0.0 && c.is_finite()) {
            return config_err(format!("walk.c must be positive, got {c}"));
        }
        Ok(c)
    }

    pub fn steps(&mut self, default: usize) -> CliResult<usize> {
        let s = *self.steps.get_or_insert(default);
        if s == 0 {
            return config_err("walk.steps must be at least 1");
        }
        Ok(s)
    }

    pub fn check_sigma(&self) -> CliResult<()> {
        match self.sigma {
            Some(s) if !(s > 0.0 && s.is_finite()) => config_err(format!("walk.sigma must be positive, got {s}")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    /// How to obtain `phi` when it is not given; labels it when it is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_source: Option<PhiSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ln_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_bar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    /// A fixed plan: when `draws` is set the formulas are skipped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<u64>,
}

impl ScheduleSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// Range-check the values that are present, with neutral stand-ins for
    /// the ones still to be derived.
    pub fn check(&self) -> CliResult<()> {
        ScheduleInputs {
            phi: self.phi.unwrap_or(1.0),
            ln_m: self.ln_m.unwrap_or(0.0),
            g_bar: self.g_bar.unwrap_or(1.0),
            gamma0: self.gamma0.unwrap_or(1.0),
            eps: self.eps.unwrap_or(1.0),
            phi_source: PhiSource::User,
        }
        .validate()?;
        if self.draws.is_none() && (self.burn_in.is_some() || self.spacing.is_some()) {
            return config_err("schedule.burn_in and schedule.spacing need schedule.draws");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Sample count for the CLT fit and the TV estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maxlag: Option<usize>,
    /// States dropped before computing autocovariances.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    /// Also compute the quadrature TV (dimension ≤ 2).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
}

impl DiagnosticsSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsoSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<FactorKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cases: Option<usize>,
}

impl IsoSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}
