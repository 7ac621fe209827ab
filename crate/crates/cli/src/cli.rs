use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qbayes::isoperimetry::FactorKind;
use qbayes::schedule::{Method, PhiSource};

use crate::config::{Config, Family};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "qbayes", version, about = "Quasi-Bayesian estimation with a Gaussian Metropolis walk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the walk on a localized model and save the trace.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        walk: WalkArgs,
    },
    /// Quasi-posterior mean of a localized model.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        walk: WalkArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        diag: DiagArgs,
    },
    /// Burn-in and sample-size planning.
    Schedule {
        #[command(subcommand)]
        command: ScheduleCommand,
    },
    /// Normal-approximation and mixing diagnostics.
    Diagnose {
        #[command(subcommand)]
        command: DiagnoseCommand,
    },
    /// Benchmarks.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Iso-perimetric inequality checks.
    Iso {
        #[command(subcommand)]
        command: IsoCommand,
    },
    /// Data generation.
    Gen {
        #[command(subcommand)]
        command: GenCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScheduleCommand {
    /// Print the plan for one method, or all three, as JSON.
    Plan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        walk: WalkArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        diag: DiagArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseCommand {
    /// Fit the log-quadratic error bounds (ε₁, ε₂) and β.
    Clt {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        walk: WalkArgs,
        #[command(flatten)]
        diag: DiagArgs,
    },
    /// Distance from the target to its normal reference.
    Tv {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        walk: WalkArgs,
        #[command(flatten)]
        diag: DiagArgs,
    },
    /// Autocovariance-based conductance proxy from a chain.
    Conductance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        walk: WalkArgs,
        #[command(flatten)]
        diag: DiagArgs,
        /// Conductance to test the covariance envelope with (default: the proxy).
        #[arg(long)]
        phi: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// IAT of the default walk on standard normal targets across dimensions.
    Mixing {
        #[command(flatten)]
        common: Common,
        /// Comma-separated, strictly increasing dimensions.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        /// Post-burn-in steps per dimension.
        #[arg(long)]
        steps: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum IsoCommand {
    /// Random slab partitions checked against the inequality.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_factor)]
        family: Option<FactorKind>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        cases: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Draw a synthetic dataset.
    Data {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root (default: config `out_dir`, then $QBAYES_OUT, then ./runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    pub fn load(&self) -> CliResult<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        set(&mut cfg.seed, self.seed);
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub family: Option<Family>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated true parameter.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
    /// Quantile level (quantile family).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Noise standard deviation (linear_regression family).
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// CSV data to use instead of a synthetic draw.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

impl ModelArgs {
    pub fn apply(self, cfg: &mut Config) {
        let m = &mut cfg.model;
        set(&mut m.family, self.family);
        set(&mut m.dim, self.dim);
        set(&mut m.n, self.n);
        set(&mut m.theta0, self.theta0);
        set(&mut m.alpha, self.alpha);
        set(&mut m.noise_sd, self.noise_sd);
        set(&mut m.data, self.data);
    }
}

#[derive(Debug, Args)]
pub struct WalkArgs {
    /// Proposal scale (default: the step size derived from d, λ_max and ‖K‖).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Support constant C in ‖K‖ = C·sqrt(d/λ_min).
    #[arg(long = "support-c")]
    pub c: Option<f64>,
    /// Chain length.
    #[arg(long)]
    pub steps: Option<usize>,
}

impl WalkArgs {
    pub fn apply(self, cfg: &mut Config) {
        set(&mut cfg.walk.sigma, self.sigma);
        set(&mut cfg.walk.c, self.c);
        set(&mut cfg.walk.steps, self.steps);
    }
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// long_run, subsample or multi_start (lr, ss, ms).
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Target mean squared error.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Conductance.
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    /// user, theoretical or empirical.
    #[arg(long, value_parser = parse_phi_source)]
    pub phi_source: Option<PhiSource>,
    /// Log warmness of the start.
    #[arg(long)]
    pub ln_m: Option<f64>,
    /// Bound on |g|.
    #[arg(long)]
    pub g_bar: Option<f64>,
    /// Variance of g under the target.
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    /// Fixed number of draws; skips the formulas.
    #[arg(long)]
    pub draws: Option<u64>,
    #[arg(long)]
    pub spacing: Option<u64>,
}

impl ScheduleArgs {
    pub fn apply(self, cfg: &mut Config) {
        let s = &mut cfg.schedule;
        set(&mut s.method, self.method);
        set(&mut s.eps, self.eps);
        set(&mut s.phi, self.phi);
        set(&mut s.phi_source, self.phi_source);
        set(&mut s.ln_m, self.ln_m);
        set(&mut s.g_bar, self.g_bar);
        set(&mut s.gamma0, self.gamma0);
        set(&mut s.burn_in, self.burn_in);
        set(&mut s.draws, self.draws);
        set(&mut s.spacing, self.spacing);
    }
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    /// Evaluation points for the CLT fit or TV estimate.
    #[arg(long)]
    pub m: Option<usize>,
    /// Largest autocovariance lag.
    #[arg(long)]
    pub maxlag: Option<usize>,
    /// States dropped before autocovariances.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Also compute the quadrature TV (d ≤ 2).
    #[arg(long)]
    pub exact: bool,
}

impl DiagArgs {
    pub fn apply(self, cfg: &mut Config) {
        let d = &mut cfg.diagnostics;
        set(&mut d.m, self.m);
        set(&mut d.maxlag, self.maxlag);
        set(&mut d.warmup, self.warmup);
        if self.exact {
            d.exact = Some(true);
        }
    }
}

fn set<T>(dst: &mut Option<T>, src: Option<T>) {
    if src.is_some() {
        *dst = src;
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: qbayes::Error| e.to_string())
}

fn parse_factor(s: &str) -> Result<FactorKind, String> {
    s.parse().map_err(|e: qbayes::Error| e.to_string())
}

fn parse_phi_source(s: &str) -> Result<PhiSource, String> {
    match s {
        "user" => Ok(PhiSource::User),
        "theoretical" => Ok(PhiSource::Theoretical),
        "empirical" => Ok(PhiSource::Empirical),
        other => Err(format!("unknown phi source {other:?} (expected user, theoretical or empirical)")),
    }
}
