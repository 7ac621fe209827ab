//! Gaussian Metropolis random walk restricted to the support ball.
//!
//! From `u ∈ K`, draw `y ~ N(u, σ²I)`; if `y ∉ K` stay at `u`, otherwise move
//! to `y` with probability `min{ℓ(y)/ℓ(u), 1}`.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::fmt_f64;
use crate::error::{arg, Error, Result};
use crate::rng::StreamRng;
use crate::target::LocalTarget;

/// Proposal covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    /// `σ²I`.
    #[default]
    Isotropic,
    /// `σ²J⁻¹`.
    Preconditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub sigma: f64,
    pub seed: u64,
    pub init: Vec<f64>,
    #[serde(default)]
    pub proposal: Proposal,
}

impl WalkConfig {
    /// Isotropic walk from the origin with the default step size.
    pub fn for_target(target: &LocalTarget, seed: u64) -> Result<Self> {
        Ok(Self {
            sigma: sigma_default_for(target)?,
            seed,
            init: vec![0.0; target.dim()],
            proposal: Proposal::Isotropic,
        })
    }
}

/// `σ = min{1/(4√d·L), ‖K‖/(120d)}` with `L = λ_max‖K‖`.
pub fn sigma_default(dim: usize, lambda_max: f64, norm_k: f64) -> Result<f64> {
    if dim == 0 || !(lambda_max > 0.0) || !(norm_k > 0.0) {
        return arg("sigma_default needs d ≥ 1, λ_max > 0 and ‖K‖ > 0");
    }
    let d = dim as f64;
    let lipschitz = lambda_max * norm_k;
    Ok((1.0 / (4.0 * d.sqrt() * lipschitz)).min(norm_k / (120.0 * d)))
}

pub fn sigma_default_for(target: &LocalTarget) -> Result<f64> {
    sigma_default(
        target.dim(),
        target.reference().lambda_max(),
        target.support().radius(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub proper: bool,
    pub outside: bool,
}

/// A running chain: current state, its cached log-density and an RNG stream.
pub struct Walker<'a> {
    target: &'a LocalTarget,
    sigma: f64,
    // maps a standard normal draw to the proposal increment (before σ)
    shape: Option<DMatrix<f64>>,
    rng: StreamRng,
    current: Vec<f64>,
    current_log: f64,
    z: Vec<f64>,
    proposal: Vec<f64>,
}

impl<'a> Walker<'a> {
    pub fn new(target: &'a LocalTarget, config: &WalkConfig) -> Result<Self> {
        Self::with_rng(target, config, crate::rng::stream(config.seed))
    }

    pub fn with_rng(target: &'a LocalTarget, config: &WalkConfig, rng: StreamRng) -> Result<Self> {
        if !(config.sigma > 0.0 && config.sigma.is_finite()) {
            return arg(format!("σ must be positive, got {}", config.sigma));
        }
        if config.init.len() != target.dim() {
            return arg("initial point has the wrong dimension");
        }
        if !target.support().contains(&config.init) {
            return arg("initial point lies outside the support ball");
        }
        let current_log = target.log_ell(&config.init);
        if current_log == f64::NEG_INFINITY || current_log.is_nan() {
            return Err(Error::InvalidState(
                "initial point has zero density".into(),
            ));
        }
        let shape = match config.proposal {
            Proposal::Isotropic => None,
            Proposal::Preconditioned => {
                // J = LL' ⇒ L'^{-1} z ~ N(0, J⁻¹)
                let lt = target.reference().cholesky_lower().transpose();
                Some(lt.try_inverse().ok_or_else(|| {
                    Error::Numerical("cannot invert the Cholesky factor of J".into())
                })?)
            }
        };
        let d = target.dim();
        Ok(Self {
            target,
            sigma: config.sigma,
            shape,
            rng,
            current: config.init.clone(),
            current_log,
            z: vec![0.0; d],
            proposal: vec![0.0; d],
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.current
    }

    pub fn log_density(&self) -> f64 {
        self.current_log
    }

    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    pub fn step(&mut self) -> StepOutcome {
        for z in self.z.iter_mut() {
            *z = self.rng.sample(StandardNormal);
        }
        match &self.shape {
            None => {
                for ((p, c), z) in self.proposal.iter_mut().zip(&self.current).zip(&self.z) {
                    *p = c + self.sigma * z;
                }
            }
            Some(m) => {
                let d = self.z.len();
                for r in 0..d {
                    let mut inc = 0.0;
                    for c in 0..d {
                        inc += m[(r, c)] * self.z[c];
                    }
                    self.proposal[r] = self.current[r] + self.sigma * inc;
                }
            }
        }
        if !self.target.support().contains(&self.proposal) {
            return StepOutcome {
                accepted: false,
                proper: false,
                outside: true,
            };
        }
        let cand = self.target.log_ell(&self.proposal);
        let log_ratio = cand - self.current_log;
        let accept = if log_ratio >= 0.0 {
            true
        } else if log_ratio.is_nan() || cand == f64::NEG_INFINITY {
            false
        } else {
            self.rng.random::<f64>() < log_ratio.exp()
        };
        if !accept {
            return StepOutcome {
                accepted: false,
                proper: false,
                outside: false,
            };
        }
        let proper = self.proposal != self.current;
        std::mem::swap(&mut self.current, &mut self.proposal);
        self.current_log = cand;
        StepOutcome {
            accepted: true,
            proper,
            outside: false,
        }
    }
}

/// One transition from `current`. Returns `(next, accepted, proper)`.
pub fn step(
    current: &[f64],
    target: &LocalTarget,
    sigma: f64,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, bool, bool)> {
    let config = WalkConfig {
        sigma,
        seed: 0,
        init: current.to_vec(),
        proposal: Proposal::Isotropic,
    };
    let mut w = Walker::with_rng(target, &config, rng.clone())?;
    let out = w.step();
    *rng = w.rng;
    Ok((w.current, out.accepted, out.proper))
}

/// Recorded chain: `T + 1` states and `T` step flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    dim: usize,
    states: Vec<f64>,
    pub accepted: Vec<bool>,
    pub proper: Vec<bool>,
    pub proposals_outside: usize,
}

impl ChainTrace {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of states (steps + 1).
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.dim..(t + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    /// Coordinate `j` of every state.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.states().map(|s| s[j]).collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        rate(&self.accepted)
    }

    /// CSV with columns `step, lambda_1..lambda_d, accepted, proper`; the
    /// initial state has empty flags.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string()];
        header.extend((1..=self.dim).map(|j| format!("lambda_{j}")));
        header.push("accepted".into());
        header.push("proper".into());
        wtr.write_record(&header)?;
        for (t, s) in self.states().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(s.iter().map(|v| fmt_f64(*v)));
            if t == 0 {
                rec.push(String::new());
                rec.push(String::new());
            } else {
                rec.push(u8::from(self.accepted[t - 1]).to_string());
                rec.push(u8::from(self.proper[t - 1]).to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Run `steps` transitions from `config.init`.
pub fn run_chain(target: &LocalTarget, config: &WalkConfig, steps: usize) -> Result<ChainTrace> {
    let mut w = Walker::new(target, config)?;
    record(&mut w, steps)
}

pub(crate) fn record(w: &mut Walker<'_>, steps: usize) -> Result<ChainTrace> {
    let dim = w.state().len();
    let mut states = Vec::with_capacity((steps + 1) * dim);
    states.extend_from_slice(w.state());
    let mut accepted = Vec::with_capacity(steps);
    let mut proper = Vec::with_capacity(steps);
    let mut outside = 0;
    for _ in 0..steps {
        let o = w.step();
        accepted.push(o.accepted);
        proper.push(o.proper);
        outside += usize::from(o.outside);
        states.extend_from_slice(w.state());
    }
    Ok(ChainTrace {
        dim,
        states,
        accepted,
        proper,
        proposals_outside: outside,
    })
}

/// Fraction of steps that moved to a new point inside `K`.
pub fn proper_move_rate(trace: &ChainTrace) -> f64 {
    rate(&trace.proper)
}

fn rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}

/// Draw from the one-step distribution at `u` conditional on a proper move,
/// by repeating the step until it moves. Returns the point and the number of
/// proposals used.
pub fn draw_proper_move(
    target: &LocalTarget,
    u: &[f64],
    sigma: f64,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, usize)> {
    const MAX_TRIES: usize = 10_000_000;
    let config = WalkConfig {
        sigma,
        seed: 0,
        init: u.to_vec(),
        proposal: Proposal::Isotropic,
    };
    let mut w = Walker::with_rng(target, &config, rng.clone())?;
    for tries in 1..=MAX_TRIES {
        if w.step().proper {
            *rng = w.rng;
            return Ok((w.current, tries));
        }
    }
    Err(Error::Numerical(format!(
        "no proper move from the start point after {MAX_TRIES} proposals"
    )))
}
