//! Quasi-posterior means by long-run, subsample and multi-start averaging.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::series_iat;
use crate::error::{arg, Error, Result};
use crate::models::Localized;
use crate::rng::{self, StreamRng};
use crate::schedule::{Method, SchedulePlan};
use crate::target::LocalTarget;
use crate::walk::{draw_proper_move, sigma_default_for, Proposal, Walker, WalkConfig};

/// A bounded integrand `g` with its declared bound `ḡ ≥ sup_K |g|`.
#[derive(Clone)]
pub struct IntegrandSpec {
    pub name: String,
    pub bound: f64,
    g: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for IntegrandSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegrandSpec")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

impl IntegrandSpec {
    pub fn new(name: impl Into<String>, bound: f64, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return arg(format!("integrand bound must be finite and nonnegative, got {bound}"));
        }
        Ok(Self {
            name: name.into(),
            bound,
            g: Arc::new(g),
        })
    }

    pub fn constant(c: f64) -> Self {
        Self::new("constant", c.abs(), move |_| c).expect("finite constant")
    }

    /// `λ ↦ λ_j`, bounded by the support radius.
    pub fn coordinate(j: usize, target: &LocalTarget) -> Self {
        Self::new(format!("lambda_{}", j + 1), target.support().radius(), move |l| l[j])
            .expect("finite radius")
    }

    /// `λ ↦ 1(λ_j ≤ threshold)`.
    pub fn indicator_below(j: usize, threshold: f64) -> Self {
        Self::new(format!("1(lambda_{} <= {threshold})", j + 1), 1.0, move |l| {
            f64::from(u8::from(l[j] <= threshold))
        })
        .expect("unit bound")
    }

    pub fn eval(&self, lambda: &[f64]) -> Result<f64> {
        let v = (self.g)(lambda);
        if !(v.abs() <= self.bound * (1.0 + 1e-12) + 1e-300) {
            return Err(Error::InvalidState(format!(
                "integrand {} took value {v} beyond its declared bound {}",
                self.name, self.bound
            )));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimates: Vec<f64>,
    pub names: Vec<String>,
    pub plan: SchedulePlan,
    pub sigma: f64,
    /// Walk transitions consumed.
    pub steps: u64,
    pub acceptance_rate: f64,
    pub proper_rate: f64,
    /// IAT of the first integrand along the averaged draws (single-chain methods).
    pub iat: Option<f64>,
    pub seed: u64,
}

impl EstimateReport {
    pub fn estimate(&self) -> f64 {
        self.estimates[0]
    }
}

#[derive(Default)]
struct Tally {
    steps: u64,
    accepted: u64,
    proper: u64,
}

impl Tally {
    fn step(&mut self, w: &mut Walker<'_>) {
        let o = w.step();
        self.steps += 1;
        self.accepted += u64::from(o.accepted);
        self.proper += u64::from(o.proper);
    }
}

/// Average `g` over the draws prescribed by `plan`.
pub fn integrate(target: &LocalTarget, plan: &SchedulePlan, g: &IntegrandSpec, seed: u64) -> Result<EstimateReport> {
    integrate_many(target, plan, std::slice::from_ref(g), seed)
}

/// Average several integrands over one set of draws.
///
/// Every method starts from a draw of the one-step-after-a-proper-move
/// distribution at the origin. Long-run averages `λ^{B+1}, …, λ^{B+N}`;
/// subsample averages `λ^{B+S}, λ^{B+2S}, …`; multi-start runs `N`
/// independent chains of `B` steps each and averages their end points.
pub fn integrate_many(
    target: &LocalTarget,
    plan: &SchedulePlan,
    gs: &[IntegrandSpec],
    seed: u64,
) -> Result<EstimateReport> {
    integrate_with_sigma(target, plan, gs, sigma_default_for(target)?, seed)
}

/// As [`integrate_many`] with an explicit step size.
pub fn integrate_with_sigma(
    target: &LocalTarget,
    plan: &SchedulePlan,
    gs: &[IntegrandSpec],
    sigma: f64,
    seed: u64,
) -> Result<EstimateReport> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return arg(format!("sigma must be positive and finite, got {sigma}"));
    }
    if gs.is_empty() {
        return arg("need at least one integrand");
    }
    if plan.draws == 0 || plan.spacing == 0 {
        return arg("plan needs at least one draw and spacing ≥ 1");
    }
    let origin = vec![0.0; target.dim()];
    let k = gs.len();
    let (sums, tally, iat) = match plan.method {
        Method::LongRun | Method::Subsample => {
            let mut rng = rng::derive(seed, 0);
            let (start, _) = draw_proper_move(target, &origin, sigma, &mut rng)?;
            let mut w = start_walker(target, start, sigma, rng)?;
            let mut t = Tally::default();
            for _ in 0..plan.burn_in {
                t.step(&mut w);
            }
            let spacing = if plan.method == Method::Subsample { plan.spacing } else { 1 };
            let mut sums = vec![0.0; k];
            let mut first = Vec::with_capacity(plan.draws as usize);
            for _ in 0..plan.draws {
                for _ in 0..spacing {
                    t.step(&mut w);
                }
                for (s, g) in sums.iter_mut().zip(gs) {
                    *s += g.eval(w.state())?;
                }
                first.push(gs[0].eval(w.state())?);
            }
            let iat = if first.len() >= 10 { Some(series_iat(&first)?) } else { None };
            (sums, t, iat)
        }
        Method::MultiStart => {
            let per_chain: Vec<Result<(Vec<f64>, Tally)>> = (0..plan.draws)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng::derive(seed, i);
                    let (start, _) = draw_proper_move(target, &origin, sigma, &mut rng)?;
                    let mut w = start_walker(target, start, sigma, rng)?;
                    let mut t = Tally {
                        steps: 1,
                        accepted: 1,
                        proper: 1,
                    };
                    for _ in 0..plan.burn_in {
                        t.step(&mut w);
                    }
                    let vals = gs.iter().map(|g| g.eval(w.state())).collect::<Result<Vec<_>>>()?;
                    Ok((vals, t))
                })
                .collect();
            // fixed-order reduction keeps the sum independent of scheduling
            let mut sums = vec![0.0; k];
            let mut total = Tally::default();
            for r in per_chain {
                let (vals, t) = r?;
                for (s, v) in sums.iter_mut().zip(vals) {
                    *s += v;
                }
                total.steps += t.steps;
                total.accepted += t.accepted;
                total.proper += t.proper;
            }
            (sums, total, None)
        }
    };
    debug_assert_eq!(tally.steps, plan.total_steps());
    let n = plan.draws as f64;
    let steps = tally.steps.max(1) as f64;
    Ok(EstimateReport {
        estimates: sums.iter().map(|s| s / n).collect(),
        names: gs.iter().map(|g| g.name.clone()).collect(),
        plan: *plan,
        sigma,
        steps: tally.steps,
        acceptance_rate: tally.accepted as f64 / steps,
        proper_rate: tally.proper as f64 / steps,
        iat,
        seed,
    })
}

fn start_walker(target: &LocalTarget, start: Vec<f64>, sigma: f64, rng: StreamRng) -> Result<Walker<'_>> {
    let config = WalkConfig {
        sigma,
        seed: 0,
        init: start,
        proposal: Proposal::Isotropic,
    };
    Walker::with_rng(target, &config, rng)
}

/// Quasi-posterior mean in the original parameterization,
/// `θ̂ = θ_c + λ̄/√n` with `λ̄` the coordinate-wise average.
/// `sigma` defaults to [`sigma_default_for`].
pub fn qb_point_estimate(
    model: &Localized,
    plan: &SchedulePlan,
    sigma: Option<f64>,
    seed: u64,
) -> Result<(Vec<f64>, EstimateReport)> {
    let t = &model.target;
    let gs: Vec<IntegrandSpec> = (0..t.dim()).map(|j| IntegrandSpec::coordinate(j, t)).collect();
    let sigma = match sigma {
        Some(s) => s,
        None => sigma_default_for(t)?,
    };
    let report = integrate_with_sigma(t, plan, &gs, sigma, seed)?;
    Ok((model.localization.to_theta(&report.estimates), report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub seed: u64,
    pub estimate: f64,
    pub squared_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub mse: f64,
    pub truth: f64,
    pub rows: Vec<ReplicationRow>,
}

/// Replicate `integrate` `reps` times and compare with the known mean.
///
/// `make_target(r, seed)` builds the target of replication `r` (e.g. from
/// fresh synthetic data); chains and data draw from child seeds of
/// `master_seed`, so the table is bit-reproducible.
pub fn mse_harness<F>(
    make_target: F,
    plan: &SchedulePlan,
    g: &IntegrandSpec,
    truth: f64,
    reps: usize,
    master_seed: u64,
) -> Result<MseReport>
where
    F: Fn(usize, u64) -> Result<LocalTarget> + Sync,
{
    if reps == 0 {
        return arg("need at least one replication");
    }
    let rows: Vec<Result<ReplicationRow>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = rng::derive_seed(master_seed, r as u64);
            let target = make_target(r, rng::derive_seed(seed, 1))?;
            let est = integrate(&target, plan, g, seed)?.estimate();
            Ok(ReplicationRow {
                replication: r,
                seed,
                estimate: est,
                squared_error: (est - truth).powi(2),
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mse = rows.iter().map(|r| r.squared_error).sum::<f64>() / reps as f64;
    Ok(MseReport { mse, truth, rows })
}
