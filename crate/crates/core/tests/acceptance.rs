//! End-to-end acceptance checks, one per criterion.
//!
//! Runs as a plain binary (no libtest harness) so every criterion prints a
//! single PASS/FAIL line even when the others succeed. Exits non-zero if any
//! criterion fails.

use std::time::{Duration, Instant};

use qbayes::diagnostics::{
    autocovariance, clt_fit, conductance_proxy, covariance_bound_check, mixing_scaling, tv_to_normal,
};
use qbayes::estimator::{mse_harness, qb_point_estimate, IntegrandSpec};
use qbayes::isoperimetry::{
    beta_from_envelope, concave_upper_envelope, fuzz_case, random_gapped_concave, FactorKind,
};
use qbayes::models::{gen_synthetic, localize, ModelDescriptor};
use qbayes::rng;
use qbayes::schedule::{plan, warmness_log_bound, Method, PhiSource, ScheduleInputs, SchedulePlan};
use qbayes::walk::{proper_move_rate, run_chain, WalkConfig, Walker};
use qbayes::{LocalTarget, Result};

use rand::Rng;
use rayon::prelude::*;

const SEED: u64 = 20_240_917;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Planner output on the reference inputs, exact integers, under a second.
fn c1_schedule() -> Result<Outcome> {
    let inputs = ScheduleInputs {
        phi: 0.1,
        ln_m: 1.0,
        g_bar: 1.0,
        gamma0: 1.0,
        eps: 0.01,
        phi_source: PhiSource::User,
    };
    let t0 = Instant::now();
    let lr = plan(Method::LongRun, &inputs)?;
    let ss = plan(Method::Subsample, &inputs)?;
    let ms = plan(Method::MultiStart, &inputs)?;
    let elapsed = t0.elapsed();
    let got = (lr.burn_in, lr.draws, ss.draws, ss.spacing, ms.draws);
    let pass = got == (1657, 60_000, 300, 1280, 67)
        && ss.burn_in == 1657
        && ms.burn_in == 1657
        && elapsed < Duration::from_secs(1);
    outcome(pass, format!("(B, N_lr, N_ss, S, N_ms) = {got:?}"))
}

/// Slope of ln IAT against ln d for the default walk on standard normals.
fn c2_mixing() -> Result<Outcome> {
    let table = mixing_scaling(&[2, 4, 8, 16, 32], 200_000, SEED)?;
    let slope = table.slope.unwrap_or(f64::NAN);
    let taus: Vec<String> = table.rows.iter().map(|r| format!("d={}:{:.0}", r.dim, r.iat)).collect();
    outcome(
        (1.5..=2.5).contains(&slope),
        format!("slope {slope:.3} (target [1.5, 2.5]); IAT {}", taus.join(" ")),
    )
}

/// The Gaussian location family localizes to an exact quadratic.
fn c3_gaussian_exact() -> Result<Outcome> {
    let t0 = Instant::now();
    let model = ModelDescriptor::GaussianLocation {
        dim: 3,
        theta0: Some(vec![0.5, -1.0, 2.0]),
    };
    let data = gen_synthetic(&model, 1_000, SEED)?;
    let loc = localize(&model, &data, qbayes::DEFAULT_SUPPORT_C)?;
    let fit = clt_fit(&loc.target, loc.target.reference(), 2_000, SEED)?;
    let pass = fit.eps1 <= 1e-10 && fit.eps2 <= 1e-10 && fit.beta >= 1.0 - 1e-9 && t0.elapsed() < Duration::from_secs(1);
    outcome(pass, format!("eps1 {:.2e}, eps2 {:.2e}, beta {:.12}", fit.eps1, fit.eps2, fit.beta))
}

/// Distance to the normal limit shrinks from n = 100 to n = 10⁴.
fn c4_clt_trend() -> Result<Outcome> {
    let model = ModelDescriptor::LinearRegression {
        dim: 2,
        theta0: Some(vec![1.0, -0.5]),
        noise_sd: 1.0,
    };
    let tv = |n: usize| -> Result<f64> {
        let data = gen_synthetic(&model, n, SEED)?;
        let loc = localize(&model, &data, qbayes::DEFAULT_SUPPORT_C)?;
        tv_to_normal(&loc.target, loc.target.reference(), 20_000, SEED)
    };
    let (small, large) = (tv(100)?, tv(10_000)?);
    outcome(
        large < small && large <= 0.1,
        format!("n=100: {small:.4}, n=10000: {large:.4}"),
    )
}

/// Planned long-run averages meet the MSE target.
fn c5_mse() -> Result<Outcome> {
    let target = LocalTarget::standard_normal(2)?;
    let eps = 0.01;
    // conductance proxy from a pilot chain on the integrand
    let g = IntegrandSpec::indicator_below(0, 0.0);
    let config = WalkConfig::for_target(&target, 0)?;
    let mut w = Walker::with_rng(&target, &config, rng::derive(SEED, 999))?;
    let pilot_len = 2_000_000;
    let mut series = Vec::with_capacity(pilot_len);
    for _ in 0..pilot_len {
        w.step();
        series.push(g.eval(w.state())?);
    }
    let table = autocovariance(&series, 150_000)?;
    let proxy = conductance_proxy(&table)?;
    let norm_kj_sq = target.norm_k_j().powi(2);
    let inputs = ScheduleInputs {
        phi: proxy.phi_hat,
        ln_m: warmness_log_bound(2, norm_kj_sq, 0.0, 0.0)?,
        g_bar: 1.0,
        gamma0: 0.25,
        eps,
        phi_source: PhiSource::Empirical,
    };
    let p = plan(Method::LongRun, &inputs)?;
    let report = mse_harness(|_, _| Ok(target.clone()), &p, &g, 0.5, 200, SEED)?;
    outcome(
        report.mse <= 1.5 * eps,
        format!(
            "MSE {:.5} (limit {:.3}); phi_hat {:.5}, B {}, N {}",
            report.mse,
            1.5 * eps,
            proxy.phi_hat,
            p.burn_in,
            p.draws
        ),
    )
}

/// Quasi-posterior means of the median-regression Z-problem are √n-consistent.
fn c6_quantile() -> Result<Outcome> {
    let (d, n, reps) = (3usize, 2_000usize, 50usize);
    let theta0 = vec![1.0, 0.5, -0.5];
    let model = ModelDescriptor::Quantile {
        dim: d,
        theta0: Some(theta0.clone()),
        alpha: 0.5,
    };
    let p = SchedulePlan::fixed(Method::LongRun, 5_000, 50_000, 1)?;
    let estimates: Vec<Result<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = rng::derive_seed(SEED, r as u64);
            let data = gen_synthetic(&model, n, seed)?;
            let loc = localize(&model, &data, qbayes::DEFAULT_SUPPORT_C)?;
            Ok(qb_point_estimate(&loc, &p, None, rng::derive_seed(seed, 1))?.0)
        })
        .collect();
    let estimates = estimates.into_iter().collect::<Result<Vec<_>>>()?;
    let rmse: Vec<f64> = (0..d)
        .map(|j| {
            let mse = estimates.iter().map(|e| (e[j] - theta0[j]).powi(2)).sum::<f64>() / reps as f64;
            mse.sqrt()
        })
        .collect();
    let limit = 3.0 * (d as f64 / n as f64).sqrt();
    outcome(
        rmse.iter().all(|r| *r <= limit),
        format!("coordinate RMSE {rmse:.4?} (limit {limit:.4})"),
    )
}

/// Iso-perimetric inequality on random slab partitions.
fn c7_isoperimetry() -> Result<Outcome> {
    let cases = 1_000;
    let mut families = Vec::new();
    for kind in [FactorKind::Step, FactorKind::Bump] {
        for beta in [1.0, 0.7, 0.5] {
            for dim in [1usize, 2] {
                families.push((kind, beta, dim));
            }
        }
    }
    let results: Vec<Result<(usize, f64)>> = families
        .par_iter()
        .enumerate()
        .map(|(fi, &(kind, beta, dim))| {
            let mut g = rng::derive(SEED, 7_000 + fi as u64);
            let mut violations = 0;
            let mut worst = f64::INFINITY;
            for _ in 0..cases {
                let checks = fuzz_case(kind, beta, dim, &mut g)?;
                for c in checks {
                    worst = worst.min(c.margin());
                    violations += usize::from(!c.holds);
                }
            }
            Ok((violations, worst))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let violations: usize = results.iter().map(|r| r.0).sum();
    let worst = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    outcome(
        violations == 0,
        format!(
            "{violations} violations over {} families x {cases} partitions; smallest lhs - rhs {worst:.3e}",
            families.len()
        ),
    )
}

/// Envelope gap recovers the injected log-concavity defect.
fn c8_envelope() -> Result<Outcome> {
    let t0 = Instant::now();
    let mut g = rng::derive(SEED, 8);
    let mut worst = 0.0f64;
    let mut invariants = true;
    for _ in 0..500 {
        let points = g.random_range(3..60);
        let gap = g.random_range(0.01..2.0);
        let (h, _) = random_gapped_concave(points, gap, &mut g)?;
        worst = worst.max((beta_from_envelope(&h) - (-gap).exp()).abs());
        let m = concave_upper_envelope(&h);
        invariants &= m.values().iter().zip(h.values()).all(|(a, b)| a >= b);
        invariants &= concave_upper_envelope(&m) == m;
    }
    outcome(
        worst <= 1e-9 && invariants && t0.elapsed() < Duration::from_secs(10),
        format!("max |beta - exp(-g*)| {worst:.2e}; dominance and idempotence {invariants}"),
    )
}

/// Proper-move frequency of the default walk stays above 1/(3e).
fn c9_proper_moves() -> Result<Outcome> {
    let steps = 10_000;
    let floor = 1.0 / (3.0 * std::f64::consts::E);
    let limit = floor - 3.0 * (floor * (1.0 - floor) / steps as f64).sqrt();
    let mut rates = Vec::new();
    for d in [2usize, 8] {
        let target = LocalTarget::standard_normal(d)?;
        let trace = run_chain(&target, &WalkConfig::for_target(&target, SEED + d as u64)?, steps)?;
        rates.push(proper_move_rate(&trace));
    }
    outcome(
        rates.iter().all(|r| *r >= limit),
        format!("proper-move rates {rates:.4?} (limit {limit:.4})"),
    )
}

/// Autocovariances sit under the geometric envelope at half the fitted conductance.
fn c10_covariance_envelope() -> Result<Outcome> {
    let target = LocalTarget::standard_normal(2)?;
    let trace = run_chain(&target, &WalkConfig::for_target(&target, SEED)?, 100_000)?;
    let xs: Vec<f64> = trace.states().skip(1).map(|s| s[0]).collect();
    let table = autocovariance(&xs, 50)?;
    let proxy = conductance_proxy(&table)?;
    let check = covariance_bound_check(&table, 0.5 * proxy.phi_hat)?;
    outcome(
        check.holds,
        format!(
            "phi_hat {:.4}; smallest margin {:.3e} at lag {}",
            proxy.phi_hat, check.margins[check.worst_lag], check.worst_lag
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("schedule formulas", c1_schedule),
        ("mixing-time scaling", c2_mixing),
        ("Gaussian localization is exact", c3_gaussian_exact),
        ("CLT trend in n", c4_clt_trend),
        ("MSE guarantee", c5_mse),
        ("Z-estimation consistency", c6_quantile),
        ("iso-perimetric fuzz", c7_isoperimetry),
        ("envelope lemma", c8_envelope),
        ("proper-move floor", c9_proper_moves),
        ("covariance envelope", c10_covariance_envelope),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let t0 = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "[{}] criterion {:>2}: {name} -- {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            t0.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
