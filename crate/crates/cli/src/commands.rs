use std::path::{Path, PathBuf};

use qbayes::dataset::{fmt_f64, Dataset};
use qbayes::diagnostics::{
    autocovariance, clt_fit, conductance_proxy, covariance_bound_check, iat, mixing_scaling, trace_autocovariance,
    tv_to_normal, tv_to_normal_exact, CltFit, ConductanceProxy,
};
use qbayes::estimator::qb_point_estimate;
use qbayes::isoperimetry::{fuzz_case, FactorKind};
use qbayes::models::{gen_synthetic, localize, Localized};
use qbayes::rng;
use qbayes::schedule::{gaussian_walk_phi, plan, warmness_log_bound, Method, PhiSource, ScheduleInputs, SchedulePlan};
use qbayes::walk::{proper_move_rate, run_chain, sigma_default_for, WalkConfig, Walker};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cli::{BenchCommand, Command, DiagnoseCommand, GenCommand, IsoCommand, ScheduleCommand};
use crate::config::{Config, ModelChoice};
use crate::error::{config_err, CliResult};
use crate::run::{output_root, Run};

// child streams of the master seed
const DATA: u64 = 0;
const CHAIN: u64 = 1;
const CLT: u64 = 2;
const PILOT: u64 = 3;
const TV: u64 = 4;

const DEFAULT_EPS: f64 = 0.01;
const DEFAULT_M: usize = 2_000;
const DEFAULT_TV_M: usize = 20_000;
const DEFAULT_PILOT: usize = 200_000;
const QUAD_TOL: f64 = 1e-9;

pub struct Outcome {
    pub dir: PathBuf,
    pub results: Value,
}

pub fn dispatch(command: Command) -> CliResult<Outcome> {
    match command {
        Command::Sample { common, model, walk } => {
            let mut cfg = common.load()?;
            model.apply(&mut cfg);
            walk.apply(&mut cfg);
            sample(cfg, common.out.as_deref())
        }
        Command::Estimate {
            common,
            model,
            walk,
            schedule,
            diag,
        } => {
            let mut cfg = common.load()?;
            model.apply(&mut cfg);
            walk.apply(&mut cfg);
            schedule.apply(&mut cfg);
            diag.apply(&mut cfg);
            estimate(cfg, common.out.as_deref())
        }
        Command::Schedule {
            command:
                ScheduleCommand::Plan {
                    common,
                    model,
                    walk,
                    schedule,
                    diag,
                },
        } => {
            let mut cfg = common.load()?;
            model.apply(&mut cfg);
            walk.apply(&mut cfg);
            schedule.apply(&mut cfg);
            diag.apply(&mut cfg);
            schedule_plan(cfg, common.out.as_deref())
        }
        Command::Diagnose { command } => match command {
            DiagnoseCommand::Clt {
                common,
                model,
                walk,
                diag,
            } => {
                let mut cfg = common.load()?;
                model.apply(&mut cfg);
                walk.apply(&mut cfg);
                diag.apply(&mut cfg);
                diagnose_clt(cfg, common.out.as_deref())
            }
            DiagnoseCommand::Tv {
                common,
                model,
                walk,
                diag,
            } => {
                let mut cfg = common.load()?;
                model.apply(&mut cfg);
                walk.apply(&mut cfg);
                diag.apply(&mut cfg);
                diagnose_tv(cfg, common.out.as_deref())
            }
            DiagnoseCommand::Conductance {
                common,
                model,
                walk,
                diag,
                phi,
            } => {
                let mut cfg = common.load()?;
                model.apply(&mut cfg);
                walk.apply(&mut cfg);
                diag.apply(&mut cfg);
                if phi.is_some() {
                    cfg.schedule.phi = phi;
                }
                diagnose_conductance(cfg, common.out.as_deref())
            }
        },
        Command::Bench {
            command: BenchCommand::Mixing { common, dims, steps },
        } => {
            let mut cfg = common.load()?;
            if dims.is_some() {
                cfg.diagnostics.dims = dims;
            }
            if steps.is_some() {
                cfg.walk.steps = steps;
            }
            bench_mixing(cfg, common.out.as_deref())
        }
        Command::Iso {
            command:
                IsoCommand::Verify {
                    common,
                    family,
                    beta,
                    dim,
                    cases,
                },
        } => {
            let mut cfg = common.load()?;
            let iso = &mut cfg.iso;
            iso.family = family.or(iso.family);
            iso.beta = beta.or(iso.beta);
            iso.dim = dim.or(iso.dim);
            iso.cases = cases.or(iso.cases);
            iso_verify(cfg, common.out.as_deref())
        }
        Command::Gen {
            command: GenCommand::Data { common, model },
        } => {
            let mut cfg = common.load()?;
            model.apply(&mut cfg);
            gen_data(cfg, common.out.as_deref())
        }
    }
}

/// Start a run, execute `body` in it, and close the manifest either way.
fn in_run(
    name: &str,
    mut cfg: Config,
    out: Option<&Path>,
    body: impl FnOnce(&Run, &Config) -> CliResult<Value>,
) -> CliResult<Outcome> {
    let seed = cfg.seed();
    let root = output_root(out, &cfg);
    let run = Run::start(&root, name, cfg.clone(), seed)?;
    let result = body(&run, &cfg).and_then(|v| {
        run.write_json("results.json", &v)?;
        Ok(v)
    });
    let dir = run.finish(result.is_ok())?;
    result.map(|results| Outcome { dir, results })
}

fn load_data(choice: &ModelChoice, seed: u64) -> CliResult<Dataset> {
    match &choice.data {
        Some(path) => {
            let data = Dataset::read_csv(path)?;
            if data.len() != choice.n {
                return config_err(format!(
                    "model.n is {} but {} has {} records",
                    choice.n,
                    path.display(),
                    data.len()
                ));
            }
            Ok(data)
        }
        None => Ok(gen_synthetic(&choice.descriptor, choice.n, rng::derive_seed(seed, DATA))?),
    }
}

fn build_model(choice: &ModelChoice, c: f64, seed: u64) -> CliResult<Localized> {
    let data = load_data(choice, seed)?;
    Ok(localize(&choice.descriptor, &data, c)?)
}

/// Fill `model.n` from a data file when only the file was given.
fn resolve_model(cfg: &mut Config) -> CliResult<ModelChoice> {
    if let (Some(path), None) = (&cfg.model.data, cfg.model.n) {
        cfg.model.n = Some(Dataset::read_csv(path)?.len());
    }
    cfg.model.resolve()
}

fn walk_config(cfg: &Config, model: &Localized, seed: u64) -> CliResult<WalkConfig> {
    let mut wc = WalkConfig::for_target(&model.target, seed)?;
    if let Some(s) = cfg.walk.sigma {
        wc.sigma = s;
    }
    Ok(wc)
}

fn sample(mut cfg: Config, out: Option<&Path>) -> CliResult<Outcome> {
    let choice = resolve_model(&mut cfg)?;
    let c = cfg.walk.c()?;
    cfg.walk.check_sigma()?;
    let steps = cfg.walk.steps(10_000)?;
    in_run("sample", cfg, out, |run, cfg| {
        let seed = cfg.seed.unwrap_or_default();
        let model = build_model(&choice, c, seed)?;
        let wc = walk_config(cfg, &model, rng::derive_seed(seed, CHAIN))?;
        let trace = run_chain(&model.target, &wc, steps)?;
        trace.save_csv(run.path("trace.csv"))?;

        let d = trace.dim();
        let mut mean = vec![0.0; d];
        for s in trace.states().skip(1) {
            mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= steps as f64);
        let theta = model.localization.to_theta(&mean);
        let rows: Vec<Vec<String>> = (0..d)
            .map(|j| vec![(j + 1).to_string(), fmt_f64(mean[j]), fmt_f64(theta[j])])
            .collect();
        run.write_csv("summary.csv", &["coordinate", "lambda_mean", "theta"], &rows)?;
        Ok(json!({
            "dim": d,
            "steps": steps,
            "sigma": wc.sigma,
            "radius": model.target.support().radius(),
            "acceptance_rate": trace.acceptance_rate(),
            "proper_move_rate": proper_move_rate(&trace),
            "lambda_mean": mean,
            "theta_mean": theta,
            "localization": model.localization,
        }))
    })
}

/// Where the schedule inputs came from.
#[derive(Debug, Serialize)]
struct Derivation {
    inputs: ScheduleInputs,
    #[serde(skip_serializing_if = "Option::is_none")]
    clt: Option<CltFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    proxy: Option<ConductanceProxy>,
}

/// Fill in `φ` and `ln M` from the model where the configuration leaves
/// them out: `ln M` from the warmness bound with a fitted `(ε₁, ε₂)`, `φ`
/// from the Gaussian-walk bound or a pilot chain's autocovariance decay.
fn derive_inputs(cfg: &Config, model: Option<&Localized>, g_bar_default: f64, seed: u64) -> CliResult<Derivation> {
    let s = &cfg.schedule;
    let eps = s.eps.unwrap_or(DEFAULT_EPS);
    let g_bar = s.g_bar.unwrap_or(g_bar_default);
    let gamma0 = s.gamma0.unwrap_or(g_bar * g_bar);
    let source = s.phi_source.unwrap_or(if s.phi.is_some() {
        PhiSource::User
    } else {
        PhiSource::Empirical
    });
    let need_model = || model.ok_or_else(|| crate::error::CliError::Config("a model is needed to derive φ or ln M".into()));

    let need_clt = s.ln_m.is_none() || (s.phi.is_none() && source == PhiSource::Theoretical);
    let clt = if need_clt {
        let t = &need_model()?.target;
        let m = cfg.diagnostics.m.unwrap_or(DEFAULT_M);
        Some(clt_fit(t, t.reference(), m, rng::derive_seed(seed, CLT))?)
    } else {
        None
    };
    let ln_m = match (s.ln_m, &clt) {
        (Some(v), _) => v,
        (None, Some(f)) => {
            let t = &need_model()?.target;
            warmness_log_bound(t.dim(), t.norm_k_j().powi(2), f.eps1, f.eps2)?
        }
        (None, None) => unreachable!("fit computed whenever ln M is missing"),
    };

    let mut proxy = None;
    let phi = match s.phi {
        Some(p) => p,
        None => {
            let model = need_model()?;
            let t = &model.target;
            let sigma = match cfg.walk.sigma {
                Some(v) => v,
                None => sigma_default_for(t)?,
            };
            match source {
                PhiSource::User => return config_err("schedule.phi is required when schedule.phi_source is user"),
                PhiSource::Theoretical => {
                    let beta = clt.as_ref().map_or(1.0, |f| f.beta);
                    gaussian_walk_phi(beta, sigma, t.reference().lambda_min())
                }
                PhiSource::Empirical => {
                    let steps = cfg.walk.steps.unwrap_or(DEFAULT_PILOT);
                    let mut wc = WalkConfig::for_target(t, 0)?;
                    wc.sigma = sigma;
                    let mut w = Walker::with_rng(t, &wc, rng::derive(seed, PILOT))?;
                    let warmup = cfg.diagnostics.warmup.unwrap_or(0);
                    for _ in 0..warmup {
                        w.step();
                    }
                    let series: Vec<f64> = (0..steps)
                        .map(|_| {
                            w.step();
                            w.state()[0]
                        })
                        .collect();
                    let maxlag = cfg.diagnostics.maxlag.unwrap_or(steps / 10);
                    let p = conductance_proxy(&autocovariance(&series, maxlag)?)?;
                    let phi = p.phi_hat;
                    proxy = Some(p);
                    phi
                }
            }
        }
    };
    let inputs = ScheduleInputs {
        phi,
        ln_m,
        g_bar,
        gamma0,
        eps,
        phi_source: source,
    };
    inputs.validate()?;
    Ok(Derivation { inputs, clt, proxy })
}

fn plan_json(p: &SchedulePlan) -> Value {
    json!({
        "method": p.method,
        "burn_in": p.burn_in,
        "draws": p.draws,
        "spacing": p.spacing,
        "phi_source": p.phi_source,
        "total_steps": p.total_steps(),
    })
}

fn estimate(mut cfg: Config, out: Option<&Path>) -> CliResult<Outcome> {
    let choice = resolve_model(&mut cfg)?;
    let c = cfg.walk.c()?;
    cfg.walk.check_sigma()?;
    cfg.schedule.check()?;
    let method = *cfg.schedule.method.get_or_insert(Method::LongRun);
    let fixed = match cfg.schedule.draws {
        Some(draws) => {
            let burn_in = *cfg.schedule.burn_in.get_or_insert(0);
            let spacing = *cfg.schedule.spacing.get_or_insert(1);
            Some(SchedulePlan::fixed(method, burn_in, draws, spacing)?)
        }
        None => {
            cfg.schedule.eps.get_or_insert(DEFAULT_EPS);
            None
        }
    };
    in_run("estimate", cfg, out, |run, cfg| {
        let seed = cfg.seed.unwrap_or_default();
        let model = build_model(&choice, c, seed)?;
        let (p, derivation) = match fixed {
            Some(p) => (p, None),
            None => {
                // coordinates are bounded by the support radius
                let radius = model.target.support().radius();
                let d = derive_inputs(cfg, Some(&model), radius, seed)?;
                (plan(method, &d.inputs)?, Some(d))
            }
        };
        let (theta, report) = qb_point_estimate(&model, &p, cfg.walk.sigma, rng::derive_seed(seed, CHAIN))?;
        let rows: Vec<Vec<String>> = (0..theta.len())
            .map(|j| vec![(j + 1).to_string(), fmt_f64(report.estimates[j]), fmt_f64(theta[j])])
            .collect();
        run.write_csv("estimates.csv", &["coordinate", "lambda_mean", "theta_hat"], &rows)?;
        Ok(json!({
            "theta_hat": theta,
            "plan": plan_json(&p),
            "schedule": derivation,
            "diagnostics": {
                "sigma": report.sigma,
                "steps": report.steps,
                "acceptance_rate": report.acceptance_rate,
                "proper_move_rate": report.proper_rate,
                "iat": report.iat,
            },
            "lambda_mean": report.estimates,
            "localization": model.localization,
            "seed": seed,
        }))
    })
}

fn schedule_plan(mut cfg: Config, out: Option<&Path>) -> CliResult<Outcome> {
    cfg.schedule.check()?;
    if cfg.schedule.draws.is_some() {
        return config_err("schedule.draws fixes the plan; schedule plan derives it");
    }
    cfg.schedule.eps.get_or_insert(DEFAULT_EPS);
    cfg.schedule.g_bar.get_or_insert(1.0);
    let needs_model = cfg.schedule.phi.is_none() || cfg.schedule.ln_m.is_none();
    let model_setup = if needs_model {
        Some((resolve_model(&mut cfg)?, cfg.walk.c()?))
    } else {
        None
    };
    let methods: Vec<Method> = match cfg.schedule.method {
        Some(m) => vec![m],
        None => Method::ALL.to_vec(),
    };
    in_run("schedule plan", cfg, out, |_, cfg| {
        let seed = cfg.seed.unwrap_or_default();
        let model = match &model_setup {
            Some((choice, c)) => Some(build_model(choice, *c, seed)?),
            None => None,
        };
        let d = derive_inputs(cfg, model.as_ref(), 1.0, seed)?;
        let plans = methods
            .iter()
            .map(|&m| plan(m, &d.inputs).map(|p| plan_json(&p)))
            .collect::<qbayes::Result<Vec<_>>>()?;
        Ok(json!({ "inputs": d.inputs, "clt": d.clt, "proxy": d.proxy, "plans": plans }))
    })
}

fn diagnose_clt(mut cfg: Config, out: Option<&Path>) -> CliResult<Outcome> {
    let choice = resolve_model(&mut cfg)?;
    let c = cfg.walk.c()?;
    let m = *cfg.diagnostics.m.get_or_insert(DEFAULT_M);
    in_run("diagnose clt", cfg, out, |_, cfg| {
        let seed = cfg.seed.unwrap_or_default();
        let model = build_model(&choice, c, seed)?;
        let t = &model.target;
        let fit = clt_fit(t, t.reference(), m, rng::derive_seed(seed, CLT))?;
        let nkj_sq = t.norm_k_j().powi(2);
        let ln_m = if fit.infinite {
            None
        } else {
            Some(warmness_log_bound(t.dim(), nkj_sq, fit.eps1, fit.eps2)?)
        };
        Ok(json!({
            "fit": fit,
            "dim": t.dim(),
            "radius": t.support().radius(),
            "norm_k_j": t.norm_k_j(),
            "lambda_min": t.reference().lambda_min(),
            "lambda_max": t.reference().lambda_max(),
            "ln_m": ln_m,
        }))
    })
}

fn diagnose_tv(mut cfg: Config, out: Option<&Path>) -> CliResult<Outcome> {
    let choice = resolve_model(&mut cfg)?;
    let c = cfg.walk.c()?;
    let m = *cfg.diagnostics.m.get_or_insert(DEFAULT_TV_M);
    let exact = *cfg.diagnostics.exact.get_or_insert(false);
    if exact && choice.descriptor.dim() > 2 {
        return config_err("diagnostics.exact needs dimension 1 or 2");
    }
    in_run("diagnose tv", cfg, out, |_, cfg| {
        let seed = cfg.seed.unwrap_or_default();
        let model = build_model(&choice, c, seed)?;
        let t = &model.target;
        let l1 = tv_to_normal(t, t.reference(), m, rng::derive_seed(seed, TV))?;
        let l1_exact = if exact {
            Some(tv_to_normal_exact(t, t.reference(), QUAD_TOL)?)
        } else {
            None
        };
        Ok(json!({
            "l1_distance": l1,
            "total_variation": l1 / 2.0,
            "l1_distance_quadrature": l1_exact,
            "samples": m,
            "dim": t.dim(),
            "n": choice.n,
        }))
    })
}

fn diagnose_conductance(mut cfg: Config, out: Option<&Path>) -> CliResult<Outcome> {
    let choice = resolve_model(&mut cfg)?;
    let c = cfg.walk.c()?;
    cfg.walk.check_sigma()?;
    cfg.schedule.check()?;
    let steps = cfg.walk.steps(DEFAULT_PILOT)?;
    let warmup = *cfg.diagnostics.warmup.get_or_insert(0);
    if warmup >= steps {
        return config_err("diagnostics.warmup must be smaller than walk.steps");
    }
    let maxlag = *cfg.diagnostics.maxlag.get_or_insert((steps - warmup) / 10);
    in_run("diagnose conductance", cfg, out, |run, cfg| {
        let seed = cfg.seed.unwrap_or_default();
        let model = build_model(&choice, c, seed)?;
        let wc = walk_config(cfg, &model, rng::derive_seed(seed, CHAIN))?;
        let trace = run_chain(&model.target, &wc, steps)?;
        // skip the initial state as well as the warmup
        let table = trace_autocovariance(&trace, |s| s[0], warmup + 1, maxlag)?;
        let proxy = conductance_proxy(&table)?;
        let phi = cfg.schedule.phi.unwrap_or(proxy.phi_hat);
        let check = covariance_bound_check(&table, phi)?;
        let floor = table.noise_floor();
        let g0 = table.gamma[0];
        let rho = 1.0 - phi * phi / 2.0;
        let rows: Vec<Vec<String>> = table
            .gamma
            .iter()
            .enumerate()
            .map(|(k, g)| vec![k.to_string(), fmt_f64(*g), fmt_f64(rho.powi(k as i32) * g0 + floor)])
            .collect();
        run.write_csv("autocovariance.csv", &["lag", "gamma", "envelope"], &rows)?;
        Ok(json!({
            "proxy": proxy,
            "iat": iat(&table),
            "phi_checked": phi,
            "covariance_check": { "holds": check.holds, "worst_lag": check.worst_lag, "worst_margin": check.margins[check.worst_lag] },
            "sigma": wc.sigma,
            "steps": steps,
            "acceptance_rate": trace.acceptance_rate(),
        }))
    })
}

fn bench_mixing(mut cfg: Config, out: Option<&Path>) -> CliResult<Outcome> {
    let dims = cfg.diagnostics.dims.get_or_insert_with(|| vec![2, 4, 8, 16, 32]).clone();
    let steps = cfg.walk.steps(200_000)?;
    in_run("bench mixing", cfg, out, |run, cfg| {
        let seed = cfg.seed.unwrap_or_default();
        let scaling = mixing_scaling(&dims, steps, seed)?;
        let rows: Vec<Vec<String>> = scaling
            .rows
            .iter()
            .map(|r| vec![r.dim.to_string(), fmt_f64(r.iat)])
            .collect();
        run.write_csv("mixing.csv", &["dim", "iat"], &rows)?;
        Ok(serde_json::to_value(&scaling)?)
    })
}

fn iso_verify(mut cfg: Config, out: Option<&Path>) -> CliResult<Outcome> {
    let iso = &mut cfg.iso;
    let family = *iso.family.get_or_insert(FactorKind::Step);
    let beta = *iso.beta.get_or_insert(1.0);
    let dim = *iso.dim.get_or_insert(1);
    let cases = *iso.cases.get_or_insert(100);
    if !(beta > 0.0 && beta <= 1.0) {
        return config_err(format!("iso.beta must lie in (0, 1], got {beta}"));
    }
    if !(1..=2).contains(&dim) {
        return config_err(format!("iso.dim must be 1 or 2, got {dim}"));
    }
    in_run("iso verify", cfg, out, |run, cfg| {
        let mut g = rng::derive(cfg.seed.unwrap_or_default(), 0);
        let mut rows = Vec::new();
        let mut violations = 0usize;
        let mut min_margin = f64::INFINITY;
        for case in 0..cases {
            for (k, check) in fuzz_case(family, beta, dim, &mut g)?.into_iter().enumerate() {
                violations += usize::from(!check.holds);
                min_margin = min_margin.min(check.margin());
                let form = if k == 0 { "gaussian" } else { "one_dim" };
                rows.push(vec![
                    case.to_string(),
                    form.to_string(),
                    fmt_f64(check.lhs),
                    fmt_f64(check.rhs),
                    fmt_f64(check.margin()),
                    u8::from(check.holds).to_string(),
                ]);
            }
        }
        run.write_csv("cases.csv", &["case", "form", "lhs", "rhs", "margin", "holds"], &rows)?;
        Ok(json!({
            "family": family,
            "beta": beta,
            "dim": dim,
            "cases": cases,
            "checks": rows.len(),
            "violations": violations,
            "min_margin": min_margin,
        }))
    })
}

fn gen_data(mut cfg: Config, out: Option<&Path>) -> CliResult<Outcome> {
    if cfg.model.data.is_some() {
        return config_err("gen data draws its own data; drop model.data");
    }
    let choice = cfg.model.resolve()?;
    in_run("gen data", cfg, out, |run, cfg| {
        let data = load_data(&choice, cfg.seed.unwrap_or_default())?;
        data.write_csv(run.path("data.csv"))?;
        Ok(json!({
            "model": choice.descriptor,
            "n": data.len(),
            "columns": data.columns(),
            "mean": data.mean(),
        }))
    })
}
