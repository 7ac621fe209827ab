//! Model-to-estimate checks that cross module boundaries.
//!
//! Several of these use a unit proposal scale. The default step size is
//! small enough that a chain of 10⁵ steps barely decorrelates, so bands
//! derived from i.i.d. noise would not apply to it.

use nalgebra::{DMatrix, DVector};
use qbayes::diagnostics::{clt_fit, tv_to_normal};
use qbayes::estimator::qb_point_estimate;
use qbayes::models::{
    gen_synthetic, localize, make_curved_target, CurvedSpec, ExpFamilySpec, Localization, ModelDescriptor,
};
use qbayes::schedule::{Method, SchedulePlan};
use qbayes::walk::{run_chain, WalkConfig};
use qbayes::{rng, LocalTarget};
use statrs::distribution::{ContinuousCDF, Normal};

fn unit_walk(target: &LocalTarget, seed: u64) -> WalkConfig {
    WalkConfig {
        sigma: 1.0,
        ..WalkConfig::for_target(target, seed).unwrap()
    }
}

#[test]
fn chain_mean_of_standard_normal() {
    let target = LocalTarget::standard_normal(1).unwrap();
    let trace = run_chain(&target, &unit_walk(&target, 11), 100_000).unwrap();
    let xs: Vec<f64> = trace.states().skip(1_000).map(|s| s[0]).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!(mean.abs() < 0.05, "mean {mean}");
}

#[test]
fn thinned_chain_follows_the_truncated_normal() {
    // standard normal restricted to [-2, 2]
    let target = LocalTarget::standard_normal(1).unwrap();
    let r = target.support().radius();
    let trace = run_chain(&target, &unit_walk(&target, 12), 200_000).unwrap();
    let mut xs: Vec<f64> = trace.states().skip(1_000).step_by(40).map(|s| s[0]).collect();
    xs.sort_by(f64::total_cmp);
    let nd = Normal::standard();
    let (lo, mass) = (nd.cdf(-r), nd.cdf(r) - nd.cdf(-r));
    let n = xs.len() as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (nd.cdf(x) - lo) / mass;
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    // 1% critical value of the Kolmogorov distribution
    assert!(ks < 1.63 / n.sqrt(), "KS statistic {ks} over {n} draws");
}

#[test]
fn gaussian_location_estimate_recovers_the_sample_mean() {
    let n = 10_000;
    let model = ModelDescriptor::GaussianLocation { dim: 2, theta0: Some(vec![0.3, -1.0]) };
    let data = gen_synthetic(&model, n, 21).unwrap();
    let loc = localize(&model, &data, 2.0).unwrap();
    let plan = SchedulePlan::fixed(Method::LongRun, 1_000, 100_000, 1).unwrap();
    let (theta, _) = qb_point_estimate(&loc, &plan, Some(1.0), 22).unwrap();
    let xbar = data.mean();
    let dist = theta.iter().zip(&xbar).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(dist <= 0.02 / (n as f64).sqrt(), "‖θ̂ − X̄‖ = {dist}");
}

#[test]
fn linear_moment_estimates_are_root_n_consistent() {
    let (d, n, reps) = (2, 500, 50);
    let theta0 = vec![1.0, -0.5];
    let model = ModelDescriptor::LinearRegression {
        dim: d,
        theta0: Some(theta0.clone()),
        noise_sd: 1.0,
    };
    let plan = SchedulePlan::fixed(Method::LongRun, 500, 20_000, 1).unwrap();
    let mut sse = vec![0.0; d];
    for r in 0..reps {
        let data = gen_synthetic(&model, n, rng::derive_seed(31, r)).unwrap();
        let loc = localize(&model, &data, 2.0).unwrap();
        let (theta, _) = qb_point_estimate(&loc, &plan, Some(1.0), rng::derive_seed(32, r)).unwrap();
        for j in 0..d {
            sse[j] += (theta[j] - theta0[j]).powi(2);
        }
    }
    let limit = 3.0 * (d as f64 / n as f64).sqrt();
    for s in sse {
        let rmse = (s / reps as f64).sqrt();
        assert!(rmse <= limit, "RMSE {rmse} above {limit}");
    }
}

#[test]
fn poisson_target_approaches_its_normal_limit() {
    let model = ModelDescriptor::Poisson { dim: 2, theta0: Some(vec![0.5, 1.0]) };
    let tv = |n: usize| {
        let data = gen_synthetic(&model, n, 41).unwrap();
        let t = localize(&model, &data, 2.0).unwrap().target;
        tv_to_normal(&t, t.reference(), 20_000, 42).unwrap()
    };
    let (small, large) = (tv(100), tv(10_000));
    assert!(large < small, "{large} is not below {small}");
}

#[test]
fn jump_in_the_curved_map_shows_up_in_eps1() {
    let (n, delta) = (2_000usize, 0.1);
    let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 0.0, 1.5, 0.4, -0.3]);
    let eta0 = vec![0.1, 0.2];
    let jump = delta / (n as f64).sqrt();
    let (gm, e0) = (g.clone(), eta0[0]);
    let spec = CurvedSpec::new(
        ExpFamilySpec::gaussian_location(3),
        2,
        move |eta| {
            let mut t = (&gm * DVector::from_column_slice(eta)).as_slice().to_vec();
            if eta[0] > e0 {
                t[0] += jump;
            }
            t
        },
        g.clone(),
    )
    .unwrap();
    let theta0 = (&g * DVector::from_vec(eta0.clone())).as_slice().to_vec();
    let data = gen_synthetic(&ModelDescriptor::GaussianLocation { dim: 3, theta0: Some(theta0) }, n, 51).unwrap();
    let s = spec.first_order_s(&data, &eta0).unwrap();
    let loc = Localization::known(eta0, s, n).unwrap();
    let t = make_curved_target(&spec, &data, &loc, 2.0).unwrap();
    let fit = clt_fit(&t, t.reference(), 4_000, 52).unwrap();
    assert!(fit.eps1 > 0.0);
    assert!(fit.eps1 <= 4.0 * delta * 2f64.sqrt(), "eps1 {}", fit.eps1);
}
