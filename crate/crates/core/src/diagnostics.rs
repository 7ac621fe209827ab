//! Checks on how close a localized target is to its normal limit, and on how
//! fast the walk mixes.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::quadrature;
use crate::rng::{self, StreamRng};
use crate::schedule::beta_factor;
use crate::target::{norm_sq, LocalTarget, NormalReference};
use crate::walk::{sigma_default_for, ChainTrace, Walker, WalkConfig};

/// Fitted log-quadratic approximation errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltFit {
    pub eps1: f64,
    pub eps2: f64,
    pub beta: f64,
    /// Number of evaluation points, anchors included.
    pub samples: usize,
    /// Point with the largest absolute residual.
    pub max_residual_at: Vec<f64>,
    pub max_residual: f64,
    /// Set when some residual was infinite; `eps1` is then `+∞` and `beta` 0.
    pub infinite: bool,
}

/// Uniform draw from the ball of radius `r` in `d` dimensions.
fn uniform_in_ball(d: usize, r: f64, rng: &mut StreamRng) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm_sq(&z).sqrt();
        if n == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        let scale = r * u.powf(1.0 / d as f64) / n;
        return z.into_iter().map(|v| v * scale).collect();
    }
}

/// Fit `(ε₁, ε₂)` in `|ln ℓ(λ) + ½λ'Jλ| ≤ ε₁ + ε₂·λ'Jλ/2` over `m` uniform
/// points of `K`, the origin and the two boundary points along `J`'s top
/// eigenvector, minimizing `ε₁ + ε₂‖K‖²_J/2`.
///
/// Since every `λ'Jλ ≤ ‖K‖²_J`, trading `ε₁` for `ε₂` is often free; ties
/// are broken toward the larger `ε₂`, which keeps `ε₁` small.
pub fn clt_fit(target: &LocalTarget, reference: &NormalReference, m: usize, seed: u64) -> Result<CltFit> {
    if m < 10 {
        return arg(format!("clt_fit needs at least 10 samples, got {m}"));
    }
    if reference.dim() != target.dim() {
        return arg("reference dimension differs from the target");
    }
    let d = target.dim();
    let r = target.support().radius();
    let mut rng = rng::stream(seed);
    let mut points = Vec::with_capacity(m + 3);
    points.push(vec![0.0; d]);
    let v = reference.top_eigenvector();
    points.push(v.iter().map(|x| x * r).collect());
    points.push(v.iter().map(|x| -x * r).collect());
    for _ in 0..m {
        points.push(uniform_in_ball(d, r, &mut rng));
    }
    // keep the anchors inside the closed ball despite rounding
    for p in points.iter_mut().skip(1).take(2) {
        let n = norm_sq(p).sqrt();
        if n > r {
            p.iter_mut().for_each(|x| *x *= r / n);
        }
    }

    let norm_kj_sq = reference.norm_k_j(target.support()).powi(2);
    let mut a = Vec::with_capacity(points.len());
    let mut b = Vec::with_capacity(points.len());
    let (mut worst, mut worst_at) = (-1.0f64, 0usize);
    let mut infinite = false;
    for (i, p) in points.iter().enumerate() {
        let q = reference.quad_form(p);
        let res = (target.log_ell(p) + 0.5 * q).abs();
        if !res.is_finite() {
            infinite = true;
        }
        if res > worst || res.is_nan() {
            worst = res;
            worst_at = i;
        }
        a.push(res);
        b.push(q / 2.0);
    }
    if infinite {
        return Ok(CltFit {
            eps1: f64::INFINITY,
            eps2: 0.0,
            beta: 0.0,
            samples: points.len(),
            max_residual_at: points[worst_at].clone(),
            max_residual: worst,
            infinite: true,
        });
    }
    let eps2 = best_eps2(&a, &b, norm_kj_sq / 2.0);
    let eps1 = a.iter().zip(&b).map(|(ai, bi)| ai - bi * eps2).fold(0.0, f64::max);
    Ok(CltFit {
        eps1,
        eps2,
        beta: beta_factor(eps1, eps2, norm_kj_sq),
        samples: points.len(),
        max_residual_at: points[worst_at].clone(),
        max_residual: worst,
        infinite: false,
    })
}

/// Minimize `F(x) = max(0, maxᵢ(aᵢ − bᵢx)) + c·x` over `x ≥ 0`.
///
/// `F` is convex and piecewise linear; its minimum sits at `x = 0` or at a
/// breakpoint of the upper envelope of the lines `aᵢ − bᵢx` and `0`.
fn best_eps2(a: &[f64], b: &[f64], c: f64) -> f64 {
    // lines y = slope·x + icpt, sorted by slope, keeping the top intercept per slope
    let mut lines: Vec<(f64, f64)> = a.iter().zip(b).map(|(ai, bi)| (-bi, *ai)).collect();
    lines.push((0.0, 0.0));
    lines.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let mut uniq: Vec<(f64, f64)> = Vec::with_capacity(lines.len());
    for l in lines {
        if let Some(last) = uniq.last_mut() {
            if last.0 == l.0 {
                *last = l;
                continue;
            }
        }
        uniq.push(l);
    }
    let cross = |l1: (f64, f64), l2: (f64, f64)| (l1.1 - l2.1) / (l2.0 - l1.0);
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for l in uniq {
        while hull.len() >= 2 {
            let n = hull.len();
            if cross(hull[n - 2], l) <= cross(hull[n - 2], hull[n - 1]) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(l);
    }
    let mut candidates = vec![0.0];
    for w in hull.windows(2) {
        let x = cross(w[0], w[1]);
        if x > 0.0 && x.is_finite() {
            candidates.push(x);
        }
    }
    let envelope = |x: f64| hull.iter().map(|l| l.0 * x + l.1).fold(0.0, f64::max);
    let objective = |x: f64| envelope(x) + c * x;
    let mut best = (objective(0.0), 0.0);
    for &x in &candidates {
        let f = objective(x);
        let tol = 1e-12 * best.0.abs().max(f.abs()) + 1e-300;
        if f < best.0 - tol || (f <= best.0 + tol && x > best.1 + 1e-12) {
            best = (f.min(best.0), x);
        }
    }
    best.1
}

/// Self-normalized importance estimate of `∫_K |f − φ_K|`, where `f` is the
/// normalized target on `K` and `φ_K` the normal reference restricted to `K`.
pub fn tv_to_normal(target: &LocalTarget, reference: &NormalReference, m: usize, seed: u64) -> Result<f64> {
    if m < 1000 {
        return arg(format!("tv_to_normal needs at least 1000 draws, got {m}"));
    }
    let d = target.dim();
    if reference.dim() != d {
        return arg("reference dimension differs from the target");
    }
    let l = reference.cholesky_lower();
    let lt = l.transpose();
    let mut rng = rng::stream(seed);
    let mut logw = Vec::with_capacity(m);
    let mut z = nalgebra::DVector::zeros(d);
    let mut attempts = 0usize;
    while logw.len() < m {
        attempts += 1;
        if attempts > 1000 * m {
            return Err(Error::Numerical("normal reference puts almost no mass on K".into()));
        }
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        // λ = L'^{-1} z has covariance J^{-1}
        let lam = lt
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        let lam = lam.as_slice();
        if !target.support().contains(lam) {
            continue;
        }
        logw.push(target.log_ell(lam) + 0.5 * reference.quad_form(lam));
    }
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY || top.is_nan() {
        return Err(Error::Numerical("all importance weights are zero".into()));
    }
    let w: Vec<f64> = logw.iter().map(|lw| (lw - top).exp()).collect();
    let mean = w.iter().sum::<f64>() / m as f64;
    Ok(w.iter().map(|wi| (wi / mean - 1.0).abs()).sum::<f64>() / m as f64)
}

/// `∫_K |f − φ_K|` by adaptive quadrature; `d ≤ 2` only.
pub fn tv_to_normal_exact(target: &LocalTarget, reference: &NormalReference, tol: f64) -> Result<f64> {
    let d = target.dim();
    let r = target.support().radius();
    let ell = |p: &[f64]| target.log_ell(p).exp();
    let phi = |p: &[f64]| (-0.5 * reference.quad_form(p)).exp();
    match d {
        1 => {
            let zf = quadrature::integrate(|x| ell(&[x]), -r, r, &[0.0], tol)?;
            let zp = quadrature::integrate(|x| phi(&[x]), -r, r, &[0.0], tol)?;
            check_mass(zf)?;
            quadrature::integrate(|x| (ell(&[x]) / zf - phi(&[x]) / zp).abs(), -r, r, &[0.0], tol)
        }
        2 => {
            let chord = move |x: f64| {
                let w = (r * r - x * x).max(0.0).sqrt();
                vec![-w, w]
            };
            let disc = |f: &dyn Fn(f64, f64) -> f64, tol: f64| {
                quadrature::integrate_2d(
                    |x, y| if x * x + y * y <= r * r { f(x, y) } else { 0.0 },
                    (-r, r),
                    (-r, r),
                    &[0.0],
                    chord,
                    tol,
                )
            };
            let zf = disc(&|x, y| ell(&[x, y]), tol)?;
            let zp = disc(&|x, y| phi(&[x, y]), tol)?;
            check_mass(zf)?;
            disc(&|x, y| (ell(&[x, y]) / zf - phi(&[x, y]) / zp).abs(), tol)
        }
        _ => Err(Error::Unsupported(format!("quadrature TV needs d ≤ 2, got {d}"))),
    }
}

fn check_mass(z: f64) -> Result<()> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Numerical(format!("target mass on K is {z}")));
    }
    Ok(())
}

/// Biased (`1/N`) autocovariances `γ̂_0 … γ̂_maxlag` of a scalar series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoCovTable {
    pub gamma: Vec<f64>,
    /// Series length after burn-in removal.
    pub n: usize,
}

impl AutoCovTable {
    pub fn maxlag(&self) -> usize {
        self.gamma.len() - 1
    }

    /// `3γ̂₀/√N`.
    pub fn noise_floor(&self) -> f64 {
        3.0 * self.gamma[0] / (self.n as f64).sqrt()
    }
}

/// Autocovariances via FFT.
pub fn autocovariance(series: &[f64], maxlag: usize) -> Result<AutoCovTable> {
    let n = series.len();
    if n == 0 || n < 10 * maxlag {
        return arg(format!(
            "autocovariance up to lag {maxlag} needs at least {} values, got {n}",
            10 * maxlag.max(1)
        ));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    let mut gamma: Vec<f64> = buf[..=maxlag].iter().map(|c| c.re * scale).collect();
    if gamma[0] < 0.0 {
        gamma[0] = 0.0;
    }
    // a constant series has no spread; clear FFT round-off
    if series.iter().all(|v| *v == series[0]) {
        gamma.iter_mut().for_each(|g| *g = 0.0);
    }
    Ok(AutoCovTable { gamma, n })
}

/// Autocovariances of `g` along a chain after dropping `burn_in` states.
pub fn trace_autocovariance(
    trace: &ChainTrace,
    g: impl Fn(&[f64]) -> f64,
    burn_in: usize,
    maxlag: usize,
) -> Result<AutoCovTable> {
    let values: Vec<f64> = trace.states().skip(burn_in).map(g).collect();
    autocovariance(&values, maxlag)
}

/// Geometric-decay proxy for the conductance.
///
/// This is a heuristic: the autocovariance envelope only bounds `|γ_k|` from
/// above, so a fitted decay rate is an optimistic conductance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceProxy {
    pub rho_hat: f64,
    pub phi_hat: f64,
    /// Lags entering the fit (0 through the last usable lag).
    pub lags_used: usize,
    pub r_squared: f64,
    /// No lag beyond 0 rose above the noise floor; `rho_hat` set to 0.
    pub below_floor: bool,
    pub heuristic: bool,
}

/// Least-squares slope of `ln γ̂_k − ln γ̂₀` on `k` (no intercept) over the
/// leading run of lags above the noise floor; `ρ̂ = exp(slope)`, raised if
/// necessary so that `ρ̂^k·γ̂₀` plus the floor covers each fitted lag;
/// `φ̂ = min(1, sqrt(2(1 − ρ̂)))`.
pub fn conductance_proxy(table: &AutoCovTable) -> Result<ConductanceProxy> {
    let g0 = table.gamma[0];
    if !(g0 > 0.0) {
        return arg("conductance proxy needs a positive lag-0 autocovariance");
    }
    if table.gamma.len() < 3 {
        return arg("conductance proxy needs a table with at least 3 lags");
    }
    let floor = table.noise_floor();
    let run = table.gamma[1..].iter().take_while(|g| **g > floor).count();
    if run == 0 {
        return Ok(ConductanceProxy {
            rho_hat: 0.0,
            phi_hat: 1.0,
            lags_used: 1,
            r_squared: 1.0,
            below_floor: true,
            heuristic: true,
        });
    }
    // the envelope starts at γ̂₀, so the line is pinned at lag 0
    let ln0 = g0.ln();
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, g) in table.gamma[1..=run].iter().enumerate() {
        let k = (k + 1) as f64;
        sxy += k * (g.ln() - ln0);
        sxx += k * k;
    }
    let slope = sxy / sxx;
    let ybar = table.gamma[..=run].iter().map(|g| g.ln()).sum::<f64>() / (run + 1) as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (k, g) in table.gamma[..=run].iter().enumerate() {
        let y = g.ln();
        ss_res += (y - ln0 - slope * k as f64).powi(2);
        ss_tot += (y - ybar).powi(2);
    }
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    // raise the rate where needed so the envelope covers every fitted lag
    let cover = table.gamma[1..=run]
        .iter()
        .enumerate()
        .filter(|(_, g)| **g > floor)
        .map(|(k, g)| ((g - floor) / g0).powf(1.0 / (k + 1) as f64) * (1.0 + 1e-12))
        .fold(0.0, f64::max);
    let rho = slope.exp().max(cover).clamp(0.0, 1.0 - 1e-12);
    Ok(ConductanceProxy {
        rho_hat: rho,
        phi_hat: (2.0 * (1.0 - rho)).sqrt().min(1.0),
        lags_used: run + 1,
        r_squared: r2,
        below_floor: false,
        heuristic: true,
    })
}

/// Slope and `R²` of an ordinary least-squares line.
fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, r2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub holds: bool,
    /// `(1−φ²/2)^k·γ̂₀ + 3γ̂₀/√N − |γ̂_k|` per lag; negative means violated.
    pub margins: Vec<f64>,
    pub worst_lag: usize,
}

/// Compare `|γ̂_k|` with the envelope `(1−φ²/2)^k·γ̂₀` plus the noise floor.
pub fn covariance_bound_check(table: &AutoCovTable, phi: f64) -> Result<CovarianceCheck> {
    if !(phi > 0.0 && phi <= 1.0) {
        return arg(format!("phi must lie in (0, 1], got {phi}"));
    }
    let g0 = table.gamma[0];
    let floor = table.noise_floor();
    let rate = 1.0 - phi * phi / 2.0;
    let margins: Vec<f64> = table
        .gamma
        .iter()
        .enumerate()
        .map(|(k, g)| rate.powi(k as i32) * g0 + floor - g.abs())
        .collect();
    let worst_lag = margins
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    Ok(CovarianceCheck {
        holds: margins.iter().all(|m| *m >= 0.0),
        margins,
        worst_lag,
    })
}

/// Integrated autocorrelation time `1 + 2Σ γ̂_k/γ̂₀`, truncated at the first
/// `k ≥ 1` with `γ̂_k + γ̂_{k+1} ≤ 0`; never below 1.
pub fn iat(table: &AutoCovTable) -> f64 {
    let g0 = table.gamma[0];
    if !(g0 > 0.0) {
        return 1.0;
    }
    let g = &table.gamma;
    let mut sum = 0.0;
    let mut k = 1;
    while k < g.len() {
        let next = g.get(k + 1).copied().unwrap_or(0.0);
        if g[k] + next <= 0.0 {
            break;
        }
        sum += g[k];
        k += 1;
    }
    (1.0 + 2.0 * sum / g0).max(1.0)
}

/// IAT of a series, using every lag the length allows.
pub fn series_iat(series: &[f64]) -> Result<f64> {
    let maxlag = (series.len() / 10).max(1).min(series.len().saturating_sub(1));
    if series.len() < 10 {
        return arg("IAT needs at least 10 values");
    }
    Ok(iat(&autocovariance(series, maxlag)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingRow {
    pub dim: usize,
    pub sigma: f64,
    pub burn_in: usize,
    pub steps: usize,
    pub iat: f64,
    pub acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingScaling {
    pub rows: Vec<MixingRow>,
    /// Least-squares slope of `ln τ̂` on `ln d`; absent for a single dimension.
    pub slope: Option<f64>,
}

/// For each `d`, run the default walk on the standard normal target for
/// `10d²` burn-in steps plus `steps`, and take the IAT of the first
/// coordinate. Dimensions run concurrently on independent streams.
pub fn mixing_scaling(dims: &[usize], steps: usize, master_seed: u64) -> Result<MixingScaling> {
    if dims.is_empty() || dims.contains(&0) {
        return arg("dims must be non-empty and at least 1");
    }
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return arg("dims must be strictly increasing");
    }
    if steps < 10 {
        return arg("need at least 10 steps per dimension");
    }
    let rows: Vec<Result<MixingRow>> = dims
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let target = LocalTarget::standard_normal(d)?;
            let config = WalkConfig::for_target(&target, 0)?;
            let mut w = Walker::with_rng(&target, &config, rng::derive(master_seed, i as u64))?;
            let burn_in = 10 * d * d;
            for _ in 0..burn_in {
                w.step();
            }
            let mut xs = Vec::with_capacity(steps);
            let mut acc = 0usize;
            for _ in 0..steps {
                acc += usize::from(w.step().accepted);
                xs.push(w.state()[0]);
            }
            Ok(MixingRow {
                dim: d,
                sigma: sigma_default_for(&target)?,
                burn_in,
                steps,
                iat: series_iat(&xs)?,
                acceptance: acc as f64 / steps as f64,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let slope = (rows.len() >= 2).then(|| {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.dim as f64).ln(), r.iat.ln())).collect();
        least_squares(&pts).0
    });
    Ok(MixingScaling { rows, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::SupportBall;
    use nalgebra::DMatrix;

    fn target_1d(log_ell: impl Fn(f64) -> f64 + Send + Sync + 'static) -> LocalTarget {
        let r = NormalReference::identity(1).unwrap();
        LocalTarget::new(SupportBall::new(1, 2.0).unwrap(), r, move |l| log_ell(l[0])).unwrap()
    }

    fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut g = rng::stream(seed);
        let s = (1.0 - rho * rho).sqrt();
        let mut x = g.sample::<f64, _>(StandardNormal);
        (0..n)
            .map(|_| {
                x = rho * x + s * g.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn clt_fit_exact_gaussian() {
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let t = LocalTarget::gaussian(NormalReference::new(j).unwrap(), 2.0).unwrap();
        let fit = clt_fit(&t, t.reference(), 500, 1).unwrap();
        assert!(fit.eps1 <= 1e-10 && fit.eps2 <= 1e-10);
        assert!((fit.beta - 1.0).abs() < 1e-10);
    }

    #[test]
    fn clt_fit_quadratic_residual() {
        let t = target_1d(|l| -0.5 * 1.1 * l * l);
        let fit = clt_fit(&t, t.reference(), 200, 2).unwrap();
        assert!(fit.eps1.abs() < 1e-12, "{fit:?}");
        assert!((fit.eps2 - 0.1).abs() < 1e-12, "{fit:?}");
        let nkj = t.norm_k_j().powi(2);
        assert_eq!(fit.beta, beta_factor(fit.eps1, fit.eps2, nkj));
    }

    #[test]
    fn clt_fit_constant_residual() {
        let t = target_1d(|l| -0.5 * l * l + 0.05 * l.signum() * f64::from(u8::from(l != 0.0)));
        let fit = clt_fit(&t, t.reference(), 200, 3).unwrap();
        assert!((fit.eps1 - 0.05).abs() < 1e-12 && fit.eps2 == 0.0, "{fit:?}");
    }

    #[test]
    fn clt_fit_flags_infinite_residuals() {
        let t = target_1d(|l| if l > 1.0 { f64::NEG_INFINITY } else { -0.5 * l * l });
        let fit = clt_fit(&t, t.reference(), 100, 4).unwrap();
        assert!(fit.infinite && fit.eps1.is_infinite() && fit.beta == 0.0);
        assert!(clt_fit(&t, t.reference(), 5, 4).is_err());
    }

    #[test]
    fn lp_matches_grid_search() {
        let t = target_1d(|l| -0.5 * l * l + 0.03 * (3.0 * l).sin() - 0.02 * l * l);
        let fit = clt_fit(&t, t.reference(), 50, 5).unwrap();
        let c = t.norm_k_j().powi(2) / 2.0;
        // rebuild the residual set the fit used
        let mut g = rng::stream(5);
        let r = t.support().radius();
        let mut pts = vec![0.0, r, -r];
        for _ in 0..50 {
            pts.push(uniform_in_ball(1, r, &mut g)[0]);
        }
        let res: Vec<(f64, f64)> = pts
            .iter()
            .map(|&l| ((t.log_ell(&[l]) + 0.5 * l * l).abs(), l * l / 2.0))
            .collect();
        let mut grid_best = f64::INFINITY;
        for i in 0..=200 {
            for k in 0..=200 {
                let (e1, e2) = (i as f64 * 0.001, k as f64 * 0.001);
                if res.iter().all(|(a, b)| *a <= e1 + e2 * b + 1e-12) {
                    grid_best = grid_best.min(e1 + e2 * c);
                }
            }
        }
        let obj = fit.eps1 + fit.eps2 * c;
        assert!(obj <= grid_best + 1e-6, "{obj} vs {grid_best}");
        for (a, b) in &res {
            assert!(*a <= fit.eps1 + fit.eps2 * b + 1e-12);
        }
    }

    #[test]
    fn tv_gaussian_is_small_and_shift_invariant() {
        let t = LocalTarget::standard_normal(2).unwrap();
        let v = tv_to_normal(&t, t.reference(), 10_000, 9).unwrap();
        assert!(v <= 0.01, "{v}");
        let t = target_1d(|l| -0.5 * (l - 0.3).powi(2));
        let a = tv_to_normal(&t, t.reference(), 5_000, 3).unwrap();
        let b = tv_to_normal(&t.shifted(17.5), t.reference(), 5_000, 3).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn tv_shifted_normal_matches_quadrature() {
        let r = NormalReference::identity(1).unwrap();
        let t = LocalTarget::new(SupportBall::new(1, 4.0).unwrap(), r, |l| -0.5 * (l[0] - 0.5).powi(2)).unwrap();
        // L1 distance is twice the total variation 2Φ(0.25) − 1 ≈ 0.1974, less
        // the tails beyond ±4
        let exact = tv_to_normal_exact(&t, t.reference(), 1e-10).unwrap();
        assert!((exact / 2.0 - 0.197).abs() < 0.002, "{exact}");
        let mc = tv_to_normal(&t, t.reference(), 20_000, 11).unwrap();
        assert!((mc / 2.0 - 0.197).abs() < 0.02, "{mc} vs {exact}");
        assert!(tv_to_normal_exact(&LocalTarget::standard_normal(3).unwrap(), &NormalReference::identity(3).unwrap(), 1e-8).is_err());
    }

    #[test]
    fn tv_errors_when_all_weights_vanish() {
        let t = target_1d(|_| f64::NEG_INFINITY);
        assert!(tv_to_normal(&t, t.reference(), 1000, 1).is_err());
        assert!(tv_to_normal(&t, t.reference(), 999, 1).is_err());
    }

    #[test]
    fn autocovariance_examples() {
        let mut g = rng::stream(4);
        let iid: Vec<f64> = (0..20_000).map(|_| g.sample(StandardNormal)).collect();
        let t = autocovariance(&iid, 50).unwrap();
        let floor = t.noise_floor();
        assert!(t.gamma[1..].iter().all(|x| x.abs() <= floor));
        assert!((iat(&t) - 1.0).abs() < 0.1);
        let p = conductance_proxy(&t).unwrap();
        assert_eq!(p.phi_hat, 1.0);
        assert!(covariance_bound_check(&t, 1.0).unwrap().holds);

        let c = autocovariance(&[2.5; 100], 5).unwrap();
        assert!(c.gamma.iter().all(|x| *x == 0.0));
        assert_eq!(iat(&c), 1.0);
        assert!(autocovariance(&[1.0; 10], 5).is_err());
    }

    #[test]
    fn autocovariance_matches_direct_sum() {
        let x = ar1(0.7, 500, 8);
        let t = autocovariance(&x, 20).unwrap();
        let m = x.iter().sum::<f64>() / 500.0;
        for k in 0..=20 {
            let direct: f64 = (0..500 - k).map(|i| (x[i] - m) * (x[i + k] - m)).sum::<f64>() / 500.0;
            assert!((direct - t.gamma[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn ar1_autocorrelation_iat_and_envelope() {
        let x = ar1(0.9, 100_000, 21);
        let t = autocovariance(&x, 50).unwrap();
        for k in 0..=20 {
            assert!((t.gamma[k] / t.gamma[0] - 0.9f64.powi(k as i32)).abs() < 0.05, "lag {k}");
        }
        assert!(!covariance_bound_check(&t, 0.8).unwrap().holds);
        assert!(covariance_bound_check(&t, 1e-6).unwrap().holds);
        let p = conductance_proxy(&t).unwrap();
        let chk = covariance_bound_check(&t, p.phi_hat).unwrap();
        assert!(chk.margins[..p.lags_used].iter().all(|m| *m >= 0.0));

        let x = ar1(0.5, 100_000, 22);
        let tau = iat(&autocovariance(&x, 100).unwrap());
        assert!((tau - 3.0).abs() < 0.3, "{tau}");
    }

    #[test]
    fn proxy_on_exact_geometric_decay() {
        let t = AutoCovTable {
            gamma: (0..60).map(|k| 0.98f64.powi(k)).collect(),
            n: 100_000_000,
        };
        let p = conductance_proxy(&t).unwrap();
        assert!((p.rho_hat - 0.98).abs() < 1e-12);
        assert!((p.phi_hat - 0.2).abs() < 1e-9);
        assert!(p.r_squared > 0.999_999);
        assert!(conductance_proxy(&AutoCovTable { gamma: vec![1.0, 0.5], n: 100 }).is_err());
        assert!(conductance_proxy(&AutoCovTable { gamma: vec![0.0; 5], n: 100 }).is_err());
    }

    #[test]
    fn mixing_table_is_deterministic() {
        let a = mixing_scaling(&[1, 3], 2_000, 5).unwrap();
        let b = mixing_scaling(&[1, 3], 2_000, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.rows.iter().all(|r| r.iat >= 1.0));
        assert!(mixing_scaling(&[4], 2_000, 5).unwrap().slope.is_none());
        assert!(mixing_scaling(&[4, 2], 100, 5).is_err());
    }
}
