//! Localized targets for exponential families, curved exponential families
//! and Z-estimation problems, plus synthetic data generators.
//!
//! Every model is localized around `center = base + s/√n`, where `base` is
//! the true parameter (synthetic data) or a pilot value and `s` is the
//! first-order approximation of the normalized estimator. The resulting
//! `ln ℓ` is normalized so that `ln ℓ(0) = 0`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::dataset::{Dataset, Schema, SchemaSpec};
use crate::error::{arg, Error, Result};
use crate::linalg::{check_min_eigen, normal_solve, symmetrize};
use crate::rng;
use crate::target::{LocalTarget, NormalReference, SupportBall};

/// Where a model is centered: `center = base + s/√n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub base: Vec<f64>,
    pub s: Vec<f64>,
    pub n: usize,
}

impl Localization {
    /// Centered at a known true value with first-order term `s`.
    pub fn known(theta0: Vec<f64>, s: Vec<f64>, n: usize) -> Result<Self> {
        if theta0.len() != s.len() {
            return arg("θ₀ and s must have the same dimension");
        }
        if n == 0 {
            return arg("sample size must be positive");
        }
        Ok(Self { base: theta0, s, n })
    }

    /// Centered at a pilot value, with `s = 0`.
    pub fn pilot(center: Vec<f64>, n: usize) -> Result<Self> {
        let s = vec![0.0; center.len()];
        Self::known(center, s, n)
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        let r = self.sqrt_n();
        self.base.iter().zip(&self.s).map(|(b, s)| b + s / r).collect()
    }

    /// Map a local parameter back to the original scale: `center + λ/√n`.
    pub fn to_theta(&self, lambda: &[f64]) -> Vec<f64> {
        let r = self.sqrt_n();
        self.center().iter().zip(lambda).map(|(c, l)| c + l / r).collect()
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Canonical exponential family `h(x; θ) = exp(x'θ − ψ(θ))` with a prior.
#[derive(Clone)]
pub struct ExpFamilySpec {
    pub dim: usize,
    pub psi: ScalarFn,
    pub grad_psi: VectorFn,
    pub hess_psi: MatrixFn,
    /// `ln π(θ)`; `None` is the flat prior.
    pub log_prior: Option<ScalarFn>,
}

impl ExpFamilySpec {
    /// Gaussian location family, `ψ(θ) = ‖θ‖²/2`.
    pub fn gaussian_location(dim: usize) -> Self {
        Self {
            dim,
            psi: Arc::new(|t: &[f64]| 0.5 * t.iter().map(|v| v * v).sum::<f64>()),
            grad_psi: Arc::new(|t: &[f64]| t.to_vec()),
            hess_psi: Arc::new(|t: &[f64]| DMatrix::identity(t.len(), t.len())),
            log_prior: None,
        }
    }

    /// Independent Poisson coordinates in the natural parameter, `ψ(θ) = Σ e^{θ_j}`.
    pub fn poisson(dim: usize) -> Self {
        Self {
            dim,
            psi: Arc::new(|t: &[f64]| t.iter().map(|v| v.exp()).sum::<f64>()),
            grad_psi: Arc::new(|t: &[f64]| t.iter().map(|v| v.exp()).collect()),
            hess_psi: Arc::new(|t: &[f64]| {
                DMatrix::from_diagonal(&DVector::from_iterator(t.len(), t.iter().map(|v| v.exp())))
            }),
            log_prior: None,
        }
    }

    pub fn with_log_prior(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.log_prior = Some(Arc::new(f));
        self
    }

    /// `s = ψ''(θ₀)⁻¹ √n (X̄ − ψ'(θ₀))`, the Newton step toward the maximum;
    /// `√n (X̄ − ψ'(θ₀))` when the information is the identity.
    pub fn first_order_s(&self, data: &Dataset, theta0: &[f64]) -> Result<Vec<f64>> {
        self.check_data(data)?;
        if theta0.len() != self.dim {
            return arg("θ₀ has the wrong dimension");
        }
        let mu = (self.grad_psi)(theta0);
        let rn = (data.len() as f64).sqrt();
        let dev = DVector::from_iterator(self.dim, data.mean().iter().zip(&mu).map(|(x, m)| rn * (x - m)));
        let chol = symmetrize((self.hess_psi)(theta0))
            .cholesky()
            .ok_or_else(|| Error::Numerical("ψ''(θ₀) is not positive definite".into()))?;
        Ok(chol.solve(&dev).as_slice().to_vec())
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.width() != self.dim {
            return arg(format!(
                "exponential family of dimension {} needs {}-column data, got {}",
                self.dim,
                self.dim,
                data.width()
            ));
        }
        Ok(())
    }
}

/// Localized posterior of a canonical exponential family:
///
/// `ln ℓ(λ) = √n X̄'λ − nψ(θ_c + λ/√n) + nψ(θ_c) + ln π(θ_c + λ/√n) − ln π(θ_c)`
///
/// with `J = ψ''(θ_c)` and `‖K‖ = C·sqrt(d/λ_min)`.
pub fn make_exp_target(
    spec: &ExpFamilySpec,
    data: &Dataset,
    loc: &Localization,
    c: f64,
) -> Result<LocalTarget> {
    spec.check_data(data)?;
    check_loc(loc, spec.dim, data)?;
    let center = loc.center();
    let reference = NormalReference::new(symmetrize((spec.hess_psi)(&center)))
        .map_err(|e| Error::Construction(format!("ψ'' at the localization center: {e}")))?;
    let support = SupportBall::new(spec.dim, reference.support_radius(c)?)?;

    let n = loc.n as f64;
    let rn = loc.sqrt_n();
    let xbar = data.mean();
    let psi = spec.psi.clone();
    let prior = spec.log_prior.clone();
    let psi_c = psi(&center);
    let prior_c = prior.as_ref().map_or(0.0, |p| p(&center));
    if !psi_c.is_finite() || !prior_c.is_finite() {
        return Err(Error::Construction("ψ or the prior is not finite at the center".into()));
    }
    let log_ell = move |lambda: &[f64]| {
        let theta: Vec<f64> = center.iter().zip(lambda).map(|(c, l)| c + l / rn).collect();
        let lin: f64 = xbar.iter().zip(lambda).map(|(x, l)| x * l).sum::<f64>() * rn;
        let mut v = lin - n * (psi(&theta) - psi_c);
        if let Some(p) = &prior {
            v += p(&theta) - prior_c;
        }
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    LocalTarget::new(support, reference, log_ell)
}

/// Curved exponential family `h(x; η) = exp(x'θ(η) − ψ(θ(η)))`.
#[derive(Clone)]
pub struct CurvedSpec {
    pub base: ExpFamilySpec,
    /// Dimension of η.
    pub param_dim: usize,
    pub theta_map: VectorFn,
    /// Linearization of `θ(·)` at `η₀`, `d × d₁`.
    pub g: DMatrix<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
}

impl CurvedSpec {
    pub fn new(
        base: ExpFamilySpec,
        param_dim: usize,
        theta_map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        g: DMatrix<f64>,
    ) -> Result<Self> {
        if g.nrows() != base.dim || g.ncols() != param_dim {
            return Err(Error::Construction(format!(
                "G must be {}x{}, got {}x{}",
                base.dim,
                param_dim,
                g.nrows(),
                g.ncols()
            )));
        }
        if param_dim == 0 || param_dim > base.dim {
            return Err(Error::Construction("need 1 ≤ d₁ ≤ d".into()));
        }
        check_min_eigen(&(g.transpose() * &g), 1e-8, "G'G")?;
        Ok(Self {
            base,
            param_dim,
            theta_map: Arc::new(theta_map),
            g,
            delta1: None,
            delta2: None,
        })
    }

    /// `G'ψ''G`, which is `G'G` under the unit-information normalization.
    fn information(&self, eta: &[f64]) -> DMatrix<f64> {
        let h = (self.base.hess_psi)(&(self.theta_map)(eta));
        symmetrize(self.g.transpose() * h * &self.g)
    }

    /// `s = (G'HG)⁻¹ G' √n (X̄ − ψ'(θ(η₀)))`.
    pub fn first_order_s(&self, data: &Dataset, eta0: &[f64]) -> Result<Vec<f64>> {
        self.base.check_data(data)?;
        if eta0.len() != self.param_dim {
            return arg("η₀ has the wrong dimension");
        }
        let mu = (self.base.grad_psi)(&(self.theta_map)(eta0));
        let rn = (data.len() as f64).sqrt();
        let dev: Vec<f64> = data.mean().iter().zip(&mu).map(|(x, m)| rn * (x - m)).collect();
        let info = self.information(eta0);
        let rhs = self.g.transpose() * DVector::from_vec(dev);
        let chol = info
            .cholesky()
            .ok_or_else(|| Error::Numerical("G'HG is not positive definite".into()))?;
        Ok(chol.solve(&rhs).as_slice().to_vec())
    }
}

/// Localized posterior of a curved family over `γ`, with `J = G'ψ''G`.
pub fn make_curved_target(
    spec: &CurvedSpec,
    data: &Dataset,
    loc: &Localization,
    c: f64,
) -> Result<LocalTarget> {
    spec.base.check_data(data)?;
    check_loc(loc, spec.param_dim, data)?;
    let eta_c = loc.center();
    let reference = NormalReference::new(spec.information(&eta_c))?;
    let support = SupportBall::new(spec.param_dim, reference.support_radius(c)?)?;

    let n = loc.n as f64;
    let rn = loc.sqrt_n();
    let xbar = data.mean();
    let map = spec.theta_map.clone();
    let psi = spec.base.psi.clone();
    let prior = spec.base.log_prior.clone();
    let theta_c = map(&eta_c);
    let psi_c = psi(&theta_c);
    let prior_c = prior.as_ref().map_or(0.0, |p| p(&theta_c));
    let log_ell = move |gamma: &[f64]| {
        let eta: Vec<f64> = eta_c.iter().zip(gamma).map(|(c, g)| c + g / rn).collect();
        let theta = map(&eta);
        let moment: f64 = xbar
            .iter()
            .zip(theta.iter().zip(&theta_c))
            .map(|(x, (t, tc))| x * (t - tc))
            .sum();
        let mut v = n * moment - n * (psi(&theta) - psi_c);
        if let Some(p) = &prior {
            v += p(&theta) - prior_c;
        }
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    LocalTarget::new(support, reference, log_ell)
}

/// A vector moment function `m(U, θ)` evaluated record by record.
pub trait MomentFunction: Send + Sync {
    /// Dimension `d₁` of the moment vector.
    fn dim(&self) -> usize;
    fn eval(&self, record: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Least-squares moments `(Y − X'θ)X`.
#[derive(Debug, Clone)]
pub struct LinearMoments {
    pub schema: Schema,
}

impl MomentFunction for LinearMoments {
    fn dim(&self) -> usize {
        self.schema.x.len()
    }

    fn eval(&self, record: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()> {
        let fit: f64 = self.schema.x.iter().zip(theta).map(|(&j, t)| record[j] * t).sum();
        let resid = record[self.schema.y] - fit;
        for (o, &j) in out.iter_mut().zip(&self.schema.x) {
            *o = resid * record[j];
        }
        Ok(())
    }
}

pub type CensoringWeight = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Censored / instrumental quantile moments `W(α/p(θ) − 1(Y ≤ X'θ))Z`.
#[derive(Clone)]
pub struct QuantileMoments {
    pub schema: Schema,
    pub alpha: f64,
    /// `None` is the identity weight.
    pub weight: Option<DMatrix<f64>>,
    /// `p(record, θ) ∈ (0, 1]`; `None` is `p ≡ 1`.
    pub censoring: Option<CensoringWeight>,
}

impl QuantileMoments {
    pub fn new(schema: Schema, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return arg(format!("quantile index must lie in (0,1), got {alpha}"));
        }
        Ok(Self {
            schema,
            alpha,
            weight: None,
            censoring: None,
        })
    }
}

impl MomentFunction for QuantileMoments {
    fn dim(&self) -> usize {
        self.schema.z.len()
    }

    fn eval(&self, record: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()> {
        // same arithmetic as `quantile_moments`, without per-record allocation
        let p = self.censoring.as_ref().map_or(1.0, |p| p(record, theta));
        if !(p > 0.0) {
            return Err(Error::Evaluation(format!("censoring weight p(θ) must be positive, got {p}")));
        }
        let fit: f64 = self.schema.x.iter().zip(theta).map(|(&j, t)| record[j] * t).sum();
        let ind = if record[self.schema.y] <= fit { 1.0 } else { 0.0 };
        let scale = self.alpha / p - ind;
        match &self.weight {
            None => {
                for (o, &j) in out.iter_mut().zip(&self.schema.z) {
                    *o = scale * record[j];
                }
            }
            Some(w) => {
                for (r, o) in out.iter_mut().enumerate() {
                    let wz: f64 = self.schema.z.iter().enumerate().map(|(c, &j)| w[(r, c)] * record[j]).sum();
                    *o = scale * wz;
                }
            }
        }
        Ok(())
    }
}

/// `W(α/p − 1(Y ≤ X'θ))Z` for a single record; `weight = None` means `W = I`.
pub fn quantile_moments(
    y: f64,
    x: &[f64],
    z: &[f64],
    theta: &[f64],
    alpha: f64,
    weight: Option<&DMatrix<f64>>,
    p: f64,
) -> Result<Vec<f64>> {
    if !(p > 0.0) {
        return Err(Error::Evaluation(format!("censoring weight p(θ) must be positive, got {p}")));
    }
    if x.len() != theta.len() {
        return arg("X and θ differ in dimension");
    }
    let fit: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
    let ind = if y <= fit { 1.0 } else { 0.0 };
    let scale = alpha / p - ind;
    let raw: Vec<f64> = z.iter().map(|v| scale * v).collect();
    Ok(match weight {
        None => raw,
        Some(w) => (w * DVector::from_vec(raw)).as_slice().to_vec(),
    })
}

/// A moment-based estimation problem with criterion `Q_n(θ) = −‖S_n(θ)‖²`.
#[derive(Clone)]
pub struct ZProblem {
    pub dim: usize,
    pub moments: Arc<dyn MomentFunction>,
    /// Analytic Jacobian `A` (`d₁ × d`) of `θ ↦ E m(X, θ)` at the center.
    pub jacobian: Option<DMatrix<f64>>,
    /// Radius `T_n` of the parameter space around the base point.
    pub radius: f64,
    pub identification: Option<(f64, f64)>,
}

impl ZProblem {
    pub fn new(dim: usize, moments: Arc<dyn MomentFunction>) -> Result<Self> {
        if dim == 0 || moments.dim() < dim {
            return arg(format!(
                "need 1 ≤ d ≤ d₁, got d = {dim}, d₁ = {}",
                moments.dim()
            ));
        }
        Ok(Self {
            dim,
            moments,
            jacobian: None,
            radius: f64::INFINITY,
            identification: None,
        })
    }

    pub fn with_jacobian(mut self, a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != self.moments.dim() || a.ncols() != self.dim {
            return arg("Jacobian must be d₁ × d");
        }
        check_min_eigen(&(a.transpose() * &a), 1e-8, "A'A")?;
        self.jacobian = Some(a);
        Ok(self)
    }

    pub fn moment_dim(&self) -> usize {
        self.moments.dim()
    }

    /// `(1/n) Σ m(U_i, θ)`.
    pub fn mean_moments(&self, data: &Dataset, theta: &[f64]) -> Result<Vec<f64>> {
        let mut s = empirical_moments(self, data, theta)?;
        let rn = (data.len() as f64).sqrt();
        s.iter_mut().for_each(|v| *v /= rn);
        Ok(s)
    }

    /// Jacobian `A` at `theta`: the analytic one when supplied, else central
    /// differences of the sample mean moments with step `n^{-1/4}`.
    pub fn jacobian_at(&self, data: &Dataset, theta: &[f64]) -> Result<DMatrix<f64>> {
        if let Some(a) = &self.jacobian {
            return Ok(a.clone());
        }
        let h = (data.len() as f64).powf(-0.25);
        let d1 = self.moment_dim();
        let mut a = DMatrix::zeros(d1, self.dim);
        let mut tp = theta.to_vec();
        for k in 0..self.dim {
            tp[k] = theta[k] + h;
            let up = self.mean_moments(data, &tp)?;
            tp[k] = theta[k] - h;
            let dn = self.mean_moments(data, &tp)?;
            tp[k] = theta[k];
            for j in 0..d1 {
                a[(j, k)] = (up[j] - dn[j]) / (2.0 * h);
            }
        }
        check_min_eigen(&(a.transpose() * &a), 1e-8, "A'A (finite differences)")?;
        Ok(a)
    }

    /// `s = −(A'A)⁻¹A'S_n(θ₀)`.
    pub fn first_order_s(&self, data: &Dataset, theta0: &[f64]) -> Result<Vec<f64>> {
        let a = self.jacobian_at(data, theta0)?;
        let sn = empirical_moments(self, data, theta0)?;
        let x = normal_solve(&a, &sn, "A'A")?;
        Ok(x.into_iter().map(|v| -v).collect())
    }

    /// Coarse grid minimizer of `‖S_n(θ)‖` over the box `[lo, hi]`.
    ///
    /// A heuristic for real data where no true value is available.
    pub fn pilot_center(&self, data: &Dataset, lo: &[f64], hi: &[f64], per_axis: usize) -> Result<Vec<f64>> {
        if lo.len() != self.dim || hi.len() != self.dim || per_axis < 2 {
            return arg("pilot box must match the parameter dimension and have ≥ 2 points per axis");
        }
        let total = (per_axis as f64).powi(self.dim as i32);
        if total > 1e6 {
            return arg("pilot grid too large; reduce points per axis");
        }
        let mut best = (f64::INFINITY, lo.to_vec());
        let mut idx = vec![0usize; self.dim];
        loop {
            let theta: Vec<f64> = (0..self.dim)
                .map(|k| lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (per_axis - 1) as f64)
                .collect();
            let norm: f64 = empirical_moments(self, data, &theta)?.iter().map(|v| v * v).sum();
            if norm < best.0 {
                best = (norm, theta);
            }
            let mut k = 0;
            loop {
                if k == self.dim {
                    return Ok(best.1);
                }
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

/// `S_n(θ) = n^{-1/2} Σ m(U_i, θ)`, summed exactly in record order.
pub fn empirical_moments(problem: &ZProblem, data: &Dataset, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != problem.dim {
        return arg("θ has the wrong dimension");
    }
    let d1 = problem.moment_dim();
    let mut acc = vec![0.0; d1];
    let mut buf = vec![0.0; d1];
    for rec in data.rows() {
        problem.moments.eval(rec, theta, &mut buf)?;
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    let rn = (data.len() as f64).sqrt();
    acc.iter_mut().for_each(|v| *v /= rn);
    Ok(acc)
}

/// Localized quasi-posterior `ln ℓ(λ) = Q_n(θ_c + λ/√n) − Q_n(θ_c)` with `J = 2A'A`.
pub fn make_z_target(
    problem: &ZProblem,
    data: &Dataset,
    loc: &Localization,
    c: f64,
) -> Result<LocalTarget> {
    check_loc(loc, problem.dim, data)?;
    let center = loc.center();
    let a = problem.jacobian_at(data, &center)?;
    let j = symmetrize(a.transpose() * &a * 2.0);
    let reference = NormalReference::new(j)?;
    let support = SupportBall::new(problem.dim, reference.support_radius(c)?)?;

    let q = |theta: &[f64], problem: &ZProblem, data: &Dataset| -> Result<f64> {
        Ok(-empirical_moments(problem, data, theta)?.iter().map(|v| v * v).sum::<f64>())
    };
    let q_c = q(&center, problem, data)?;
    let rn = loc.sqrt_n();
    let base = loc.base.clone();
    let radius = problem.radius;
    let problem = problem.clone();
    let data = Arc::new(data.clone());
    let log_ell = move |lambda: &[f64]| {
        let theta: Vec<f64> = center.iter().zip(lambda).map(|(c, l)| c + l / rn).collect();
        if radius.is_finite() {
            let dist: f64 = theta.iter().zip(&base).map(|(t, b)| (t - b) * (t - b)).sum();
            if dist.sqrt() > radius {
                return f64::NEG_INFINITY;
            }
        }
        match q(&theta, &problem, &data) {
            Ok(v) if !v.is_nan() => v - q_c,
            _ => f64::NEG_INFINITY,
        }
    };
    LocalTarget::new(support, reference, log_ell)
}

fn check_loc(loc: &Localization, dim: usize, data: &Dataset) -> Result<()> {
    if loc.dim() != dim {
        return arg(format!("localization has dimension {}, model has {dim}", loc.dim()));
    }
    if loc.n != data.len() {
        return arg(format!("localization n = {} but the dataset has {} records", loc.n, data.len()));
    }
    Ok(())
}

/// Synthetic model instances with a documented generative law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelDescriptor {
    /// `X_i ~ N(θ₀, I_d)`; columns `X1..Xd`.
    GaussianLocation { dim: usize, theta0: Option<Vec<f64>> },
    /// `X_ij ~ Poisson(exp θ₀_j)` independently; columns `X1..Xd`.
    Poisson { dim: usize, theta0: Option<Vec<f64>> },
    /// `X ~ N(0, I_d)`, `Y = X'θ₀ + noise_sd·ε`; columns `Y, X1..Xd`.
    LinearRegression {
        dim: usize,
        theta0: Option<Vec<f64>>,
        #[serde(default = "one")]
        noise_sd: f64,
    },
    /// `X = (1, N(0, I_{d-1}))`, `Y = X'θ₀ + ε − Φ⁻¹(α)` with standard normal
    /// `ε`, so the conditional α-quantile of `Y` is `X'θ₀`; columns `Y, X1..Xd`.
    Quantile {
        dim: usize,
        theta0: Option<Vec<f64>>,
        alpha: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ModelDescriptor {
    pub fn dim(&self) -> usize {
        match self {
            Self::GaussianLocation { dim, .. }
            | Self::Poisson { dim, .. }
            | Self::LinearRegression { dim, .. }
            | Self::Quantile { dim, .. } => *dim,
        }
    }

    /// True parameter; zeros when not given.
    pub fn theta0(&self) -> Vec<f64> {
        let (dim, t) = match self {
            Self::GaussianLocation { dim, theta0 }
            | Self::Poisson { dim, theta0 }
            | Self::LinearRegression { dim, theta0, .. }
            | Self::Quantile { dim, theta0, .. } => (*dim, theta0),
        };
        t.clone().unwrap_or_else(|| vec![0.0; dim])
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return arg("model dimension must be at least 1");
        }
        if self.theta0().len() != d {
            return arg(format!("theta0 must have {d} entries"));
        }
        match self {
            Self::Quantile { alpha, .. } if !(*alpha > 0.0 && *alpha < 1.0) => {
                arg(format!("alpha must lie in (0,1), got {alpha}"))
            }
            Self::LinearRegression { noise_sd, .. } if !(*noise_sd > 0.0) => {
                arg("noise_sd must be positive")
            }
            _ => Ok(()),
        }
    }

    fn columns(&self) -> Vec<String> {
        let xs = (1..=self.dim()).map(|j| format!("X{j}"));
        match self {
            Self::GaussianLocation { .. } | Self::Poisson { .. } => xs.collect(),
            _ => std::iter::once("Y".to_string()).chain(xs).collect(),
        }
    }
}

/// Draw `n` records from the descriptor's law; deterministic in `seed`.
pub fn gen_synthetic(model: &ModelDescriptor, n: usize, seed: u64) -> Result<Dataset> {
    model.validate()?;
    if n == 0 {
        return arg("sample size must be at least 1");
    }
    let d = model.dim();
    let theta0 = model.theta0();
    let mut rng = rng::stream(seed);
    let mut values = Vec::with_capacity(n * (d + 1));
    match model {
        ModelDescriptor::GaussianLocation { .. } => {
            for _ in 0..n {
                for t in &theta0 {
                    let z: f64 = rng.sample(StandardNormal);
                    values.push(t + z);
                }
            }
        }
        ModelDescriptor::Poisson { .. } => {
            let laws: Vec<Poisson<f64>> = theta0
                .iter()
                .map(|t| Poisson::new(t.exp()).map_err(|e| Error::Argument(format!("Poisson rate: {e}"))))
                .collect::<Result<_>>()?;
            for _ in 0..n {
                for law in &laws {
                    values.push(law.sample(&mut rng));
                }
            }
        }
        ModelDescriptor::LinearRegression { noise_sd, .. } => {
            let mut x = vec![0.0; d];
            for _ in 0..n {
                x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let eps: f64 = rng.sample(StandardNormal);
                let y = dot(&x, &theta0) + noise_sd * eps;
                values.push(y);
                values.extend_from_slice(&x);
            }
        }
        ModelDescriptor::Quantile { alpha, .. } => {
            let shift = std_normal().inverse_cdf(*alpha);
            let mut x = vec![1.0; d];
            for _ in 0..n {
                x.iter_mut().skip(1).for_each(|v| *v = rng.sample(StandardNormal));
                let eps: f64 = rng.sample(StandardNormal);
                values.push(dot(&x, &theta0) + eps - shift);
                values.extend_from_slice(&x);
            }
        }
    }
    Dataset::from_flat(model.columns(), values)
}

/// A model instance localized on a dataset at its true parameter.
#[derive(Debug, Clone)]
pub struct Localized {
    pub target: LocalTarget,
    pub localization: Localization,
}

/// Build the localized target for a synthetic descriptor, using its true
/// parameter as the base point and the class's first-order `s`.
///
/// Regression and quantile designs are Z-problems with `Z = X`. The linear
/// model uses the analytic `A = −E[XX'] = −I`; the quantile model uses the
/// finite-difference Jacobian.
pub fn localize(model: &ModelDescriptor, data: &Dataset, c: f64) -> Result<Localized> {
    model.validate()?;
    let d = model.dim();
    let theta0 = model.theta0();
    match model {
        ModelDescriptor::GaussianLocation { .. } | ModelDescriptor::Poisson { .. } => {
            let spec = if matches!(model, ModelDescriptor::Poisson { .. }) {
                ExpFamilySpec::poisson(d)
            } else {
                ExpFamilySpec::gaussian_location(d)
            };
            let s = spec.first_order_s(data, &theta0)?;
            let loc = Localization::known(theta0, s, data.len())?;
            Ok(Localized {
                target: make_exp_target(&spec, data, &loc, c)?,
                localization: loc,
            })
        }
        ModelDescriptor::LinearRegression { .. } | ModelDescriptor::Quantile { .. } => {
            let problem = z_problem_for(model, data)?;
            let s = problem.first_order_s(data, &theta0)?;
            let loc = Localization::known(theta0, s, data.len())?;
            Ok(Localized {
                target: make_z_target(&problem, data, &loc, c)?,
                localization: loc,
            })
        }
    }
}

/// The Z-problem behind a regression or quantile descriptor.
pub fn z_problem_for(model: &ModelDescriptor, data: &Dataset) -> Result<ZProblem> {
    let d = model.dim();
    let schema = SchemaSpec::regression(d).resolve(data)?;
    match model {
        ModelDescriptor::LinearRegression { .. } => {
            ZProblem::new(d, Arc::new(LinearMoments { schema }))?
                .with_jacobian(-DMatrix::identity(d, d))
        }
        ModelDescriptor::Quantile { alpha, .. } => {
            ZProblem::new(d, Arc::new(QuantileMoments::new(schema, *alpha)?))
        }
        _ => arg("not a moment-based model"),
    }
}

/// Population Jacobian of the quantile design: `−f_ε(q_α)·E[XX'] = −φ(Φ⁻¹(α))·I`.
pub fn quantile_design_jacobian(dim: usize, alpha: f64) -> DMatrix<f64> {
    let nd = std_normal();
    -DMatrix::identity(dim, dim) * nd.pdf(nd.inverse_cdf(alpha))
}

fn std_normal() -> Normal {
    Normal::standard()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
