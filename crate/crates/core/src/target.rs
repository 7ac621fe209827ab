//! Localized target densities, the Gaussian reference and the support ball.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{arg, Error, Result};

/// Closed Euclidean ball `{λ : ‖λ‖ ≤ radius}` in `dim` dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportBall {
    dim: usize,
    radius: f64,
}

impl SupportBall {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return arg("support dimension must be at least 1");
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return arg(format!("support radius must be positive and finite, got {radius}"));
        }
        Ok(Self { dim, radius })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Membership with the boundary included.
    pub fn contains(&self, lambda: &[f64]) -> bool {
        norm_sq(lambda) <= self.radius * self.radius
    }
}

/// `in_support` as a free function; panics on dimension mismatch in debug builds.
pub fn in_support(support: &SupportBall, lambda: &[f64]) -> bool {
    debug_assert_eq!(lambda.len(), support.dim);
    support.contains(lambda)
}

/// The symmetric positive definite matrix `J` of the limiting normal law,
/// with its spectrum cached at construction.
#[derive(Clone)]
pub struct NormalReference {
    j: DMatrix<f64>,
    lambda_min: f64,
    lambda_max: f64,
    top_eigvec: DVector<f64>,
    // lower Cholesky factor of J
    chol: DMatrix<f64>,
}

impl fmt::Debug for NormalReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormalReference")
            .field("dim", &self.dim())
            .field("lambda_min", &self.lambda_min)
            .field("lambda_max", &self.lambda_max)
            .finish()
    }
}

impl NormalReference {
    pub fn new(j: DMatrix<f64>) -> Result<Self> {
        let d = j.nrows();
        if d == 0 || j.ncols() != d {
            return Err(Error::Construction(format!(
                "J must be square and non-empty, got {}x{}",
                j.nrows(),
                j.ncols()
            )));
        }
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::Construction("J has non-finite entries".into()));
        }
        for r in 0..d {
            for c in (r + 1)..d {
                if (j[(r, c)] - j[(c, r)]).abs() > 1e-12 {
                    return Err(Error::Construction(format!(
                        "J is not symmetric at ({r},{c}): {} vs {}",
                        j[(r, c)],
                        j[(c, r)]
                    )));
                }
            }
        }
        let eig = j.clone().symmetric_eigen();
        let (mut imin, mut imax) = (0, 0);
        for (i, &v) in eig.eigenvalues.iter().enumerate() {
            if v < eig.eigenvalues[imin] {
                imin = i;
            }
            if v > eig.eigenvalues[imax] {
                imax = i;
            }
        }
        let lambda_min = eig.eigenvalues[imin];
        let lambda_max = eig.eigenvalues[imax];
        if !(lambda_max > 0.0) || lambda_min <= 1e-12 * lambda_max {
            return Err(Error::Construction(format!(
                "J is not positive definite (eigenvalues in [{lambda_min:e}, {lambda_max:e}])"
            )));
        }
        let chol = j
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Construction("Cholesky factorization of J failed".into()))?
            .l();
        Ok(Self {
            top_eigvec: eig.eigenvectors.column(imax).into_owned(),
            j,
            lambda_min,
            lambda_max,
            chol,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.j.nrows()
    }

    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Unit eigenvector of the largest eigenvalue.
    pub fn top_eigenvector(&self) -> &DVector<f64> {
        &self.top_eigvec
    }

    /// Lower Cholesky factor `L` with `J = L L'`.
    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `‖K‖_J = sqrt(λ_max)·‖K‖` for a companion support ball.
    pub fn norm_k_j(&self, support: &SupportBall) -> f64 {
        self.lambda_max.sqrt() * support.radius()
    }

    /// `λ'Jλ`.
    pub fn quad_form(&self, lambda: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for r in 0..d {
            let mut row = 0.0;
            for c in 0..d {
                row += self.j[(r, c)] * lambda[c];
            }
            acc += lambda[r] * row;
        }
        acc
    }

    /// `C·sqrt(d/λ_min)`; the concentration argument needs `C > 1`.
    pub fn support_radius(&self, c: f64) -> Result<f64> {
        support_radius(self.dim(), self.lambda_min, c)
    }
}

/// `−½ λ'Jλ`.
pub fn quadratic_reference(reference: &NormalReference, lambda: &[f64]) -> Result<f64> {
    if lambda.len() != reference.dim() {
        return arg(format!(
            "dimension mismatch: λ has {} entries, J is {}x{}",
            lambda.len(),
            reference.dim(),
            reference.dim()
        ));
    }
    Ok(-0.5 * reference.quad_form(lambda))
}

/// Support radius `C·sqrt(d/λ_min)`.
pub fn support_radius(dim: usize, lambda_min: f64, c: f64) -> Result<f64> {
    if !(c > 1.0) {
        return arg(format!("support constant C must exceed 1, got {c}"));
    }
    if dim == 0 || !(lambda_min > 0.0) {
        return arg("support radius needs d ≥ 1 and λ_min > 0");
    }
    Ok(c * (dim as f64 / lambda_min).sqrt())
}

pub type LogEll = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A localized (quasi-)likelihood `λ ↦ ln ℓ(λ)` on its support ball,
/// together with the normal reference it is compared against.
///
/// `ln ℓ` may return `-∞` where the underlying criterion is undefined;
/// the walk rejects such points.
#[derive(Clone)]
pub struct LocalTarget {
    support: SupportBall,
    reference: NormalReference,
    log_ell: Arc<LogEll>,
}

impl fmt::Debug for LocalTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalTarget")
            .field("support", &self.support)
            .field("reference", &self.reference)
            .finish_non_exhaustive()
    }
}

impl LocalTarget {
    pub fn new(
        support: SupportBall,
        reference: NormalReference,
        log_ell: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::from_arc(support, reference, Arc::new(log_ell))
    }

    pub fn from_arc(
        support: SupportBall,
        reference: NormalReference,
        log_ell: Arc<LogEll>,
    ) -> Result<Self> {
        if support.dim() != reference.dim() {
            return Err(Error::Construction(format!(
                "support is {}-dimensional but J is {}x{}",
                support.dim(),
                reference.dim(),
                reference.dim()
            )));
        }
        Ok(Self {
            support,
            reference,
            log_ell,
        })
    }

    /// Exact normal target `ln ℓ(λ) = −½λ'Jλ` on the ball of radius
    /// `C·sqrt(d/λ_min)`.
    pub fn gaussian(reference: NormalReference, c: f64) -> Result<Self> {
        let radius = reference.support_radius(c)?;
        let support = SupportBall::new(reference.dim(), radius)?;
        let r = reference.clone();
        Self::new(support, reference, move |l| -0.5 * r.quad_form(l))
    }

    /// Standard normal target on the default ball.
    pub fn standard_normal(dim: usize) -> Result<Self> {
        Self::gaussian(NormalReference::identity(dim)?, crate::DEFAULT_SUPPORT_C)
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn support(&self) -> &SupportBall {
        &self.support
    }

    pub fn reference(&self) -> &NormalReference {
        &self.reference
    }

    pub fn log_ell(&self, lambda: &[f64]) -> f64 {
        (self.log_ell)(lambda)
    }

    pub fn norm_k_j(&self) -> f64 {
        self.reference.norm_k_j(&self.support)
    }

    /// Same log-density over a different ball.
    pub fn with_support(&self, support: SupportBall) -> Result<Self> {
        Self::from_arc(support, self.reference.clone(), self.log_ell.clone())
    }

    /// Same log-density shifted by a constant; used to check normalization
    /// invariance of self-normalized estimators.
    pub fn shifted(&self, offset: f64) -> Self {
        let inner = self.log_ell.clone();
        Self {
            support: self.support,
            reference: self.reference.clone(),
            log_ell: Arc::new(move |l| inner(l) + offset),
        }
    }
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadratic_reference_examples() {
        let id = NormalReference::identity(2).unwrap();
        assert_eq!(quadratic_reference(&id, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(quadratic_reference(&id, &[1.0, 1.0]).unwrap(), -1.0);
        let diag = NormalReference::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5])))
            .unwrap();
        assert!((quadratic_reference(&diag, &[1.0, 2.0]).unwrap() + 2.0).abs() < 1e-15);
        assert!(matches!(
            quadratic_reference(&id, &[1.0]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn support_radius_examples() {
        assert!((support_radius(4, 1.0, 2.0).unwrap() - 4.0).abs() < 1e-15);
        assert!((support_radius(1, 1.0, 1.0 + 1e-12).unwrap() - 1.0).abs() < 1e-9);
        assert!((support_radius(100, 4.0, 2.0).unwrap() - 10.0).abs() < 1e-12);
        assert!(support_radius(3, 1.0, 1.0).is_err());
        assert!(support_radius(3, 1.0, 0.5).is_err());
    }

    #[test]
    fn closed_ball_membership() {
        let ball = SupportBall::new(3, 1.0).unwrap();
        assert!(in_support(&ball, &[0.0, 0.0, 0.0]));
        assert!(in_support(&ball, &[1.0, 0.0, 0.0]));
        assert!(!in_support(&ball, &[1.0 + 1e-9, 0.0, 0.0]));
        assert!(SupportBall::new(0, 1.0).is_err());
        assert!(SupportBall::new(1, 0.0).is_err());
    }

    #[test]
    fn reference_rejects_bad_matrices() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(NormalReference::new(asym).is_err());
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(NormalReference::new(singular).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(NormalReference::new(indefinite).is_err());
    }

    #[test]
    fn cached_spectrum_matches_recomputation() {
        let j = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let r = NormalReference::new(j.clone()).unwrap();
        let ev = j.symmetric_eigen().eigenvalues;
        let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((r.lambda_min() - lo).abs() < 1e-10);
        assert!((r.lambda_max() - hi).abs() < 1e-10);
        let ball = SupportBall::new(3, 2.0).unwrap();
        assert!(r.norm_k_j(&ball) >= r.lambda_min().sqrt() * 2.0);
        let v = r.top_eigenvector();
        let q = r.quad_form(v.as_slice());
        assert!((q - r.lambda_max()).abs() < 1e-10);
    }

    fn spd3() -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, 9).prop_map(|v| {
            let a = DMatrix::from_row_slice(3, 3, &v);
            &a * a.transpose() + DMatrix::identity(3, 3) * 0.1
        })
    }

    proptest! {
        #[test]
        fn quadratic_reference_nonpositive_and_even(j in spd3(), l in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let r = NormalReference::new(j).unwrap();
            let q = quadratic_reference(&r, &l).unwrap();
            prop_assert!(q <= 0.0);
            if l.iter().any(|x| *x != 0.0) {
                prop_assert!(q < 0.0);
            }
            let neg: Vec<f64> = l.iter().map(|x| -x).collect();
            prop_assert_eq!(q, quadratic_reference(&r, &neg).unwrap());
        }

        #[test]
        fn support_radius_monotone(c in 1.01f64..5.0, dc in 0.01f64..1.0, d in 1usize..50, lmin in 0.1f64..10.0) {
            let base = support_radius(d, lmin, c).unwrap();
            prop_assert!(support_radius(d, lmin, c + dc).unwrap() > base);
            prop_assert!(support_radius(d + 1, lmin, c).unwrap() > base);
            prop_assert!(support_radius(d, lmin * 1.5, c).unwrap() < base);
        }
    }
}
