//! Closed-form values for Gaussian couplings under squared Euclidean costs.

pub mod sqrtm;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::measures::JointDiscreteMeasure;

pub use sqrtm::sqrtm;

/// Smallest eigenvalue accepted for the joint covariance.
const PSD_TOL: f64 = 1e-10;
/// Negative closed-form values down to this size are roundoff.
const NEGATIVE_DRIFT: f64 = 1e-9;

/// `N(mean, [[Σ₁₁, Σ₁₂], [Σ₁₂ᵀ, Σ₂₂]])` on ℝ^r × ℝ^q.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mean: DVector<f64>,
    pub sigma11: DMatrix<f64>,
    pub sigma12: DMatrix<f64>,
    pub sigma22: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, sigma11: DMatrix<f64>, sigma12: DMatrix<f64>, sigma22: DMatrix<f64>) -> Result<Self> {
        let (r, q) = (sigma11.nrows(), sigma22.nrows());
        if r == 0 || q == 0 {
            return Err(Error::Empty);
        }
        if !sigma11.is_square() {
            return Err(Error::DimensionMismatch { expected: r, got: sigma11.ncols() });
        }
        if !sigma22.is_square() {
            return Err(Error::DimensionMismatch { expected: q, got: sigma22.ncols() });
        }
        if sigma12.shape() != (r, q) {
            return Err(Error::DimensionMismatch { expected: r * q, got: sigma12.len() });
        }
        if mean.len() != r + q {
            return Err(Error::DimensionMismatch { expected: r + q, got: mean.len() });
        }
        let spec = Self { mean, sigma11, sigma12, sigma22 };
        let cov = spec.covariance();
        if let Some(idx) = cov.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { idx, value: cov[idx] });
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParameter("covariance blocks are not symmetric".into()));
        }
        let min_eig = cov.symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL * scale {
            return Err(Error::InvalidParameter(format!("covariance is not positive semidefinite (eigenvalue {min_eig})")));
        }
        Ok(spec)
    }

    /// Centered bivariate normal with standard deviations σ₁, σ₂ and correlation ρ.
    pub fn bivariate(sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        check_bivariate(sigma1, sigma2, rho)?;
        Self::new(
            DVector::zeros(2),
            DMatrix::from_element(1, 1, sigma1 * sigma1),
            DMatrix::from_element(1, 1, rho * sigma1 * sigma2),
            DMatrix::from_element(1, 1, sigma2 * sigma2),
        )
    }

    pub fn x_dim(&self) -> usize {
        self.sigma11.nrows()
    }

    pub fn y_dim(&self) -> usize {
        self.sigma22.nrows()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let (r, q) = (self.x_dim(), self.y_dim());
        let mut cov = DMatrix::zeros(r + q, r + q);
        cov.view_mut((0, 0), (r, r)).copy_from(&self.sigma11);
        cov.view_mut((0, r), (r, q)).copy_from(&self.sigma12);
        cov.view_mut((r, 0), (q, r)).copy_from(&self.sigma12.transpose());
        cov.view_mut((r, r), (q, q)).copy_from(&self.sigma22);
        cov
    }

    /// The Gaussian seen under the cost `α‖x₁ − x₂‖² + ‖y₁ − y₂‖²`: x scaled by √α.
    pub fn scaled_x(&self, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive and finite, got {alpha}")));
        }
        let r = self.x_dim();
        let mut mean = self.mean.clone();
        mean.rows_mut(0, r).scale_mut(alpha.sqrt());
        Ok(Self {
            mean,
            sigma11: &self.sigma11 * alpha,
            sigma12: &self.sigma12 * alpha.sqrt(),
            sigma22: self.sigma22.clone(),
        })
    }

    /// `n` iid draws as an empirical joint measure, using a symmetric factor of the covariance.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<JointDiscreteMeasure> {
        if n == 0 {
            return Err(Error::Empty);
        }
        let (r, q) = (self.x_dim(), self.y_dim());
        let eig = self.covariance().symmetric_eigen();
        let root = DVector::from_iterator(r + q, eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()));
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&root);
        let mut x = Vec::with_capacity(n * r);
        let mut y = Vec::with_capacity(n * q);
        let mut z = DVector::<f64>::zeros(r + q);
        for _ in 0..n {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let draw = &factor * &z + &self.mean;
            x.extend(draw.rows(0, r).iter());
            y.extend(draw.rows(r, q).iter());
        }
        JointDiscreteMeasure::from_flat(r, q, x, y, vec![1.0 / n as f64; n])
    }
}

fn check_bivariate(sigma1: f64, sigma2: f64, rho: f64) -> Result<()> {
    if !(sigma1.is_finite() && sigma1 > 0.0 && sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!("standard deviations must be positive, got {sigma1}, {sigma2}")));
    }
    if !(rho.abs() <= 1.0) {
        return Err(Error::InvalidParameter(format!("correlation must lie in [-1, 1], got {rho}")));
    }
    Ok(())
}

fn clamp_drift(v: f64) -> Result<f64> {
    if v < -NEGATIVE_DRIFT {
        return Err(Error::Numerical(format!("negative closed-form dependency {v}")));
    }
    Ok(v.max(0.0))
}

/// `τ(γ) = 2 tr Σ₁₁ + 2 tr Σ₂₂ − 2 tr [[Σ₁₁², Σ₁₁Σ₁₂], [Σ₂₂Σ₂₁, Σ₂₂²]]^{1/2}`.
pub fn gauss_tdep(spec: &GaussianSpec) -> Result<f64> {
    let (r, q) = (spec.x_dim(), spec.y_dim());
    let mut block = DMatrix::zeros(r + q, r + q);
    block.view_mut((0, 0), (r, r)).copy_from(&(&spec.sigma11 * &spec.sigma11));
    block.view_mut((0, r), (r, q)).copy_from(&(&spec.sigma11 * &spec.sigma12));
    block.view_mut((r, 0), (q, r)).copy_from(&(&spec.sigma22 * spec.sigma12.transpose()));
    block.view_mut((r, r), (q, q)).copy_from(&(&spec.sigma22 * &spec.sigma22));
    let root = sqrtm(&block)?;
    clamp_drift(2.0 * spec.sigma11.trace() + 2.0 * spec.sigma22.trace() - 2.0 * root.trace())
}

/// `2(σ₁² + σ₂² − √(σ₁⁴ + σ₂⁴ + 2σ₁²σ₂²√(1 − ρ²)))`; depends on ρ only through ρ².
pub fn gauss_tdep_bivariate(sigma1: f64, sigma2: f64, rho: f64) -> Result<f64> {
    check_bivariate(sigma1, sigma2, rho)?;
    let (a, b) = (sigma1 * sigma1, sigma2 * sigma2);
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    clamp_drift(2.0 * (a + b - (a * a + b * b + 2.0 * a * b * s).sqrt()))
}

/// `τ^Y = 2σ₂²(1 − √(1 − ρ²))`, the limit of the weighted dependency as α → ∞.
pub fn gauss_marginal_tdep_bivariate(sigma2: f64, rho: f64) -> Result<f64> {
    check_bivariate(1.0, sigma2, rho)?;
    Ok(2.0 * sigma2 * sigma2 * (1.0 - (1.0 - rho * rho).max(0.0).sqrt()))
}

/// `τ` under `α‖x₁ − x₂‖² + ‖y₁ − y₂‖²`.
pub fn gauss_tdep_weighted(spec: &GaussianSpec, alpha: f64) -> Result<f64> {
    gauss_tdep(&spec.scaled_x(alpha)?)
}

/// Mutual information `−ln(1 − ρ²)/2`.
pub fn gauss_mutual_info(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("mutual information diverges at |rho| = {}", rho.abs())));
    }
    Ok(0.0 - (1.0 - rho * rho).ln() / 2.0)
}

/// `dcov² = (4σ²/π)(ρ asin ρ + √(1−ρ²) − ρ asin(ρ/2) − √(4−ρ²) + 1)` for equal variances σ².
pub fn gauss_dcov2_bivariate(sigma: f64, rho: f64) -> Result<f64> {
    check_bivariate(sigma, sigma, rho)?;
    let v = rho * rho.asin() + (1.0 - rho * rho).max(0.0).sqrt() - rho * (rho / 2.0).asin() - (4.0 - rho * rho).sqrt()
        + 1.0;
    clamp_drift(4.0 * sigma * sigma / std::f64::consts::PI * v)
}
