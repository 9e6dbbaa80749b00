//! Student's-t value types, scale/covariance conversion, sampling, and the
//! conditional distribution of a partitioned multivariate t vector.
//!
//! Scale and covariance are distinct for a t distribution: the covariance is
//! nu/(nu-2) times the scale matrix and exists only for nu > 2. Keeping the
//! two spaces separate (with explicit conversions) is what prevents the
//! double-conversion bugs this kind of code attracts.

use crate::error::{Error, Result};
use crate::special;
use ndarray::ArrayView2;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Univariate Student's-t law: location `mu`, squared scale `tau2`,
/// degrees of freedom `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivariateT {
    pub mu: f64,
    pub tau2: f64,
    pub nu: f64,
}

impl UnivariateT {
    pub fn new(mu: f64, tau2: f64, nu: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain("UnivariateT", format!("mu = {mu} not finite")));
        }
        if !tau2.is_finite() || tau2 <= 0.0 {
            return Err(Error::domain("UnivariateT", format!("tau2 = {tau2} must be > 0")));
        }
        if !nu.is_finite() || nu <= 0.0 {
            return Err(Error::domain("UnivariateT", format!("nu = {nu} must be > 0")));
        }
        Ok(UnivariateT { mu, tau2, nu })
    }

    /// Variance nu/(nu-2) * tau2; defined only for nu > 2.
    pub fn variance(&self) -> Result<f64> {
        variance_of(self)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        special::t_cdf(x, self.mu, self.tau2, self.nu)
    }

    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        special::t_logpdf(x, self.mu, self.tau2, self.nu)
    }

    /// `n` i.i.d. draws, each generated as
    /// `mu + sqrt(tau2) * z / sqrt(chi2(nu) / nu)` with `z` standard normal.
    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let chi2 = ChiSquared::new(self.nu).expect("nu > 0 checked at construction");
        let s = self.tau2.sqrt();
        (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                let w: f64 = chi2.sample(rng);
                self.mu + s * z / (w / self.nu).sqrt()
            })
            .collect()
    }
}

/// Mean-field vector of t-distributed coordinates: per-coordinate locations
/// and scale diagonal, one shared degrees-of-freedom parameter. Off-diagonal
/// scale entries are identically zero by assumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalTVector {
    pub mu: Vec<f64>,
    pub tau2: Vec<f64>,
    pub nu: f64,
}

impl DiagonalTVector {
    pub fn new(mu: Vec<f64>, tau2: Vec<f64>, nu: f64) -> Result<Self> {
        if mu.len() != tau2.len() {
            return Err(Error::Dimension {
                context: "DiagonalTVector",
                expected: mu.len(),
                actual: tau2.len(),
            });
        }
        if !nu.is_finite() || nu <= 0.0 {
            return Err(Error::domain("DiagonalTVector", format!("nu = {nu} must be > 0")));
        }
        if let Some(bad) = tau2.iter().find(|t| !t.is_finite() || **t <= 0.0) {
            return Err(Error::domain(
                "DiagonalTVector",
                format!("scale entries must be > 0, got {bad}"),
            ));
        }
        Ok(DiagonalTVector { mu, tau2, nu })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Covariance of a univariate t quantity: nu/(nu-2) * tau2.
pub fn variance_of(t: &UnivariateT) -> Result<f64> {
    if t.nu <= 2.0 {
        return Err(Error::UndefinedVariance { nu: t.nu });
    }
    Ok(t.nu / (t.nu - 2.0) * t.tau2)
}

/// Inverse of [`variance_of`]: the squared scale that yields `variance` at
/// the given degrees of freedom, (nu-2)/nu * variance.
pub fn scale_from_variance(variance: f64, nu: f64) -> Result<f64> {
    if nu <= 2.0 {
        return Err(Error::domain(
            "scale_from_variance",
            format!("nu = {nu} must be > 2"),
        ));
    }
    if !(variance.is_finite() && variance >= 0.0) {
        return Err(Error::domain(
            "scale_from_variance",
            format!("variance = {variance} must be >= 0"),
        ));
    }
    Ok((nu - 2.0) / nu * variance)
}

/// Cross-scale structure between a partitioned t vector's two blocks.
/// The diagonal form covers same-width elementwise coupling; the dense form
/// carries a full d1 x d2 block.
#[derive(Debug, Clone, Copy)]
pub enum CrossScale<'a> {
    Diagonal(&'a [f64]),
    Dense(ArrayView2<'a, f64>),
}

impl CrossScale<'_> {
    pub(crate) fn at(&self, i: usize, k: usize) -> f64 {
        match self {
            CrossScale::Diagonal(d) => {
                if i == k {
                    d[i]
                } else {
                    0.0
                }
            }
            CrossScale::Dense(m) => m[[i, k]],
        }
    }

    pub(crate) fn dims(&self) -> (usize, usize) {
        match self {
            CrossScale::Diagonal(d) => (d.len(), d.len()),
            CrossScale::Dense(m) => (m.nrows(), m.ncols()),
        }
    }
}

/// Parameters of X1 | X2 = x2 for a jointly t-distributed pair with diagonal
/// Sigma_2: the conditional is again t with
///   location  mu_1 + Sigma_12 Sigma_2^{-1} (x2 - mu_2),
///   scale     factor * (Sigma_1 - Sigma_12 Sigma_2^{-1} Sigma_21)  (diagonal),
///   dof       nu + d2,
/// where factor = (nu + mahalanobis(x2)) / (nu + d2).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTParams {
    pub mu_cond: Vec<f64>,
    /// Diagonal of Sigma_1 - Sigma_12 Sigma_2^{-1} Sigma_21, before the
    /// data-dependent factor is applied.
    pub scale_cond_base: Vec<f64>,
    pub dof_cond: f64,
    pub data_dependent_factor: f64,
}

impl ConditionalTParams {
    /// Full conditional scale diagonal (factor applied).
    pub fn scale_cond(&self) -> Vec<f64> {
        self.scale_cond_base
            .iter()
            .map(|s| s * self.data_dependent_factor)
            .collect()
    }
}

/// Conditional parameters of the first block given an observation of the
/// second, for a joint t with diagonal second-block scale.
pub fn conditional_params(
    mu1: &[f64],
    scale1: &[f64],
    mu2: &[f64],
    scale2: &[f64],
    cross_scale: CrossScale<'_>,
    nu: f64,
    x2: &[f64],
) -> Result<ConditionalTParams> {
    let d1 = mu1.len();
    let d2 = mu2.len();
    check_len("conditional_params", scale1.len(), d1)?;
    check_len("conditional_params", scale2.len(), d2)?;
    check_len("conditional_params", x2.len(), d2)?;
    let (cr, cc) = cross_scale.dims();
    check_len("conditional_params cross rows", cr, d1)?;
    check_len("conditional_params cross cols", cc, d2)?;
    if let Some(bad) = scale2.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::domain(
            "conditional_params",
            format!("scale2 entries must be > 0, got {bad}"),
        ));
    }

    let mahalanobis: f64 = (0..d2)
        .map(|k| {
            let d = x2[k] - mu2[k];
            d * d / scale2[k]
        })
        .sum();
    let dof_cond = nu + d2 as f64;
    let factor = (nu + mahalanobis) / dof_cond;

    let mut mu_cond = Vec::with_capacity(d1);
    let mut base = Vec::with_capacity(d1);
    for i in 0..d1 {
        let mut shift = 0.0;
        let mut reduction = 0.0;
        for k in 0..d2 {
            let s12 = cross_scale.at(i, k);
            if s12 != 0.0 {
                shift += s12 / scale2[k] * (x2[k] - mu2[k]);
                reduction += s12 * s12 / scale2[k];
            }
        }
        mu_cond.push(mu1[i] + shift);
        base.push(scale1[i] - reduction);
    }
    Ok(ConditionalTParams {
        mu_cond,
        scale_cond_base: base,
        dof_cond,
        data_dependent_factor: factor,
    })
}

fn check_len(context: &'static str, actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::Dimension {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
