//! Analytic forward pass: moments of the scaled linear map and of the ReLU
//! nonlinearity, composed into the predictive distribution.
//!
//! Conventions, applied uniformly:
//! - inputs to a layer are carried as (mean, covariance diagonal); scales are
//!   derived from variances right where a t parameterization is needed;
//! - every pre-activation divides by sqrt(fan_out), matching the layer map
//!   a = W z / sqrt(M) with W of shape M x fan_in;
//! - degrees of freedom pass through both the linear map and the ReLU
//!   unchanged, so every per-layer quantity carries the layer's weight DOF.

use crate::error::{Error, Result};
use crate::network::{ForwardTrace, LayerState, LayerTrace};
use crate::special::{incomplete_beta, ln_gamma_diff, t_cdf, t_sf};
use crate::tdist::{scale_from_variance, UnivariateT};
use std::f64::consts::PI;

/// Moments of a layer's pre-activation vector a = W z / sqrt(fan_out).
#[derive(Debug, Clone, PartialEq)]
pub struct PreActivationMoments {
    pub mu: Vec<f64>,
    /// Variance diagonal (covariance space).
    pub var: Vec<f64>,
    /// Scale diagonal, (nu-2)/nu times the variance.
    pub tau2: Vec<f64>,
    pub nu: f64,
}

/// Moments of a layer's post-activation vector z = relu(a).
#[derive(Debug, Clone, PartialEq)]
pub struct PostActivationMoments {
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
    pub tau2: Vec<f64>,
    pub nu: f64,
}

/// Mean and variance diagonal of a = W z / sqrt(fan_out) for mean-field W and
/// independent z.
///
/// `z_mu` and `z_cov` are the augmented input (bias entry included) in
/// covariance space; `z_cov` entries may be zero for deterministic inputs.
pub fn linear_moments(layer: &LayerState, z_mu: &[f64], z_cov: &[f64]) -> Result<PreActivationMoments> {
    let cols = layer.fan_in + 1;
    if z_mu.len() != cols {
        return Err(Error::Dimension {
            context: "linear_moments input mean",
            expected: cols,
            actual: z_mu.len(),
        });
    }
    if z_cov.len() != cols {
        return Err(Error::Dimension {
            context: "linear_moments input covariance",
            expected: cols,
            actual: z_cov.len(),
        });
    }
    let nu = layer.nu_w;
    if nu <= 2.0 {
        return Err(Error::domain(
            "linear_moments",
            format!("weight degrees of freedom {nu} must be > 2"),
        ));
    }
    let m = layer.fan_out as f64;
    let w_cov_factor = nu / (nu - 2.0);
    let mut mu = Vec::with_capacity(layer.fan_out);
    let mut var = Vec::with_capacity(layer.fan_out);
    let mut tau2 = Vec::with_capacity(layer.fan_out);
    for i in 0..layer.fan_out {
        let w_mu = layer.w_mu.row(i);
        let w_tau2 = layer.w_tau2.row(i);
        let mut mean = 0.0;
        let mut v = 0.0;
        for j in 0..cols {
            let cw = w_cov_factor * w_tau2[j];
            mean += w_mu[j] * z_mu[j];
            // mu_W^T C_z mu_W + mu_z^T C_W mu_z + Tr(C_W C_z), all diagonal.
            v += w_mu[j] * w_mu[j] * z_cov[j] + z_mu[j] * z_mu[j] * cw + cw * z_cov[j];
        }
        mu.push(mean / m.sqrt());
        let v = v / m;
        var.push(v);
        tau2.push(scale_from_variance(v, nu)?);
    }
    Ok(PreActivationMoments { mu, var, tau2, nu })
}

/// E[relu(a)] for a ~ t(mu, tau2, nu). Requires nu > 1 and tau2 > 0.
pub fn relu_mean(mu: f64, tau2: f64, nu: f64) -> Result<f64> {
    if !tau2.is_finite() || tau2 <= 0.0 {
        return Err(Error::domain("relu_mean", format!("tau2 = {tau2} must be > 0")));
    }
    if !nu.is_finite() || nu <= 1.0 {
        return Err(Error::domain("relu_mean", format!("nu = {nu} must be > 1")));
    }
    let gamma_ratio = ln_gamma_diff(0.5 * nu, 0.5).exp();
    let density_term = gamma_ratio / (PI * nu * tau2).sqrt() * nu * tau2 / (nu - 1.0)
        * (0.5 * (1.0 - nu) * (mu * mu / (nu * tau2)).ln_1p()).exp();
    let tail_term = mu * t_sf(0.0, mu, tau2, nu)?;
    Ok((density_term + tail_term).max(0.0))
}

/// Var[relu(a)] for a ~ t(mu, tau2, nu). `mu_z` must be the matching
/// [`relu_mean`] output. Requires nu > 2; the result is clamped at zero to
/// absorb the cancellation the closed form suffers deep in the negative tail.
pub fn relu_variance(mu: f64, tau2: f64, nu: f64, mu_z: f64) -> Result<f64> {
    if !tau2.is_finite() || tau2 <= 0.0 {
        return Err(Error::domain("relu_variance", format!("tau2 = {tau2} must be > 0")));
    }
    if !nu.is_finite() || nu <= 2.0 {
        return Err(Error::domain("relu_variance", format!("nu = {nu} must be > 2")));
    }
    let half_second_moment = nu * tau2 / (2.0 * (nu - 2.0));
    let located_cdf = mu * mu * t_cdf(mu, 0.0, tau2, nu)?;
    let sign = if mu >= 0.0 { 1.0 } else { -1.0 };
    let z = mu * mu / (nu * tau2 + mu * mu);
    let gamma_ratio = ln_gamma_diff(0.5 * nu, 0.5).exp();
    let beta_term = sign * nu * tau2 / (2.0 * PI.sqrt())
        * gamma_ratio
        * incomplete_beta(z, 1.5, 0.5 * (nu - 2.0))?;
    let cross_term = 2.0 * mu * (mu_z - mu * t_sf(0.0, mu, tau2, nu)?);
    Ok((half_second_moment + located_cdf + beta_term + cross_term - mu_z * mu_z).max(0.0))
}

/// Run the network forward on one input: linear moments then ReLU moments for
/// every hidden layer, linear moments only for the output layer. The
/// aleatoric noise variance is added to the output variance before the
/// predictive law is converted back to scale form.
///
/// Returns the predictive distribution and the per-layer trace the backward
/// pass consumes.
pub fn forward_pass(
    network: &[LayerState],
    x: &[f64],
    noise_var: f64,
) -> Result<(UnivariateT, ForwardTrace)> {
    let last = network.len().checked_sub(1).ok_or_else(|| {
        Error::domain("forward_pass", "network must have at least one layer".to_string())
    })?;
    if network[0].fan_in != x.len() {
        return Err(Error::Dimension {
            context: "forward_pass input",
            expected: network[0].fan_in,
            actual: x.len(),
        });
    }
    if network[last].fan_out != 1 {
        return Err(Error::Dimension {
            context: "forward_pass output width",
            expected: 1,
            actual: network[last].fan_out,
        });
    }
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::domain(
            "forward_pass",
            format!("noise_var = {noise_var} must be >= 0"),
        ));
    }

    // The network input is deterministic: mean x, covariance zero.
    let mut z_mu: Vec<f64> = x.to_vec();
    let mut z_cov: Vec<f64> = vec![0.0; x.len()];
    let mut layers = Vec::with_capacity(network.len());
    for (l, layer) in network.iter().enumerate() {
        // Fold the bias in as a constant-one input with zero covariance.
        let mut aug_mu = z_mu.clone();
        aug_mu.push(1.0);
        let mut aug_cov = z_cov.clone();
        aug_cov.push(0.0);
        let pre = linear_moments(layer, &aug_mu, &aug_cov)?;
        let post = if l < last {
            let mut mu = Vec::with_capacity(layer.fan_out);
            let mut var = Vec::with_capacity(layer.fan_out);
            let mut tau2 = Vec::with_capacity(layer.fan_out);
            for i in 0..layer.fan_out {
                if pre.tau2[i] == 0.0 {
                    // Point mass: the ReLU of a constant.
                    mu.push(pre.mu[i].max(0.0));
                    var.push(0.0);
                    tau2.push(0.0);
                } else {
                    let m = relu_mean(pre.mu[i], pre.tau2[i], pre.nu)?;
                    let v = relu_variance(pre.mu[i], pre.tau2[i], pre.nu, m)?;
                    mu.push(m);
                    var.push(v);
                    tau2.push(scale_from_variance(v, pre.nu)?);
                }
            }
            z_mu = mu.clone();
            z_cov = var.clone();
            Some(PostActivationMoments { mu, var, tau2, nu: pre.nu })
        } else {
            None
        };
        layers.push(LayerTrace { pre, post });
    }

    let out = &layers[last].pre;
    let predictive_var = out.var[0] + noise_var;
    let predictive = UnivariateT::new(
        out.mu[0],
        scale_from_variance(predictive_var, out.nu)?,
        out.nu,
    )?;
    Ok((
        predictive,
        ForwardTrace {
            input: x.to_vec(),
            layers,
        },
    ))
}
