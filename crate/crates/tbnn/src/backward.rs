//! Analytic backward pass: moment-matched Student's-t posterior updates for
//! pre-activations, weights and post-activations, from the output layer back
//! to the input.
//!
//! Every update step conditions a block X1 on a block X2 whose posterior is
//! already known, with diagonal X2 scale. The posterior moments are
//!
//!   mu_1|D    = mu_1 + S12 S2^{-1} (mu_2|D - mu_2)
//!   scale_1|D = factor * (S1 - S12 S2^{-1} S21) + S12 S2^{-1} S2|D S2^{-1} S12^T
//!   nu_1|D    = nu_1 + 1
//!
//! where factor = (nu + sum_k ((mu_2|D - mu_2)_k^2 + (S2|D)_k) / (S2)_k) / (nu + 1)
//! sums over every element of X2 and nu is the DOF of X2's prior. Stored
//! parameters stay in scale form end to end; the variance-form denominator
//! (nu - 1 instead of nu + 1) exists for the Monte Carlo oracle.
//!
//! Cross blocks are derived in covariance space (they come from E[..] algebra)
//! and converted to scale form via the (nu-2)/nu rescaling before entering the
//! update. The conversion is what keeps the conditional base
//! S1 - S12 S2^{-1} S21 nonnegative: Cauchy-Schwarz bounds the covariance by
//! the product of variances, and the uniform rescaling carries that bound into
//! scale space. Feeding the raw covariance in as a scale breaks the bound for
//! strongly coupled coordinates (a ReLU unit operating in its linear regime)
//! and drives conditional scales negative.

use crate::error::{Error, Result};
use crate::network::{ForwardTrace, LayerState};
use crate::tdist::{CrossScale, DiagonalTVector};
use ndarray::Array2;

/// Below this, an X2 prior scale entry is treated as carrying no information:
/// its gain is zero and it contributes the no-information value 1 to the
/// factor sum (inverting it would overflow).
const SCALE_FLOOR: f64 = 1e-300;

/// Which degrees of freedom enter the a-z cross-scale term. The source
/// formula's subscript is ambiguous between the downstream post-activation
/// and the layer input; both are exposed, downstream is the default, and the
/// two coincide during ordinary training (all layers share one DOF value).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossScaleDof {
    #[default]
    Downstream,
    Input,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BackwardOptions {
    pub cross_scale_dof: CrossScaleDof,
}

/// Moment-matched posterior of one block, in scale form.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorUpdate {
    pub mu: Vec<f64>,
    pub scale: Vec<f64>,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DenominatorForm {
    /// Stored scale parameters: denominator nu + d2.
    Scale,
    /// True posterior variance: denominator nu + d2 - 2.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FactorNorm {
    /// Plain sum over the message coordinates, as the scalar-case algebra
    /// prints it.
    Sum,
    /// Sum divided by the message width. For vector messages this is what
    /// keeps a no-information update exactly neutral: with the scalar
    /// denominator nu + 1, the raw sum multiplies every scale by roughly
    /// (nu + M)/(nu + 1) per sample and a width-50 layer diverges within
    /// tens of samples. Identical to Sum when the message is scalar.
    Mean,
}

/// Cross term between a pre-activation and its ReLU output, in covariance
/// space: E[a f(a)] - mu_a mu_z = E[f(a)^2] - mu_a mu_z, with E[f(a)^2]
/// recovered from the stored z scale as nu/(nu-2) tau2_z + mu_z^2.
pub fn cross_scale_a_z(mu_a: f64, mu_z: f64, tau2_z: f64, nu_z: f64) -> Result<f64> {
    if !nu_z.is_finite() || nu_z <= 2.0 {
        return Err(Error::domain(
            "cross_scale_a_z",
            format!("nu_z = {nu_z} must be > 2"),
        ));
    }
    if !(tau2_z.is_finite() && tau2_z >= 0.0) {
        return Err(Error::domain(
            "cross_scale_a_z",
            format!("tau2_z = {tau2_z} must be >= 0"),
        ));
    }
    Ok(nu_z / (nu_z - 2.0) * tau2_z + mu_z * mu_z - mu_a * mu_z)
}

/// Cross-covariance between the stacked (W, z) block and the pre-activation
/// vector a = W z / sqrt(fan_out), for mean-field W independent of z.
///
/// Row i of W couples only to a_i; every z_j couples to every a_i. Both
/// blocks carry the 1/sqrt(fan_out) layer scaling and live in covariance
/// space; rescale by (nu-2)/nu before use as a cross-scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCovWza {
    /// Cov(W_ij, a_i) / sqrt(m): fan_out x (fan_in + 1), aligned with the
    /// layer's weight grid.
    pub w_rows: Array2<f64>,
    /// Cov(z_j, a_i) / sqrt(m): (fan_in + 1) x fan_out.
    pub z_rows: Array2<f64>,
}

pub fn cross_cov_wz_a(layer: &LayerState, z_in_mu: &[f64], z_in_cov: &[f64]) -> Result<CrossCovWza> {
    let cols = layer.fan_in + 1;
    if z_in_mu.len() != cols {
        return Err(Error::Dimension {
            context: "cross_cov_wz_a input mean",
            expected: cols,
            actual: z_in_mu.len(),
        });
    }
    if z_in_cov.len() != cols {
        return Err(Error::Dimension {
            context: "cross_cov_wz_a input covariance",
            expected: cols,
            actual: z_in_cov.len(),
        });
    }
    let nu = layer.nu_w;
    if nu <= 2.0 {
        return Err(Error::domain(
            "cross_cov_wz_a",
            format!("nu = {nu} must be > 2"),
        ));
    }
    let root_m = (layer.fan_out as f64).sqrt();
    let w_cov_factor = nu / (nu - 2.0);
    let w_rows = Array2::from_shape_fn((layer.fan_out, cols), |(i, j)| {
        w_cov_factor * layer.w_tau2[[i, j]] * z_in_mu[j] / root_m
    });
    let z_rows = Array2::from_shape_fn((cols, layer.fan_out), |(j, i)| {
        z_in_cov[j] * layer.w_mu[[i, j]] / root_m
    });
    Ok(CrossCovWza { w_rows, z_rows })
}

/// The data-dependent factor shared by every coordinate of an update:
/// (nu + sum_k ((dmu_k)^2 + post_scale_k) / prior_scale_k) / denominator,
/// with the sum optionally averaged over the message width.
fn update_factor(
    nu: f64,
    x2_mu: &[f64],
    x2_scale: &[f64],
    x2_post_mu: &[f64],
    x2_post_scale: &[f64],
    form: DenominatorForm,
    norm: FactorNorm,
) -> f64 {
    let sum: f64 = (0..x2_mu.len())
        .map(|k| {
            if x2_scale[k] < SCALE_FLOOR {
                1.0
            } else {
                let d = x2_post_mu[k] - x2_mu[k];
                (d * d + x2_post_scale[k]) / x2_scale[k]
            }
        })
        .sum();
    let evidence = match norm {
        FactorNorm::Sum => sum,
        FactorNorm::Mean => sum / (x2_mu.len().max(1) as f64),
    };
    let denom = match form {
        DenominatorForm::Scale => nu + 1.0,
        DenominatorForm::Variance => nu - 1.0,
    };
    (nu + evidence) / denom
}

#[allow(clippy::too_many_arguments)]
fn update_core(
    mu1: &[f64],
    scale1: &[f64],
    x2_mu: &[f64],
    x2_scale: &[f64],
    x2_post_mu: &[f64],
    x2_post_scale: &[f64],
    cross: &CrossScale<'_>,
    nu_joint: f64,
    nu_out: f64,
    form: DenominatorForm,
    norm: FactorNorm,
) -> Result<PosteriorUpdate> {
    let d1 = mu1.len();
    let d2 = x2_mu.len();
    for (what, len, want) in [
        ("x1 scale", scale1.len(), d1),
        ("x2 scale", x2_scale.len(), d2),
        ("x2 posterior mean", x2_post_mu.len(), d2),
        ("x2 posterior scale", x2_post_scale.len(), d2),
    ] {
        if len != want {
            return Err(Error::Dimension {
                context: "posterior_update",
                expected: want,
                actual: len,
            });
        }
        let _ = what;
    }
    let (cr, cc) = cross.dims();
    if cr != d1 || cc != d2 {
        return Err(Error::Dimension {
            context: "posterior_update cross block",
            expected: d1 * d2,
            actual: cr * cc,
        });
    }

    let factor = update_factor(nu_joint, x2_mu, x2_scale, x2_post_mu, x2_post_scale, form, norm);
    let mut mu = Vec::with_capacity(d1);
    let mut scale = Vec::with_capacity(d1);
    for i in 0..d1 {
        let mut shift = 0.0;
        let mut reduction = 0.0;
        let mut propagated = 0.0;
        for k in 0..d2 {
            if x2_scale[k] < SCALE_FLOOR {
                continue;
            }
            let s12 = cross.at(i, k);
            if s12 == 0.0 {
                continue;
            }
            let gain = s12 / x2_scale[k];
            shift += gain * (x2_post_mu[k] - x2_mu[k]);
            reduction += s12 * gain;
            propagated += gain * gain * x2_post_scale[k];
        }
        mu.push(mu1[i] + shift);
        scale.push(factor * (scale1[i] - reduction) + propagated);
    }
    Ok(PosteriorUpdate {
        mu,
        scale,
        nu: nu_out,
    })
}

/// Moment-matched posterior of X1 given X2's posterior (mu, scale), in scale
/// form. The factor's degrees of freedom come from X2's prior (the joint DOF
/// convention); the returned DOF is X1's prior plus one.
pub fn posterior_update(
    prior: &DiagonalTVector,
    x2_prior: &DiagonalTVector,
    x2_post_mu: &[f64],
    x2_post_scale: &[f64],
    cross_scale: &CrossScale<'_>,
) -> Result<PosteriorUpdate> {
    update_core(
        &prior.mu,
        &prior.tau2,
        &x2_prior.mu,
        &x2_prior.tau2,
        x2_post_mu,
        x2_post_scale,
        cross_scale,
        x2_prior.nu,
        prior.nu + 1.0,
        DenominatorForm::Scale,
        FactorNorm::Sum,
    )
}

/// Same update with the variance-space denominator nu + d2 - 2. The joint
/// prior stays in scale form; `x2_post_scale` is read as X2's posterior
/// variance and the output scale slot holds X1's posterior variance. This is
/// the form the Monte Carlo oracle reproduces exactly.
pub fn posterior_update_variance_form(
    prior: &DiagonalTVector,
    x2_prior: &DiagonalTVector,
    x2_post_mu: &[f64],
    x2_post_scale: &[f64],
    cross_scale: &CrossScale<'_>,
) -> Result<PosteriorUpdate> {
    update_core(
        &prior.mu,
        &prior.tau2,
        &x2_prior.mu,
        &x2_prior.tau2,
        x2_post_mu,
        x2_post_scale,
        cross_scale,
        x2_prior.nu,
        prior.nu + 1.0,
        DenominatorForm::Variance,
        FactorNorm::Sum,
    )
}

/// The Gaussian-limit update shared by Kalman-style BNN trainers: identical
/// mean update, covariance update without the data-dependent factor, degrees
/// of freedom untouched.
pub fn gaussian_limit_update(
    prior: &DiagonalTVector,
    x2_prior: &DiagonalTVector,
    x2_post_mu: &[f64],
    x2_post_scale: &[f64],
    cross_scale: &CrossScale<'_>,
) -> Result<PosteriorUpdate> {
    let mut upd = update_core(
        &prior.mu,
        &prior.tau2,
        &x2_prior.mu,
        &x2_prior.tau2,
        x2_post_mu,
        x2_post_scale,
        cross_scale,
        x2_prior.nu,
        prior.nu,
        DenominatorForm::Scale,
        FactorNorm::Sum,
    )?;
    // Redo the scale without the factor: S1|2 + gain term.
    for (i, out) in upd.scale.iter_mut().enumerate() {
        let mut reduction = 0.0;
        let mut propagated = 0.0;
        for (k, (tau2_k, post_k)) in x2_prior.tau2.iter().zip(x2_post_scale).enumerate() {
            if *tau2_k < SCALE_FLOOR {
                continue;
            }
            let s12 = cross_scale.at(i, k);
            if s12 == 0.0 {
                continue;
            }
            let gain = s12 / tau2_k;
            reduction += s12 * gain;
            propagated += gain * gain * post_k;
        }
        *out = prior.tau2[i] - reduction + propagated;
    }
    Ok(upd)
}

/// One backward sweep for a single observation y, from the output layer down
/// to the input. For each layer l: (i) the pre-activation a_l is updated from
/// the downstream posterior of z_{l+1} (the observation itself at the output
/// layer, where z_{L+1} = a_L + noise), (ii) the weights and the layer input
/// z_l are updated jointly from a_l's posterior, and the z_l posterior
/// becomes the downstream message for layer l-1. Every layer's DOF grows by
/// exactly one.
pub fn backward_pass(
    network: &mut [LayerState],
    trace: &ForwardTrace,
    y: f64,
    noise_var: f64,
    opts: &BackwardOptions,
) -> Result<()> {
    if network.is_empty() {
        return Err(Error::domain("backward_pass", "empty network".to_string()));
    }
    if trace.layers.len() != network.len() {
        return Err(Error::Dimension {
            context: "backward_pass trace",
            expected: network.len(),
            actual: trace.layers.len(),
        });
    }
    if !y.is_finite() {
        return Err(Error::domain("backward_pass", format!("y = {y} is not finite")));
    }
    let last = network.len() - 1;

    // Posterior message for z_{l+1}, produced by the layer above.
    let mut z_msg: Option<(Vec<f64>, Vec<f64>)> = None;

    for l in (0..=last).rev() {
        let tr = &trace.layers[l];
        let nu = network[l].nu_w;
        let scale_conv = (nu - 2.0) / nu;

        // (i) update a_l.
        let a_upd = if l == last {
            // z_{L+1} = a_L + eps observed at y: the recursion starts from
            // posterior mean y with zero spread. The coupling to a_L is a_L's
            // own scale; the prior of z_{L+1} adds the noise in scale form.
            let s2 = [tr.pre.tau2[0] + scale_conv * noise_var];
            let cross = [tr.pre.tau2[0]];
            update_core(
                &tr.pre.mu,
                &tr.pre.tau2,
                &tr.pre.mu,
                &s2,
                &[y],
                &[0.0],
                &CrossScale::Diagonal(&cross),
                nu,
                nu + 1.0,
                DenominatorForm::Scale,
                FactorNorm::Mean,
            )?
        } else {
            let post = tr.post.as_ref().expect("hidden layer carries a post-activation");
            let (msg_mu, msg_scale) = z_msg.take().expect("downstream message present");
            let nu_cross = match opts.cross_scale_dof {
                CrossScaleDof::Downstream => post.nu,
                // The layer input's DOF; the network input is deterministic,
                // so layer 0 falls back to its own weight DOF.
                CrossScaleDof::Input => {
                    if l == 0 {
                        nu
                    } else {
                        trace.layers[l - 1].post.as_ref().map(|p| p.nu).unwrap_or(nu)
                    }
                }
            };
            let cross_conv = (nu_cross - 2.0) / nu_cross;
            let mut cross = Vec::with_capacity(network[l].fan_out);
            for i in 0..network[l].fan_out {
                let cov = cross_scale_a_z(tr.pre.mu[i], post.mu[i], post.tau2[i], nu_cross)?;
                cross.push(cross_conv * cov);
            }
            update_core(
                &tr.pre.mu,
                &tr.pre.tau2,
                &post.mu,
                &post.tau2,
                &msg_mu,
                &msg_scale,
                &CrossScale::Diagonal(&cross),
                nu,
                nu + 1.0,
                DenominatorForm::Scale,
                FactorNorm::Mean,
            )?
        };

        // (ii) update (W_l, z_l) jointly from a_l's posterior.
        let a_mu = &tr.pre.mu;
        let a_scale = &tr.pre.tau2;
        let factor = update_factor(
            nu,
            a_mu,
            a_scale,
            &a_upd.mu,
            &a_upd.scale,
            DenominatorForm::Scale,
            FactorNorm::Mean,
        );

        let (z_in_mu, z_in_cov): (Vec<f64>, Vec<f64>) = if l == 0 {
            let mut mu = trace.input.clone();
            mu.push(1.0);
            let cov = vec![0.0; mu.len()];
            (mu, cov)
        } else {
            let prev = trace.layers[l - 1]
                .post
                .as_ref()
                .expect("hidden layer below carries a post-activation");
            let mut mu = prev.mu.clone();
            mu.push(1.0);
            let mut cov = prev.var.clone();
            cov.push(0.0);
            (mu, cov)
        };
        let cc = cross_cov_wz_a(&network[l], &z_in_mu, &z_in_cov)?;

        let layer = &mut network[l];
        let cols = layer.fan_in + 1;
        for i in 0..layer.fan_out {
            // A degenerate a_i contributes zero gain but the shared factor
            // still applies, exactly as in the general update.
            let degenerate = a_scale[i] < SCALE_FLOOR;
            let dmu = a_upd.mu[i] - a_mu[i];
            for j in 0..cols {
                let (s12, gain) = if degenerate {
                    (0.0, 0.0)
                } else {
                    let s12 = scale_conv * cc.w_rows[[i, j]];
                    (s12, s12 / a_scale[i])
                };
                let cond = layer.w_tau2[[i, j]] - s12 * gain;
                layer.w_mu[[i, j]] += gain * dmu;
                layer.w_tau2[[i, j]] = factor * cond + gain * gain * a_upd.scale[i];
            }
        }
        layer.nu_w += 1.0;

        for (what, grid) in [("mean", &layer.w_mu), ("scale", &layer.w_tau2)] {
            if grid.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: if what == "mean" { "posterior mean" } else { "posterior scale" },
                    context: "backward_pass weight update",
                });
            }
        }
        // The finite check above already rejected NaN, so <= suffices.
        if layer.w_tau2.iter().any(|s| *s <= 0.0) {
            return Err(Error::domain(
                "backward_pass",
                format!("non-positive posterior weight scale in layer {l}"),
            ));
        }

        // z_l message for the layer below (the network input is observed, so
        // layer 0 produces none). The bias coordinate is deterministic and is
        // dropped.
        if l > 0 {
            let prev = trace.layers[l - 1].post.as_ref().expect("checked above");
            let mut msg_mu = Vec::with_capacity(layer.fan_in);
            let mut msg_scale = Vec::with_capacity(layer.fan_in);
            for j in 0..layer.fan_in {
                let mut shift = 0.0;
                let mut reduction = 0.0;
                let mut propagated = 0.0;
                for i in 0..layer.fan_out {
                    if a_scale[i] < SCALE_FLOOR {
                        continue;
                    }
                    let s12 = scale_conv * cc.z_rows[[j, i]];
                    if s12 == 0.0 {
                        continue;
                    }
                    let gain = s12 / a_scale[i];
                    shift += gain * (a_upd.mu[i] - a_mu[i]);
                    reduction += s12 * gain;
                    propagated += gain * gain * a_upd.scale[i];
                }
                msg_mu.push(prev.mu[j] + shift);
                msg_scale.push(factor * (prev.tau2[j] - reduction) + propagated);
            }
            if msg_scale.iter().any(|s| !s.is_finite()) || msg_mu.iter().any(|m| !m.is_finite()) {
                return Err(Error::NonFinite {
                    what: "posterior message",
                    context: "backward_pass z update",
                });
            }
            z_msg = Some((msg_mu, msg_scale));
        }
    }
    Ok(())
}
