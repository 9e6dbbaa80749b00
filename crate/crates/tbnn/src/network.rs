//! Model assembly, initialization, the single-pass online training loop, and
//! prediction.

use crate::backward::{backward_pass, BackwardOptions};
use crate::error::{Error, Result};
use crate::forward::{forward_pass, PostActivationMoments, PreActivationMoments};
use crate::tdist::UnivariateT;
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Posterior state of one layer: mean-field t over the augmented weight
/// matrix, bias column folded in as the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    /// fan_out x (fan_in + 1) weight locations.
    pub w_mu: Array2<f64>,
    /// Matching diagonal squared scales.
    pub w_tau2: Array2<f64>,
    /// Shared degrees of freedom of this layer's weights.
    pub nu_w: f64,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Construction-time knobs. `layer_widths` is the full chain
/// [input_dim, hidden..., output_dim].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layer_widths: Vec<usize>,
    /// Initial degrees of freedom for every layer.
    pub nu0: f64,
    /// Initial squared scale put on every weight (the diagonal value).
    pub scale0: f64,
    /// Aleatoric output-noise variance.
    pub noise_var: f64,
    pub seed: u64,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub layers: Vec<LayerTrace>,
}

/// Cached moments for one layer: pre-activation always, post-activation for
/// hidden layers only (the output layer has no activation).
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub pre: PreActivationMoments,
    pub post: Option<PostActivationMoments>,
}

/// Per-sample record written by [`train_online`]: the predictive law before
/// the sample's update, which is what prequential scoring needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub predictive: UnivariateT,
}

/// Draw a fresh network: weight means i.i.d. standard normal from the seeded
/// stream, every squared scale set to `scale0`, every layer at `nu0` degrees
/// of freedom. The bias column is initialized exactly like any other weight.
pub fn init_network(config: &NetworkConfig) -> Result<Vec<LayerState>> {
    if config.layer_widths.len() < 2 {
        return Err(Error::Config(format!(
            "layer_widths needs input and output entries, got {:?}",
            config.layer_widths
        )));
    }
    if config.layer_widths.contains(&0) {
        return Err(Error::Config("layer widths must be positive".into()));
    }
    if !(config.nu0.is_finite() && config.nu0 > 2.0) {
        return Err(Error::Config(format!("nu0 = {} must be > 2", config.nu0)));
    }
    if !(config.scale0.is_finite() && config.scale0 > 0.0) {
        return Err(Error::Config(format!("scale0 = {} must be > 0", config.scale0)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layers = Vec::with_capacity(config.layer_widths.len() - 1);
    for w in config.layer_widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let w_mu = Array2::from_shape_fn((fan_out, fan_in + 1), |_| {
            StandardNormal.sample(&mut rng)
        });
        let w_tau2 = Array2::from_elem((fan_out, fan_in + 1), config.scale0);
        layers.push(LayerState {
            w_mu,
            w_tau2,
            nu_w: config.nu0,
            fan_in,
            fan_out,
        });
    }
    Ok(layers)
}

/// One full online pass over the dataset in the given order: forward, log the
/// predictive, then update the posterior from the observation. A numeric
/// failure aborts with the index of the offending sample attached.
pub fn train_online(
    network: &mut [LayerState],
    features: ArrayView2<'_, f64>,
    targets: &[f64],
    noise_var: f64,
    opts: &BackwardOptions,
) -> Result<Vec<SampleRecord>> {
    if features.nrows() != targets.len() {
        return Err(Error::Dimension {
            context: "train_online targets",
            expected: features.nrows(),
            actual: targets.len(),
        });
    }
    let mut log = Vec::with_capacity(targets.len());
    for (i, (row, &y)) in features.rows().into_iter().zip(targets).enumerate() {
        let step = (|| -> Result<UnivariateT> {
            let x = row.to_vec();
            let (predictive, trace) = forward_pass(network, &x, noise_var)?;
            backward_pass(network, &trace, y, noise_var, opts)?;
            Ok(predictive)
        })();
        match step {
            Ok(predictive) => log.push(SampleRecord { index: i, predictive }),
            Err(e) => return Err(e.at_sample(i)),
        }
    }
    Ok(log)
}

/// Predictive distribution at `x` for the current posterior; pure.
pub fn predict(network: &[LayerState], x: &[f64], noise_var: f64) -> Result<UnivariateT> {
    forward_pass(network, x, noise_var).map(|(p, _)| p)
}
