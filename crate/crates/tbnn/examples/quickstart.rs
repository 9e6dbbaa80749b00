//! Train on the synthetic linear task and print test metrics plus the
//! predictive distribution at one point.

use tbnn::backward::BackwardOptions;
use tbnn::data::{evaluate, split, synthetic_linear};
use tbnn::network::{init_network, predict, train_online, NetworkConfig};

fn main() -> Result<(), tbnn::Error> {
    let data = synthetic_linear(500, 0.1, 7);
    let (train, test) = split(&data, 0.9, 8)?;
    let cfg = NetworkConfig {
        layer_widths: vec![1, 50, 1], // input, hidden, output
        nu0: 12.0,
        scale0: 0.01,
        noise_var: 0.01,
        seed: 9,
    };
    let mut net = init_network(&cfg)?;
    train_online(
        &mut net,
        train.features.view(),
        &train.targets,
        cfg.noise_var,
        &BackwardOptions::default(),
    )?;
    let metrics = evaluate(&net, &test, cfg.noise_var)?;
    let predictive = predict(&net, &[1.0], cfg.noise_var)?;
    println!(
        "test rmse {:.3}, nll {:.3} over {} rows",
        metrics.rmse, metrics.nll, metrics.n
    );
    println!(
        "predictive at x = 1.0: t(mu = {:.3}, tau2 = {:.4}, nu = {})",
        predictive.mu, predictive.tau2, predictive.nu
    );
    Ok(())
}
