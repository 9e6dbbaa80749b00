//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL/SKIPPED line (visible with `cargo test -- --nocapture`).
//!
//! The tests share a lock so the Monte Carlo grids and the timing
//! measurement never run concurrently inside this binary.

use ndarray::Array2;
use std::sync::Mutex;
use std::time::Instant;

use tbnn::backward::{gaussian_limit_update, posterior_update, BackwardOptions};
use tbnn::data::{
    evaluate, ood_relative_errors, ood_transform, split, synthetic_linear, Dataset, MetricSet,
    OodScenario,
};
use tbnn::forward::{forward_pass, relu_mean};
use tbnn::network::{init_network, predict, train_online, NetworkConfig};
use tbnn::oracle::{derive_seed, run_posterior_checks, run_relu_grid};

use tbnn::tdist::{CrossScale, DiagonalTVector};

static SERIAL: Mutex<()> = Mutex::new(());

fn verdict(id: usize, pass: bool, detail: &str) {
    println!(
        "criterion {id}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

fn default_network_config(input_dim: usize, hidden: &[usize], seed: u64) -> NetworkConfig {
    let mut widths = vec![input_dim];
    widths.extend_from_slice(hidden);
    widths.push(1);
    NetworkConfig {
        layer_widths: widths,
        nu0: 12.0,
        scale0: 0.01,
        noise_var: 1.0,
        seed,
    }
}

/// Criterion 1: every analytic ReLU moment matches the sampling oracle at
/// 4 standard errors over the 84-point grid, 10^6 samples per point, in
/// under two minutes.
#[test]
fn criterion_1_relu_moments_vs_oracle() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let reports = run_relu_grid(1_000_000, 7, 0.0).expect("grid preconditions hold");
    let elapsed = t0.elapsed().as_secs_f64();
    let failures: Vec<_> = reports.iter().filter(|r| !r.pass).collect();
    for f in &failures {
        println!("  {}", f.line());
    }
    verdict(
        1,
        failures.is_empty() && elapsed < 120.0,
        &format!(
            "ReLU moments vs Monte Carlo oracle: {}/{} checks at 4 SE in {elapsed:.1} s",
            reports.len() - failures.len(),
            reports.len()
        ),
    );
}

/// Criterion 2: the backward update's moment matching holds at 4 standard
/// errors on 25 randomized scalar configurations with nu in {5, 12, 50}.
#[test]
fn criterion_2_posterior_moment_matching() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let reports = run_posterior_checks(25, 1_000_000, 1234, 0.0).expect("valid configs");
    let elapsed = t0.elapsed().as_secs_f64();
    let failures: Vec<_> = reports.iter().filter(|r| !r.pass).collect();
    for f in &failures {
        println!("  {}", f.line());
    }
    verdict(
        2,
        failures.is_empty() && elapsed < 120.0,
        &format!(
            "posterior moments vs marginalization oracle: {}/{} checks at 4 SE in {elapsed:.1} s",
            reports.len() - failures.len(),
            reports.len()
        ),
    );
}

/// Criterion 3: at nu = 10^6 the t update and the Gaussian-limit update agree
/// to 1e-4 relative on 20 random configurations, and at nu = 10^8 the ReLU
/// mean matches the Gaussian closed form to 1e-4 relative.
#[test]
fn criterion_3_gaussian_limit_equivalence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(88);
    let mut worst_update = 0.0f64;
    for _ in 0..20 {
        let nu = 1e6;
        let s1 = 0.5 + 2.5 * rng.random::<f64>();
        let s2 = 0.5 + 2.5 * rng.random::<f64>();
        let corr: f64 = -0.8 + 1.6 * rng.random::<f64>();
        let cross = [corr * (s1 * s2).sqrt()];
        let x1 = DiagonalTVector::new(vec![rng.random::<f64>()], vec![s1], nu).unwrap();
        let x2 = DiagonalTVector::new(vec![rng.random::<f64>()], vec![s2], nu).unwrap();
        let post_mu = [x2.mu[0] + rng.random::<f64>() - 0.5];
        let post_scale = [s2 * (0.3 + rng.random::<f64>())];
        let t = posterior_update(&x1, &x2, &post_mu, &post_scale, &CrossScale::Diagonal(&cross))
            .unwrap();
        let g =
            gaussian_limit_update(&x1, &x2, &post_mu, &post_scale, &CrossScale::Diagonal(&cross))
                .unwrap();
        worst_update = worst_update.max((t.scale[0] - g.scale[0]).abs() / g.scale[0]);
    }

    let mut worst_relu = 0.0f64;
    for &mu in &[-3.0, -1.0, -0.1, 0.0, 0.1, 1.0, 3.0] {
        for &tau2 in &[0.25, 1.0, 4.0] {
            let t = relu_mean(mu, tau2, 1e8).unwrap();
            let g = gaussian_relu_mean(mu, tau2.sqrt());
            worst_relu = worst_relu.max((t - g).abs() / g.abs());
        }
    }
    verdict(
        3,
        worst_update < 1e-4 && worst_relu < 1e-4,
        &format!(
            "Gaussian limits: update deviation {worst_update:.2e} (20 configs, nu=1e6), \
             ReLU mean deviation {worst_relu:.2e} (21 points, nu=1e8), tolerance 1e-4"
        ),
    );
}

/// Criterion 4: after training on N = 300 samples every layer's DOF equals
/// nu0 + N exactly.
#[test]
fn criterion_4_dof_bookkeeping() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let ds = synthetic_linear(300, 0.1, 404);
    let cfg = default_network_config(1, &[50], 405);
    let mut net = init_network(&cfg).unwrap();
    train_online(
        &mut net,
        ds.features.view(),
        &ds.targets,
        0.01,
        &BackwardOptions::default(),
    )
    .unwrap();
    let ok = net.iter().all(|l| l.nu_w == 12.0 + 300.0);
    verdict(
        4,
        ok,
        &format!(
            "DOF after 300 samples: {:?} (expected 312 in every layer)",
            net.iter().map(|l| l.nu_w).collect::<Vec<_>>()
        ),
    );
}

/// Criterion 5: desk-scale reproduction on the Yacht dataset (308 rows),
/// defaults, 30 runs: median RMSE in [7.4, 23.2] and median NLL in
/// [3.37, 5.17]. SKIPPED when the dataset file is not present.
#[test]
fn criterion_5_yacht_reproduction() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let path = std::env::var("YACHT_CSV").unwrap_or_else(|_| {
        format!(
            "{}/../../data/yacht.csv",
            env!("CARGO_MANIFEST_DIR")
        )
    });
    if !std::path::Path::new(&path).exists() {
        println!(
            "criterion 5: SKIPPED — yacht dataset not found at {path}; criteria 1-4 and 6-8 constitute acceptance"
        );
        return;
    }
    let ds = tbnn::data::load_csv(&path, false, None).expect("yacht csv parses");
    let mut rmses = Vec::new();
    let mut nlls = Vec::new();
    for run in 0..30u64 {
        let seed = derive_seed(2025, run);
        let (train, test) = split(&ds, 0.9, seed).unwrap();
        let cfg = default_network_config(ds.n_features(), &[50], derive_seed(seed, 1));
        let mut net = init_network(&cfg).unwrap();
        train_online(
            &mut net,
            train.features.view(),
            &train.targets,
            cfg.noise_var,
            &BackwardOptions::default(),
        )
        .unwrap();
        let m = evaluate(&net, &test, cfg.noise_var).unwrap();
        rmses.push(m.rmse);
        nlls.push(m.nll);
    }
    let med_rmse = median(&mut rmses);
    let med_nll = median(&mut nlls);
    let ok = (7.4..=23.2).contains(&med_rmse) && (3.37..=5.17).contains(&med_nll);
    verdict(
        5,
        ok,
        &format!("yacht 30-run medians: RMSE {med_rmse:.2} in [7.4, 23.2], NLL {med_nll:.2} in [3.37, 5.17]"),
    );
}

/// Criterion 6: on the synthetic dataset the x2-scaled OOD scenario carries
/// strictly more average predictive variance than the in-distribution test
/// set, and the OOD delta metrics are finite.
#[test]
fn criterion_6_ood_uncertainty_grows() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let noise_var = 0.01;
    let ds = synthetic_linear(500, 0.1, 606);
    let (train, test) = split(&ds, 0.9, 607).unwrap();
    let cfg = NetworkConfig {
        noise_var,
        ..default_network_config(1, &[50], 608)
    };
    let mut net = init_network(&cfg).unwrap();
    train_online(
        &mut net,
        train.features.view(),
        &train.targets,
        noise_var,
        &BackwardOptions::default(),
    )
    .unwrap();

    let avg_var = |d: &Dataset| -> f64 {
        d.features
            .rows()
            .into_iter()
            .map(|r| {
                predict(&net, r.as_slice().unwrap(), noise_var)
                    .unwrap()
                    .variance()
                    .unwrap()
            })
            .sum::<f64>()
            / d.len() as f64
    };
    let in_var = avg_var(&test);
    let scaled = ood_transform(&test, OodScenario::Scale2);
    let ood_var = avg_var(&scaled);

    let in_m = evaluate(&net, &test, noise_var).unwrap();
    let scenario_metrics: Vec<MetricSet> = OodScenario::ALL
        .iter()
        .map(|s| evaluate(&net, &ood_transform(&test, *s), noise_var).unwrap())
        .collect();
    let report = ood_relative_errors(
        &in_m,
        &[scenario_metrics[0], scenario_metrics[1], scenario_metrics[2]],
    );
    let deltas_finite = report.delta_nll_pct.is_some_and(f64::is_finite)
        && report.delta_rmse_pct.is_some_and(f64::is_finite);
    verdict(
        6,
        ood_var > in_var && deltas_finite,
        &format!(
            "avg predictive variance in-dist {in_var:.4} vs x2-scaled {ood_var:.4}; \
             delta_nll {:?}%, delta_rmse {:?}%",
            report.delta_nll_pct, report.delta_rmse_pct
        ),
    );
}

/// Criterion 7: per-sample training time for hidden width 100 stays within
/// 2.5x of width 50 at fixed input dimension (median over 200 samples).
#[test]
#[allow(clippy::needless_range_loop)] // paired feature/target indexing
fn criterion_7_linear_scaling() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let input_dim = 6;
    let n = 200;
    let features = Array2::from_shape_fn((n, input_dim), |(i, j)| {
        (((i * 31 + j * 7) % 17) as f64) * 0.11 - 0.9
    });
    let targets: Vec<f64> = (0..n).map(|i| ((i % 13) as f64) * 0.2 - 1.0).collect();

    // The two widths are timed interleaved, sample by sample, so any
    // time-varying background load lands on both measurements equally and
    // cancels out of the ratio.
    let mut nets: Vec<_> = [50usize, 100]
        .iter()
        .map(|&w| init_network(&default_network_config(input_dim, &[w], 700)).unwrap())
        .collect();
    let mut timed: Vec<Vec<f64>> = vec![Vec::with_capacity(n), Vec::with_capacity(n)];
    // Warm-up so allocator and caches settle.
    for i in 0..20 {
        for net in nets.iter_mut() {
            let x = features.row(i).to_vec();
            let (_, trace) = forward_pass(net, &x, 1.0).unwrap();
            tbnn::backward::backward_pass(net, &trace, targets[i], 1.0, &BackwardOptions::default())
                .unwrap();
        }
    }
    for i in 0..n {
        for (net, samples) in nets.iter_mut().zip(timed.iter_mut()) {
            let x = features.row(i).to_vec();
            let t0 = Instant::now();
            let (_, trace) = forward_pass(net, &x, 1.0).unwrap();
            tbnn::backward::backward_pass(net, &trace, targets[i], 1.0, &BackwardOptions::default())
                .unwrap();
            samples.push(t0.elapsed().as_secs_f64());
        }
    }
    let medians: Vec<f64> = timed.iter_mut().map(|s| median(s)).collect();
    let ratio = medians[1] / medians[0];
    verdict(
        7,
        ratio <= 2.5,
        &format!(
            "median per-sample time: width 50 = {:.1} us, width 100 = {:.1} us, ratio {ratio:.2} <= 2.5",
            medians[0] * 1e6,
            medians[1] * 1e6
        ),
    );
}

/// Criterion 8: the scale0 and nu0 sweeps complete on the synthetic dataset
/// with zero numeric failures and finite metrics in every cell.
#[test]
fn criterion_8_sweep_stability() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let noise_var = 0.01;
    let ds = synthetic_linear(500, 0.1, 808);
    let (train, test) = split(&ds, 0.9, 809).unwrap();
    let mut cells = Vec::new();
    for &scale0 in &[0.01, 0.1, 1.0, 2.0, 5.0] {
        cells.push((scale0, 12.0));
    }
    for &nu0 in &[12.0, 20.0, 30.0, 50.0, 75.0] {
        cells.push((0.01, nu0));
    }
    let mut failures = Vec::new();
    for (scale0, nu0) in cells {
        let cfg = NetworkConfig {
            layer_widths: vec![1, 50, 1],
            nu0,
            scale0,
            noise_var,
            seed: 810,
        };
        let mut net = init_network(&cfg).unwrap();
        let outcome = train_online(
            &mut net,
            train.features.view(),
            &train.targets,
            noise_var,
            &BackwardOptions::default(),
        )
        .and_then(|_| evaluate(&net, &test, noise_var));
        match outcome {
            Ok(m) if m.rmse.is_finite() && m.nll.is_finite() => {}
            Ok(m) => failures.push(format!("(scale0={scale0}, nu0={nu0}): non-finite {m:?}")),
            Err(e) => failures.push(format!("(scale0={scale0}, nu0={nu0}): {e}")),
        }
    }
    verdict(
        8,
        failures.is_empty(),
        &format!(
            "scale0 {{0.01..5}} and nu0 {{12..75}} sweeps: {} cells, failures: {failures:?}",
            10
        ),
    );
}

/// Supporting forward-module invariant (not a numbered criterion): at
/// nu = 10^6 both ReLU moments match the Gaussian closed forms to 1e-3
/// relative across the full (mu, tau2) grid.
#[test]
fn forward_invariant_gaussian_limit_grid() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let nu = 1e6;
    for &mu in &[-3.0, -1.0, -0.1, 0.0, 0.1, 1.0, 3.0] {
        for &tau2 in &[0.25f64, 1.0, 4.0] {
            let sigma = tau2.sqrt();
            let m_t = relu_mean(mu, tau2, nu).unwrap();
            let m_g = gaussian_relu_mean(mu, sigma);
            assert!(
                (m_t - m_g).abs() <= 1e-3 * m_g.abs(),
                "mean at (mu={mu}, tau2={tau2}): {m_t} vs {m_g}"
            );
            let v_t = tbnn::forward::relu_variance(mu, tau2, nu, m_t).unwrap();
            let v_g = gaussian_relu_variance(mu, sigma);
            assert!(
                (v_t - v_g).abs() <= 1e-3 * v_g.abs(),
                "variance at (mu={mu}, tau2={tau2}): {v_t} vs {v_g}"
            );
        }
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Closed-form E[max(X, 0)] for X ~ N(mu, sigma^2).
fn gaussian_relu_mean(mu: f64, sigma: f64) -> f64 {
    let m = mu / sigma;
    mu * std_normal_cdf(m) + sigma * std_normal_pdf(m)
}

/// Closed-form Var[max(X, 0)] for X ~ N(mu, sigma^2).
fn gaussian_relu_variance(mu: f64, sigma: f64) -> f64 {
    let m = mu / sigma;
    let second = (mu * mu + sigma * sigma) * std_normal_cdf(m) + mu * sigma * std_normal_pdf(m);
    second - gaussian_relu_mean(mu, sigma).powi(2)
}
