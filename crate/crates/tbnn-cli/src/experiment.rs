//! Orchestration for the train-eval, sweep and bench subcommands.

use rayon::prelude::*;
use std::time::Instant;

use crate::report::*;
use crate::{Failure, OodStdSource};
use tbnn::backward::BackwardOptions;
use tbnn::data::{
    evaluate, feature_std, normalize_fit_apply, ood_relative_errors, ood_transform_with_std,
    shuffled_indices, split, Dataset, MetricSet, NormalizeMode, OodScenario,
};
use tbnn::forward::forward_pass;
use tbnn::network::{init_network, train_online, NetworkConfig};
use tbnn::oracle::derive_seed;

pub struct TrainEvalSpec {
    pub data_label: String,
    pub dataset: Dataset,
    pub target_col: Option<usize>,
    pub has_header: bool,
    pub hidden: Vec<usize>,
    pub nu0: f64,
    pub scale0: f64,
    pub noise_var: f64,
    pub runs: usize,
    pub seed: u64,
    pub normalize: NormalizeMode,
    pub ood: bool,
    pub ood_std: OodStdSource,
    pub train_frac: f64,
    pub load_s: f64,
}

impl TrainEvalSpec {
    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            data: self.data_label.clone(),
            target_col: self.target_col,
            has_header: self.has_header,
            hidden: self.hidden.clone(),
            nu0: self.nu0,
            scale0: self.scale0,
            noise_var: self.noise_var,
            runs: self.runs,
            seed: self.seed,
            normalize: self.normalize,
            ood: self.ood,
            ood_std: self.ood_std.label().to_string(),
            train_frac: self.train_frac,
        }
    }
}

fn single_run(spec: &TrainEvalSpec, run: usize) -> RunOutcome {
    let order_seed = derive_seed(spec.seed, run as u64);
    let order = shuffled_indices(spec.dataset.len(), order_seed);
    let order_digest = permutation_digest(&order);
    let outcome = (|| -> Result<(MetricSet, Option<tbnn::data::OodReport>), tbnn::Error> {
        let (train, test) = split(&spec.dataset, spec.train_frac, order_seed)?;
        let (train, test, _) = normalize_fit_apply(&train, &test, spec.normalize);
        let mut widths = vec![train.n_features()];
        widths.extend_from_slice(&spec.hidden);
        widths.push(1);
        let cfg = NetworkConfig {
            layer_widths: widths,
            nu0: spec.nu0,
            scale0: spec.scale0,
            noise_var: spec.noise_var,
            seed: derive_seed(order_seed, 1),
        };
        let mut net = init_network(&cfg)?;
        train_online(
            &mut net,
            train.features.view(),
            &train.targets,
            spec.noise_var,
            &BackwardOptions::default(),
        )?;
        let metrics = evaluate(&net, &test, spec.noise_var)?;
        let ood = if spec.ood {
            let std = match spec.ood_std {
                OodStdSource::Test => feature_std(&test),
                OodStdSource::Train => feature_std(&train),
            };
            let per_scenario: Vec<MetricSet> = OodScenario::ALL
                .iter()
                .map(|s| evaluate(&net, &ood_transform_with_std(&test, *s, &std), spec.noise_var))
                .collect::<Result<_, _>>()?;
            Some(ood_relative_errors(
                &metrics,
                &[per_scenario[0], per_scenario[1], per_scenario[2]],
            ))
        } else {
            None
        };
        Ok((metrics, ood))
    })();
    match outcome {
        Ok((metrics, ood)) => RunOutcome {
            run,
            order_seed,
            order_digest,
            metrics: Some(metrics),
            ood,
            error: None,
        },
        Err(e) => RunOutcome {
            run,
            order_seed,
            order_digest,
            metrics: None,
            ood: None,
            error: Some(e.to_string()),
        },
    }
}

pub fn run_train_eval(spec: &TrainEvalSpec) -> Result<ExperimentReport, Failure> {
    if spec.runs == 0 {
        return Err(Failure::Usage("--runs must be at least 1".into()));
    }
    let t0 = Instant::now();
    let mut runs: Vec<RunOutcome> = (0..spec.runs)
        .into_par_iter()
        .map(|r| single_run(spec, r))
        .collect();
    runs.sort_by_key(|r| r.run);
    let train_eval_s = t0.elapsed().as_secs_f64();

    let ok: Vec<&RunOutcome> = runs.iter().filter(|r| r.metrics.is_some()).collect();
    if ok.is_empty() {
        let first = runs
            .iter()
            .find_map(|r| r.error.clone())
            .unwrap_or_else(|| "unknown".into());
        return Err(Failure::Numeric(format!("every run failed; first error: {first}")));
    }
    let rmses: Vec<f64> = ok.iter().map(|r| r.metrics.unwrap().rmse).collect();
    let nlls: Vec<f64> = ok.iter().map(|r| r.metrics.unwrap().nll).collect();
    let aggregate = Aggregate {
        rmse_median: median(&rmses),
        rmse_std: std_dev(&rmses),
        nll_median: median(&nlls),
        nll_std: std_dev(&nlls),
        succeeded: ok.len(),
        failed: runs.len() - ok.len(),
    };
    let ood_aggregate = if spec.ood {
        let pick = |f: &dyn Fn(&tbnn::data::OodReport) -> f64| -> Vec<f64> {
            ok.iter().filter_map(|r| r.ood.as_ref()).map(f).collect()
        };
        let deltas_rmse: Vec<f64> = ok
            .iter()
            .filter_map(|r| r.ood.as_ref().and_then(|o| o.delta_rmse_pct))
            .collect();
        let deltas_nll: Vec<f64> = ok
            .iter()
            .filter_map(|r| r.ood.as_ref().and_then(|o| o.delta_nll_pct))
            .collect();
        Some(OodAggregate {
            scale01_rmse_median: median(&pick(&|o| o.scale01.rmse)),
            scale01_nll_median: median(&pick(&|o| o.scale01.nll)),
            scale2_rmse_median: median(&pick(&|o| o.scale2.rmse)),
            scale2_nll_median: median(&pick(&|o| o.scale2.nll)),
            plus3std_rmse_median: median(&pick(&|o| o.plus3std.rmse)),
            plus3std_nll_median: median(&pick(&|o| o.plus3std.nll)),
            delta_rmse_pct_median: if deltas_rmse.is_empty() {
                None
            } else {
                Some(median(&deltas_rmse))
            },
            delta_nll_pct_median: if deltas_nll.is_empty() {
                None
            } else {
                Some(median(&deltas_nll))
            },
        })
    } else {
        None
    };

    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        tool_version: tool_version(),
        command: "train-eval",
        config: spec.echo(),
        runs,
        aggregate: Some(aggregate),
        ood_aggregate,
        timings: Timings {
            load_s: spec.load_s,
            train_eval_s,
            total_s: spec.load_s + train_eval_s,
        },
    })
}

pub fn print_train_eval_summary(r: &ExperimentReport) {
    let a = r.aggregate.as_ref().expect("aggregate present on success");
    println!(
        "train-eval on {} | hidden {:?} nu0 {} scale0 {} noise {} | {} runs ({} failed)",
        r.config.data, r.config.hidden, r.config.nu0, r.config.scale0, r.config.noise_var,
        r.config.runs, a.failed
    );
    println!(
        "  rmse median {:.4} (std {:.4}) | nll median {:.4} (std {:.4})",
        a.rmse_median, a.rmse_std, a.nll_median, a.nll_std
    );
    if let Some(o) = &r.ood_aggregate {
        println!(
            "  ood medians rmse(nll): x0.1 {:.4} ({:.4}) | x2 {:.4} ({:.4}) | +3sd {:.4} ({:.4})",
            o.scale01_rmse_median,
            o.scale01_nll_median,
            o.scale2_rmse_median,
            o.scale2_nll_median,
            o.plus3std_rmse_median,
            o.plus3std_nll_median
        );
        println!(
            "  ood delta medians: rmse {:?}% nll {:?}%",
            o.delta_rmse_pct_median, o.delta_nll_pct_median
        );
    }
    println!(
        "  timings: load {:.3} s, train+eval {:.3} s",
        r.timings.load_s, r.timings.train_eval_s
    );
}

pub enum SweepAxis {
    Scale0,
    Nu0,
    Depth,
}

pub fn run_sweep(
    base: &TrainEvalSpec,
    axis: &SweepAxis,
    values: &[f64],
) -> Result<SweepReport, Failure> {
    if values.is_empty() {
        return Err(Failure::Usage("--values must not be empty".into()));
    }
    let mut reports = Vec::with_capacity(values.len());
    for &v in values {
        let mut spec = TrainEvalSpec {
            data_label: base.data_label.clone(),
            dataset: base.dataset.clone(),
            target_col: base.target_col,
            has_header: base.has_header,
            hidden: base.hidden.clone(),
            nu0: base.nu0,
            scale0: base.scale0,
            noise_var: base.noise_var,
            runs: base.runs,
            seed: base.seed,
            normalize: base.normalize,
            ood: base.ood,
            ood_std: base.ood_std,
            train_frac: base.train_frac,
            load_s: 0.0,
        };
        let axis_name = match axis {
            SweepAxis::Scale0 => {
                spec.scale0 = v;
                "scale0"
            }
            SweepAxis::Nu0 => {
                spec.nu0 = v;
                "nu0"
            }
            SweepAxis::Depth => {
                let depth = v as usize;
                if depth == 0 || (v - depth as f64).abs() > 0.0 {
                    return Err(Failure::Usage(format!("depth value {v} must be a positive integer")));
                }
                let width = *base.hidden.first().unwrap_or(&50);
                spec.hidden = vec![width; depth];
                "depth"
            }
        };
        let mut report = run_train_eval(&spec)?;
        report.command = "sweep";
        let a = report.aggregate.as_ref().unwrap();
        println!(
            "  {axis_name} = {v:<8} rmse median {:.4} (std {:.4})  nll median {:.4} (std {:.4})  failed {}",
            a.rmse_median, a.rmse_std, a.nll_median, a.nll_std, a.failed
        );
        reports.push(report);
    }
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        tool_version: tool_version(),
        command: "sweep",
        axis: match axis {
            SweepAxis::Scale0 => "scale0",
            SweepAxis::Nu0 => "nu0",
            SweepAxis::Depth => "depth",
        }
        .to_string(),
        values: values.to_vec(),
        reports,
    })
}

pub fn run_bench(
    input_dim: usize,
    widths: &[usize],
    samples: usize,
    seed: u64,
) -> Result<BenchReport, Failure> {
    if widths.len() < 2 {
        return Err(Failure::Usage(
            "--widths needs at least two entries to form a scaling ratio".into(),
        ));
    }
    let t_load = Instant::now();
    let ds = tbnn::data::synthetic_linear(samples.max(64), 0.1, seed);
    // Widen the one-column synthetic features to the requested input
    // dimension with deterministic lags.
    let features = ndarray::Array2::from_shape_fn((ds.len(), input_dim), |(i, j)| {
        ds.features[[(i + 7 * j) % ds.len(), 0]]
    });
    let load_s = t_load.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let mut medians_us = Vec::with_capacity(widths.len());
    for &w in widths {
        let cfg = NetworkConfig {
            layer_widths: vec![input_dim, w, 1],
            nu0: 12.0,
            scale0: 0.01,
            noise_var: 1.0,
            seed: derive_seed(seed, w as u64),
        };
        let mut net = init_network(&cfg).map_err(|e| Failure::Numeric(e.to_string()))?;
        let warmup = 20.min(ds.len());
        for i in 0..warmup {
            step(&mut net, &features, &ds.targets, i).map_err(|e| Failure::Numeric(e.to_string()))?;
        }
        let mut per_sample = Vec::with_capacity(samples);
        for i in 0..samples {
            let idx = i % ds.len();
            let t = Instant::now();
            step(&mut net, &features, &ds.targets, idx)
                .map_err(|e| Failure::Numeric(e.to_string()))?;
            per_sample.push(t.elapsed().as_secs_f64() * 1e6);
        }
        medians_us.push(median(&per_sample));
    }
    let ratio = medians_us.last().unwrap() / medians_us.first().unwrap();
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        tool_version: tool_version(),
        command: "bench",
        input_dim,
        samples,
        widths: widths.to_vec(),
        median_per_sample_us: medians_us,
        ratio,
        timings: Timings {
            load_s,
            train_eval_s: t0.elapsed().as_secs_f64(),
            total_s: load_s + t0.elapsed().as_secs_f64(),
        },
    })
}

fn step(
    net: &mut [tbnn::network::LayerState],
    features: &ndarray::Array2<f64>,
    targets: &[f64],
    i: usize,
) -> Result<(), tbnn::Error> {
    let x = features.row(i).to_vec();
    let (_, trace) = forward_pass(net, &x, 1.0)?;
    tbnn::backward::backward_pass(net, &trace, targets[i % targets.len()], 1.0, &BackwardOptions::default())
}
