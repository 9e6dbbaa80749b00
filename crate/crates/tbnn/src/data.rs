//! Dataset ingestion, splitting, normalization, OOD transforms and the
//! evaluation metrics (RMSE, predictive NLL, OOD relative errors).

use crate::error::{Error, Result};
use crate::network::{predict, LayerState};
use crate::tdist::UnivariateT;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Feature matrix plus scalar targets; finite entries guaranteed after load.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub targets: Vec<f64>,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    fn from_rows(rows: Vec<Vec<f64>>, targets: Vec<f64>, names: Option<Vec<String>>) -> Self {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut features = Array2::zeros((rows.len(), d));
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                features[[i, j]] = *v;
            }
        }
        Dataset {
            features,
            targets,
            feature_names: names,
        }
    }
}

/// Load a comma-separated numeric file: UTF-8, '.' decimal point, no quoting,
/// optional single header line. The target column defaults to the last one.
/// Non-numeric or non-finite cells are rejected with their 1-based data-row
/// and column position.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool, target_column: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Option<Vec<String>> = if has_header {
        match lines.next() {
            Some(h) => Some(h.split(',').map(|s| s.trim().to_string()).collect()),
            None => return Err(Error::CsvFile("empty file".into())),
        }
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    for (i, line) in lines.enumerate() {
        let row_no = i + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if let Some(w) = width {
            if cells.len() != w {
                return Err(Error::Csv {
                    row: row_no,
                    col: cells.len(),
                    msg: format!("expected {w} columns"),
                });
            }
        } else {
            if cells.len() < 2 {
                return Err(Error::Csv {
                    row: row_no,
                    col: cells.len(),
                    msg: "need at least one feature column and one target column".into(),
                });
            }
            width = Some(cells.len());
        }
        let w = width.unwrap();
        let target_idx = target_column.unwrap_or(w - 1);
        if target_idx >= w {
            return Err(Error::CsvFile(format!(
                "target column {target_idx} out of range for {w} columns"
            )));
        }
        let mut feats = Vec::with_capacity(w - 1);
        let mut target = None;
        for (j, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                row: row_no,
                col: j + 1,
                msg: format!("not a number: {:?}", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    row: row_no,
                    col: j + 1,
                    msg: format!("non-finite value {v}"),
                });
            }
            if j == target_idx {
                target = Some(v);
            } else {
                feats.push(v);
            }
        }
        rows.push(feats);
        targets.push(target.expect("target index checked in range"));
    }
    if rows.is_empty() {
        return Err(Error::CsvFile("no data rows".into()));
    }
    let names = header.map(|h| {
        let target_idx = target_column.unwrap_or(h.len().saturating_sub(1));
        h.into_iter()
            .enumerate()
            .filter(|(j, _)| *j != target_idx)
            .map(|(_, n)| n)
            .collect()
    });
    Ok(Dataset::from_rows(rows, targets, names))
}

/// A 1-d regression fixture: y = 2x + noise, x uniform on [-2, 2].
pub fn synthetic_linear(n: usize, noise_sd: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xdist = Uniform::new(-2.0, 2.0).expect("valid range");
    let noise = Normal::new(0.0, noise_sd).expect("valid sd");
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = xdist.sample(&mut rng);
        rows.push(vec![x]);
        targets.push(2.0 * x + noise.sample(&mut rng));
    }
    Dataset::from_rows(rows, targets, Some(vec!["x".into()]))
}

/// The row order a given seed produces: the first floor(n * fraction)
/// entries become the training split, in training order.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Seeded shuffle followed by a head/tail split; the two parts partition the
/// rows. The train side gets floor(n * train_fraction) rows.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction = {train_fraction} must lie in (0, 1)"
        )));
    }
    let n = dataset.len();
    let n_train = (n as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Config(format!(
            "split of {n} rows at fraction {train_fraction} leaves one side empty"
        )));
    }
    let idx = shuffled_indices(n, seed);
    let take = |ids: &[usize]| -> Dataset {
        let rows: Vec<Vec<f64>> = ids
            .iter()
            .map(|&i| dataset.features.row(i).to_vec())
            .collect();
        let targets: Vec<f64> = ids.iter().map(|&i| dataset.targets[i]).collect();
        Dataset::from_rows(rows, targets, dataset.feature_names.clone())
    };
    Ok((take(&idx[..n_train]), take(&idx[n_train..])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMode {
    #[default]
    None,
    Zscore,
}

/// Per-feature statistics fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizeParams {
    pub mode: NormalizeMode,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fit normalization statistics on the train features only and apply them to
/// both splits. Targets are never touched. Constant features pass through
/// unscaled.
pub fn normalize_fit_apply(
    train: &Dataset,
    test: &Dataset,
    mode: NormalizeMode,
) -> (Dataset, Dataset, NormalizeParams) {
    let d = train.n_features();
    match mode {
        NormalizeMode::None => (
            train.clone(),
            test.clone(),
            NormalizeParams {
                mode,
                mean: vec![0.0; d],
                std: vec![1.0; d],
            },
        ),
        NormalizeMode::Zscore => {
            let mean = column_means(train);
            let std = column_stds(train, &mean);
            let apply = |ds: &Dataset| -> Dataset {
                let mut out = ds.clone();
                for mut row in out.features.rows_mut() {
                    for j in 0..d {
                        let s = if std[j] > 0.0 { std[j] } else { 1.0 };
                        row[j] = (row[j] - mean[j]) / s;
                    }
                }
                out
            };
            (apply(train), apply(test), NormalizeParams { mode, mean, std })
        }
    }
}

fn column_means(ds: &Dataset) -> Vec<f64> {
    let n = ds.len() as f64;
    (0..ds.n_features())
        .map(|j| ds.features.column(j).sum() / n)
        .collect()
}

fn column_stds(ds: &Dataset, means: &[f64]) -> Vec<f64> {
    let n = ds.len() as f64;
    (0..ds.n_features())
        .map(|j| {
            let v = ds
                .features
                .column(j)
                .iter()
                .map(|x| (x - means[j]) * (x - means[j]))
                .sum::<f64>()
                / n;
            v.sqrt()
        })
        .collect()
}

/// Per-feature standard deviation (population form), the reference for the
/// +3 sigma OOD shift.
pub fn feature_std(ds: &Dataset) -> Vec<f64> {
    column_stds(ds, &column_means(ds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodScenario {
    /// Inputs scaled by 0.1.
    Scale01,
    /// Inputs scaled by 2.
    Scale2,
    /// Inputs shifted by +3 standard deviations per feature.
    Plus3Std,
}

impl OodScenario {
    pub const ALL: [OodScenario; 3] = [OodScenario::Scale01, OodScenario::Scale2, OodScenario::Plus3Std];

    pub fn label(&self) -> &'static str {
        match self {
            OodScenario::Scale01 => "scale01",
            OodScenario::Scale2 => "scale2",
            OodScenario::Plus3Std => "plus3std",
        }
    }
}

/// Apply one OOD scenario to a copy of the test set; targets are untouched.
/// The +3 sigma shift uses the test set's own per-feature deviation.
pub fn ood_transform(test: &Dataset, scenario: OodScenario) -> Dataset {
    let std = feature_std(test);
    ood_transform_with_std(test, scenario, &std)
}

/// Same as [`ood_transform`], but with the +3 sigma reference deviations
/// supplied by the caller (e.g. the train split instead of the test split).
pub fn ood_transform_with_std(test: &Dataset, scenario: OodScenario, std: &[f64]) -> Dataset {
    let mut out = test.clone();
    match scenario {
        OodScenario::Scale01 => out.features.mapv_inplace(|v| v * 0.1),
        OodScenario::Scale2 => out.features.mapv_inplace(|v| v * 2.0),
        OodScenario::Plus3Std => {
            for mut row in out.features.rows_mut() {
                for (j, s) in std.iter().enumerate() {
                    row[j] += 3.0 * s;
                }
            }
        }
    }
    out
}

/// Test-set metrics: RMSE of the predictive means, mean negative log
/// predictive density under the Student's-t predictive law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse: f64,
    pub nll: f64,
    pub n: usize,
}

/// Negative log predictive density of one observation.
pub fn nll_point(y: f64, predictive: &UnivariateT) -> Result<f64> {
    Ok(-predictive.log_pdf(y)?)
}

/// Evaluate a trained network on a test set.
pub fn evaluate(network: &[LayerState], test: &Dataset, noise_var: f64) -> Result<MetricSet> {
    if test.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty test set".into()));
    }
    let mut sq = 0.0;
    let mut nll = 0.0;
    for (row, &y) in test.features.rows().into_iter().zip(&test.targets) {
        let x = row.as_slice().expect("row-major dataset layout");
        let p = predict(network, x, noise_var)?;
        let e = p.mu - y;
        sq += e * e;
        nll += nll_point(y, &p)?;
    }
    let n = test.len();
    let rmse = (sq / n as f64).sqrt();
    let nll = nll / n as f64;
    if !rmse.is_finite() || !nll.is_finite() {
        return Err(Error::NonFinite {
            what: "metric",
            context: "evaluate",
        });
    }
    Ok(MetricSet { rmse, nll, n })
}

/// Average relative OOD degradation over the three scenarios, in percent;
/// `None` when the in-distribution reference is zero (undefined rather than
/// infinite).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub scale01: MetricSet,
    pub scale2: MetricSet,
    pub plus3std: MetricSet,
    pub delta_nll_pct: Option<f64>,
    pub delta_rmse_pct: Option<f64>,
}

/// Combine in-distribution metrics with the three scenario metrics
/// (ordered scale01, scale2, plus3std).
pub fn ood_relative_errors(in_dist: &MetricSet, scenarios: &[MetricSet; 3]) -> OodReport {
    let delta = |pick: fn(&MetricSet) -> f64| -> Option<f64> {
        let base = pick(in_dist);
        if base == 0.0 || !base.is_finite() {
            return None;
        }
        Some(
            scenarios
                .iter()
                .map(|m| (pick(m) - base).abs() / base.abs() * 100.0)
                .sum::<f64>()
                / 3.0,
        )
    };
    OodReport {
        scale01: scenarios[0],
        scale2: scenarios[1],
        plus3std: scenarios[2],
        delta_nll_pct: delta(|m| m.nll),
        delta_rmse_pct: delta(|m| m.rmse),
    }
}
