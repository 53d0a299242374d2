//! Frozen-backbone linear probe: ridge regression from backbone features to
//! the BEV position of each frame's strongest scatterer.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::encoder::{features, EncoderParams};
use crate::error::{Error, Result};
use crate::trainer::encoder_input;

/// Labeled-fraction sweep used for label-efficiency tables.
pub const LABEL_FRACTIONS: [f64; 5] = [0.01, 0.03, 0.10, 0.30, 1.0];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeLabel {
    #[default]
    StrongestXy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Penalty used when `ridge_grid` is empty.
    pub ridge_lambda: f64,
    /// Candidate penalties; when non-empty the one with the lowest
    /// leave-one-out error on the training split is used.
    pub ridge_grid: Vec<f64>,
    pub label: ProbeLabel,
    pub train_fraction: f64,
}

/// Half-decade grid from 1e-2 to 1e5.
pub fn default_ridge_grid() -> Vec<f64> {
    (0..=14).map(|i| 10f64.powf(-2.0 + 0.5 * i as f64)).collect()
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            ridge_lambda: 1.0,
            ridge_grid: default_ridge_grid(),
            label: ProbeLabel::StrongestXy,
            train_fraction: 1.0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ridge_lambda.is_nan() || self.ridge_lambda < 0.0 {
            return Err(Error::invalid("probe config", "ridge_lambda must be >= 0"));
        }
        if self.ridge_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("probe config", "ridge_grid entries must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::invalid("probe config", "train_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Root-mean-square Euclidean position error, meters.
    pub rmse: f64,
    pub rmse_x: f64,
    pub rmse_y: f64,
    /// RMS distance of the test targets from the training mean; what a
    /// constant predictor scores.
    pub target_std: f64,
    pub ridge_lambda: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Features and targets of a labeled split.
#[derive(Clone, Debug)]
pub struct LabeledFeatures {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<[f64; 2]>,
}

impl LabeledFeatures {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn head(&self, n: usize) -> Self {
        Self {
            features: self.features[..n].to_vec(),
            targets: self.targets[..n].to_vec(),
        }
    }
}

/// Backbone features of each frame's clean heatmap. Frames without
/// scatterers carry no label and are skipped.
pub fn extract(params: &EncoderParams<f64>, dataset: &Dataset) -> Result<LabeledFeatures> {
    let rows = dataset
        .frames
        .par_iter()
        .filter_map(|f| f.strongest_xy().map(|xy| (f, xy)))
        .map(|(f, (x, y))| Ok((features(params, &encoder_input(&f.heatmap()))?, [x, y])))
        .collect::<Result<Vec<_>>>()?;
    let (features, targets) = rows.into_iter().unzip();
    Ok(LabeledFeatures { features, targets })
}

/// Number of training rows used for `fraction` of `n`.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

struct Standardized {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    y_mean: [f64; 2],
}

fn standardize_train(train: &LabeledFeatures) -> Result<Standardized> {
    let n = train.len();
    if n < 2 {
        return Err(Error::invalid(
            "probe",
            format!("{n} training samples; need at least 2"),
        ));
    }
    let d = train.features[0].len();
    if train.features.iter().any(|f| f.len() != d) {
        return Err(Error::Shape("feature rows differ in length".into()));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| train.features.iter().map(|f| f[j]).sum::<f64>() / n as f64)
        .collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = train.features.iter().map(|f| (f[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let x = DMatrix::from_fn(n, d, |i, j| (train.features[i][j] - mean[j]) / scale[j]);
    let y_mean = [0, 1].map(|c| train.targets.iter().map(|t| t[c]).sum::<f64>() / n as f64);
    let y = DMatrix::from_fn(n, 2, |i, c| train.targets[i][c] - y_mean[c]);
    Ok(Standardized {
        x,
        y,
        mean,
        scale,
        y_mean,
    })
}

/// Weights of the centered ridge problem and the inverse of its system
/// matrix.
fn fit(st: &Standardized, ridge_lambda: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut gram = st.x.transpose() * &st.x;
    for j in 0..gram.nrows() {
        gram[(j, j)] += ridge_lambda;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Degenerate(format!(
            "feature covariance is singular at ridge_lambda = {ridge_lambda}; use a positive ridge"
        ))
    })?;
    let weights = chol.solve(&(st.x.transpose() * &st.y));
    Ok((weights, chol.inverse()))
}

/// Mean squared leave-one-out residual, counting the intercept's leverage.
fn loo_error(st: &Standardized, ridge_lambda: f64) -> Result<f64> {
    let (weights, inv) = fit(st, ridge_lambda)?;
    let n = st.x.nrows();
    let resid = &st.y - &st.x * weights;
    let xa = &st.x * inv;
    let mut total = 0.0;
    for i in 0..n {
        let h = xa.row(i).dot(&st.x.row(i)) + 1.0 / n as f64;
        let denom = (1.0 - h).max(1e-12);
        total += (resid[(i, 0)].powi(2) + resid[(i, 1)].powi(2)) / (denom * denom);
    }
    Ok(total / n as f64)
}

/// Penalty from `grid` with the lowest leave-one-out error; first wins ties.
pub fn select_ridge(train: &LabeledFeatures, grid: &[f64]) -> Result<f64> {
    let st = standardize_train(train)?;
    let mut best = None;
    for &l in grid {
        let e = loo_error(&st, l)?;
        if best.is_none_or(|(_, b)| e < b) {
            best = Some((l, e));
        }
    }
    best.map(|(l, _)| l)
        .ok_or_else(|| Error::invalid("probe config", "empty ridge grid"))
}

/// Closed-form ridge regression on standardized features with an
/// unpenalized intercept, scored on `test`.
pub fn ridge_probe(train: &LabeledFeatures, test: &LabeledFeatures, ridge_lambda: f64) -> Result<ProbeReport> {
    let st = standardize_train(train)?;
    if test.is_empty() {
        return Err(Error::EmptyDataset("probe test split".into()));
    }
    let d = st.mean.len();
    if test.features.iter().any(|f| f.len() != d) {
        return Err(Error::Shape(
            "test features differ in length from training features".into(),
        ));
    }
    let (weights, _) = fit(&st, ridge_lambda)?;
    let x_test = DMatrix::from_fn(test.len(), d, |i, j| (test.features[i][j] - st.mean[j]) / st.scale[j]);
    let pred = x_test * weights;
    let m = test.len() as f64;
    let mut sq = [0.0; 2];
    let mut spread = 0.0;
    for (i, t) in test.targets.iter().enumerate() {
        for c in 0..2 {
            sq[c] += (pred[(i, c)] + st.y_mean[c] - t[c]).powi(2);
            spread += (t[c] - st.y_mean[c]).powi(2);
        }
    }
    let report = ProbeReport {
        rmse: ((sq[0] + sq[1]) / m).sqrt(),
        rmse_x: (sq[0] / m).sqrt(),
        rmse_y: (sq[1] / m).sqrt(),
        target_std: (spread / m).sqrt(),
        ridge_lambda,
        n_train: train.len(),
        n_test: test.len(),
    };
    if !report.rmse.is_finite() {
        return Err(Error::NonFinite("probe prediction".into()));
    }
    Ok(report)
}

/// Probe `params` frozen: fit on the first `train_fraction` of `train`,
/// score on `test`.
pub fn linear_probe(
    params: &EncoderParams<f64>,
    train: &Dataset,
    test: &Dataset,
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    config.validate()?;
    let train_f = extract(params, train)?;
    let test_f = extract(params, test)?;
    probe_features(&train_f, &test_f, config)
}

pub fn probe_features(train: &LabeledFeatures, test: &LabeledFeatures, config: &ProbeConfig) -> Result<ProbeReport> {
    config.validate()?;
    let train = train.head(train_count(train.len(), config.train_fraction));
    let lambda = if config.ridge_grid.is_empty() {
        config.ridge_lambda
    } else {
        select_ridge(&train, &config.ridge_grid)?
    };
    ridge_probe(&train, test, lambda)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub n_train: usize,
    pub rmse_pretrained: f64,
    pub rmse_random: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Probe a pretrained and a randomly initialized backbone at each labeled
/// fraction.
pub fn label_efficiency_sweep(
    pretrained: &EncoderParams<f64>,
    random: &EncoderParams<f64>,
    train: &Dataset,
    test: &Dataset,
    fractions: &[f64],
    config: &ProbeConfig,
) -> Result<SweepReport> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("labeled set".into()));
    }
    let arms = [pretrained, random]
        .iter()
        .map(|p| Ok((extract(p, train)?, extract(p, test)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = fractions
        .iter()
        .map(|&fraction| {
            let cfg = ProbeConfig {
                train_fraction: fraction,
                ..config.clone()
            };
            let pre = probe_features(&arms[0].0, &arms[0].1, &cfg)?;
            let rnd = probe_features(&arms[1].0, &arms[1].1, &cfg)?;
            Ok(SweepRow {
                fraction,
                n_train: pre.n_train,
                rmse_pretrained: pre.rmse,
                rmse_random: rnd.rmse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { rows })
}
