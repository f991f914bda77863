//! Glue from a raw labeled series to trained-model evaluation.

use crate::data::{benign_windows, make_windows, split_benign_train, LabeledSeries, Scaler, TimeWindow};
use crate::detect::{
    anomaly_score, compute_threshold, metrics, score_windows, DetectionMode, ScoreComponents,
    SeriesReport, Threshold, Weights,
};
use crate::error::{Error, Result};
use crate::qgan::GanModel;

/// Scaled train/test windows.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub scaler: Scaler,
    /// Benign-only windows from the training half.
    pub train: Vec<TimeWindow>,
    /// Every window of the test half.
    pub test: Vec<TimeWindow>,
    pub train_offset: usize,
    pub test_offset: usize,
    /// Test points clamped into `[-1, 1]`.
    pub clamped: usize,
}

/// Splits, fits the scaler on benign training points, scales both halves and windows them.
pub fn prepare(series: &LabeledSeries, ratio: f64) -> Result<Prepared> {
    let split = split_benign_train(series, ratio)?;
    let benign_points: Vec<_> = split
        .train
        .points
        .iter()
        .zip(&split.train.labels)
        .filter(|(_, &l)| !l)
        .map(|(p, _)| *p)
        .collect();
    let scaler = Scaler::fit(&benign_points)?;
    let (train_scaled, _) = scaler.apply_series(&split.train);
    let (test_scaled, clamped) = scaler.apply_series(&split.test);
    let train = benign_windows(&make_windows(&train_scaled, split.train_offset)?);
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Prepared {
        scaler,
        train,
        test: make_windows(&test_scaled, split.test_offset)?,
        train_offset: split.train_offset,
        test_offset: split.test_offset,
        clamped,
    })
}

/// Re-weights already-computed components for another mode.
pub fn rescore(components: &[ScoreComponents], mode: DetectionMode, weights: Weights) -> Vec<ScoreComponents> {
    let w = weights.for_mode(mode);
    components
        .iter()
        .map(|c| ScoreComponents {
            w_g: w.w_g,
            w_d: w.w_d,
            s_t: anomaly_score(c.mse_t, c.d_t, w),
            flag: false,
            ..*c
        })
        .collect()
}

/// Per-mode thresholds from the benign training scores.
pub fn calibrate<M: GanModel + ?Sized>(
    model: &M,
    train: &[TimeWindow],
    weights: Weights,
    percentile: f64,
) -> Result<Vec<(DetectionMode, Threshold)>> {
    let base = score_windows(model, train, DetectionMode::Combined, weights)?;
    DetectionMode::ALL
        .into_iter()
        .map(|mode| {
            let s: Vec<f64> = rescore(&base, mode, weights).iter().map(|c| c.s_t).collect();
            Ok((mode, compute_threshold(&s, percentile)?))
        })
        .collect()
}

/// Scores `windows` once and reports every mode that has a threshold.
pub fn evaluate_modes<M: GanModel + ?Sized>(
    model: &M,
    windows: &[TimeWindow],
    weights: Weights,
    thresholds: &[(DetectionMode, Threshold)],
) -> Result<Vec<SeriesReport>> {
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if thresholds.is_empty() {
        return Err(Error::MissingThreshold);
    }
    let base = score_windows(model, windows, DetectionMode::Combined, weights)?;
    let mse = base.iter().map(|c| c.mse_t).sum::<f64>() / base.len() as f64;
    thresholds
        .iter()
        .map(|&(mode, threshold)| {
            let mut scores = rescore(&base, mode, weights);
            for s in &mut scores {
                s.flag = s.s_t > threshold.value;
            }
            let flags: Vec<bool> = scores.iter().map(|s| s.flag).collect();
            let labels: Vec<bool> = scores.iter().map(|s| s.label).collect();
            Ok(SeriesReport {
                mode,
                threshold,
                metrics: metrics(&flags, &labels, mse)?,
                scores,
            })
        })
        .collect()
}
