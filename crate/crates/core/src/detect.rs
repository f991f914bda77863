//! Anomaly scoring from generator error and discriminator score.
//!
//! For a window `X_t` and actual next point `x_{t+1}`:
//!
//! ```text
//! MSE_t = mean((x_{t+1} − G(X_t))²)
//! D_t   = D(X_t, x_{t+1})
//! w_G   = L_D / (L_G + L_D),   w_D = L_G / (L_G + L_D)
//! S_t   = w_G · MSE_t + w_D · (1 − D_t)
//! ```
//!
//! A point is anomalous when `S_t` is strictly above the nearest-rank
//! percentile of the scores on benign training windows.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TimeWindow;
use crate::error::{Error, Result};
use crate::qgan::GanModel;

pub const DEFAULT_PERCENTILE: f64 = 99.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    #[default]
    Combined,
    GenOnly,
    DiscOnly,
}

impl DetectionMode {
    pub const ALL: [DetectionMode; 3] = [Self::Combined, Self::GenOnly, Self::DiscOnly];

    pub fn name(self) -> &'static str {
        match self {
            Self::Combined => "combined",
            Self::GenOnly => "gen_only",
            Self::DiscOnly => "disc_only",
        }
    }
}

impl std::str::FromStr for DetectionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown detection mode `{s}`"))
    }
}

/// Weights derived from the final training losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weights {
    pub w_g: f64,
    pub w_d: f64,
}

impl Weights {
    /// `w_G = L_D/(L_G+L_D)`, `w_D = L_G/(L_G+L_D)`; an all-zero pair falls back to ½, ½.
    pub fn from_losses(loss_g: f64, loss_d: f64) -> Result<Self> {
        if !(loss_g.is_finite() && loss_d.is_finite() && loss_g >= 0.0 && loss_d >= 0.0) {
            return Err(Error::TrainConfig(format!(
                "losses must be finite and non-negative, got L_G={loss_g}, L_D={loss_d}"
            )));
        }
        let total = loss_g + loss_d;
        if total == 0.0 {
            log::warn!("both training losses are zero; using equal detection weights");
            return Ok(Self { w_g: 0.5, w_d: 0.5 });
        }
        Ok(Self {
            w_g: loss_d / total,
            w_d: loss_g / total,
        })
    }

    /// Weights actually applied in `mode`.
    pub fn for_mode(self, mode: DetectionMode) -> Self {
        match mode {
            DetectionMode::Combined => self,
            DetectionMode::GenOnly => Self { w_g: 1.0, w_d: 0.0 },
            DetectionMode::DiscOnly => Self { w_g: 0.0, w_d: 1.0 },
        }
    }
}

/// `w_g · mse + w_d · (1 − d)`.
pub fn anomaly_score(mse: f64, d: f64, weights: Weights) -> f64 {
    weights.w_g * mse + weights.w_d * (1.0 - d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreComponents {
    pub t: usize,
    pub mse_t: f64,
    pub d_t: f64,
    pub w_g: f64,
    pub w_d: f64,
    pub s_t: f64,
    pub flag: bool,
    pub label: bool,
}

/// Scores one window; `flag` is left false until a threshold is applied.
pub fn score_point<M: GanModel + ?Sized>(
    model: &M,
    window: &TimeWindow,
    mode: DetectionMode,
    weights: Weights,
) -> Result<ScoreComponents> {
    let prediction = model.predict(&window.context)?;
    let mse_t = prediction.squared_error(&window.target);
    let d_t = model.discriminate(&window.context, &window.target)?;
    let w = weights.for_mode(mode);
    Ok(ScoreComponents {
        t: window.t,
        mse_t,
        d_t,
        w_g: w.w_g,
        w_d: w.w_d,
        s_t: anomaly_score(mse_t, d_t, w),
        flag: false,
        label: window.label,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub percentile: f64,
    pub source_size: usize,
}

/// Nearest-rank percentile: the `ceil(p/100 · n)`-th smallest score.
pub fn compute_threshold(scores: &[f64], percentile: f64) -> Result<Threshold> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::TrainConfig(format!("percentile {percentile} outside (0, 100]")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::TrainConfig("non-finite benign score".into()));
    }
    let n = scores.len();
    let rank = percentile / 100.0 * n as f64;
    // p/100·n can land a rounding error away from an exact integer rank
    let k = if (rank - rank.round()).abs() < 1e-9 {
        rank.round()
    } else {
        rank.ceil()
    } as usize;
    let k = k.clamp(1, n);
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Threshold {
        value: sorted[k - 1],
        percentile,
        source_size: n,
    })
}

/// `s > T`, strictly.
pub fn classify(scores: &[f64], threshold: &Threshold) -> Vec<bool> {
    scores.iter().map(|&s| s > threshold.value).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mse: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// The five headline numbers, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSummary {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub mse: f64,
}

impl MetricsReport {
    pub fn summary(&self) -> MetricsSummary {
        MetricsSummary {
            accuracy: self.accuracy,
            recall: self.recall,
            precision: self.precision,
            f1: self.f1,
            mse: self.mse,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion-matrix metrics with anomalies as the positive class.
pub fn metrics(flags: &[bool], labels: &[bool], mse: f64) -> Result<MetricsReport> {
    if flags.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: flags.len(),
            right: labels.len(),
        });
    }
    let mut r = MetricsReport {
        mse,
        ..MetricsReport::default()
    };
    for (&f, &l) in flags.iter().zip(labels) {
        match (f, l) {
            (true, true) => r.tp += 1,
            (true, false) => r.fp += 1,
            (false, false) => r.tn += 1,
            (false, true) => r.fn_ += 1,
        }
    }
    r.accuracy = ratio(r.tp + r.tn, flags.len());
    r.precision = ratio(r.tp, r.tp + r.fp);
    r.recall = ratio(r.tp, r.tp + r.fn_);
    let den = r.precision + r.recall;
    r.f1 = if den > 0.0 {
        2.0 * r.precision * r.recall / den
    } else {
        0.0
    };
    Ok(r)
}

/// Scores for every window, without flags.
pub fn score_windows<M: GanModel + ?Sized>(
    model: &M,
    windows: &[TimeWindow],
    mode: DetectionMode,
    weights: Weights,
) -> Result<Vec<ScoreComponents>> {
    windows
        .par_iter()
        .map(|w| score_point(model, w, mode, weights))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesReport {
    pub mode: DetectionMode,
    pub threshold: Threshold,
    pub scores: Vec<ScoreComponents>,
    pub metrics: MetricsReport,
}

/// Scores, flags against `threshold`, and metrics against the window labels.
/// The reported MSE is the mean generator error over the scored windows.
pub fn score_series<M: GanModel + ?Sized>(
    model: &M,
    windows: &[TimeWindow],
    mode: DetectionMode,
    weights: Weights,
    threshold: Option<&Threshold>,
) -> Result<SeriesReport> {
    let threshold = *threshold.ok_or(Error::MissingThreshold)?;
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut scores = score_windows(model, windows, mode, weights)?;
    for s in &mut scores {
        s.flag = s.s_t > threshold.value;
    }
    let flags: Vec<bool> = scores.iter().map(|s| s.flag).collect();
    let labels: Vec<bool> = scores.iter().map(|s| s.label).collect();
    let mse = scores.iter().map(|s| s.mse_t).sum::<f64>() / scores.len() as f64;
    Ok(SeriesReport {
        mode,
        threshold,
        metrics: metrics(&flags, &labels, mse)?,
        scores,
    })
}

/// `t,mse,d_score,w_g,w_d,s,threshold,flag,label`.
pub fn write_scores_csv<W: Write>(out: W, report: &SeriesReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "mse", "d_score", "w_g", "w_d", "s", "threshold", "flag", "label"])?;
    for s in &report.scores {
        w.write_record([
            s.t.to_string(),
            s.mse_t.to_string(),
            s.d_t.to_string(),
            s.w_g.to_string(),
            s.w_d.to_string(),
            s.s_t.to_string(),
            report.threshold.value.to_string(),
            u8::from(s.flag).to_string(),
            u8::from(s.label).to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Parses a scores CSV back into components and the threshold column.
pub fn read_scores_csv<R: std::io::Read>(input: R) -> Result<(Vec<ScoreComponents>, Option<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let mut out = Vec::new();
    let mut threshold = None;
    for row in r.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let f = |i: usize| {
            get(i)
                .parse::<f64>()
                .map_err(|_| Error::ModelFormat(format!("bad score field `{}`", get(i))))
        };
        let b = |i: usize| match get(i) {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(Error::ModelFormat(format!("bad flag `{other}`"))),
        };
        threshold = Some(f(6)?);
        out.push(ScoreComponents {
            t: get(0)
                .parse()
                .map_err(|_| Error::ModelFormat(format!("bad t `{}`", get(0))))?,
            mse_t: f(1)?,
            d_t: f(2)?,
            w_g: f(3)?,
            w_d: f(4)?,
            s_t: f(5)?,
            flag: b(7)?,
            label: b(8)?,
        });
    }
    Ok((out, threshold))
}
