//! Time-series preparation: flow ingestion, per-second aggregation, scaling,
//! train/test split, windowing, feature selection and synthetic series.

mod flow;
mod granger;
mod synth;

pub use flow::{
    aggregate_1s, candidate_series, ingest_csv, read_intervals, write_intervals, AggregateReport,
    CandidateSeries, ColumnMap,
    FlowRecord, IngestReport, IntervalAggregate,
};
pub use granger::{granger_test, select_features, FeatureRanking, GrangerResult};
pub use synth::{inject_anomalies, synth_series, AnomalySpec, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window length: points of context per prediction.
pub const TAU: usize = 3;

/// One observation of the two model features.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TimePoint {
    pub a: f64,
    pub b: f64,
}

impl TimePoint {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn feature(&self, f: usize) -> f64 {
        match f {
            0 => self.a,
            1 => self.b,
            _ => panic!("feature index {f} out of range"),
        }
    }

    pub fn squared_error(&self, other: &TimePoint) -> f64 {
        ((self.a - other.a).powi(2) + (self.b - other.b).powi(2)) / 2.0
    }
}

/// `TAU` consecutive points, the point that follows them, and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeWindow {
    /// Series index of the target point.
    pub t: usize,
    pub context: [TimePoint; TAU],
    pub target: TimePoint,
    pub label: bool,
    /// Whether any context point is labeled anomalous.
    pub context_attacked: bool,
}

/// Two-feature series with per-point anomaly labels.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LabeledSeries {
    pub points: Vec<TimePoint>,
    pub labels: Vec<bool>,
}

impl LabeledSeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn from_intervals(intervals: &[IntervalAggregate]) -> Self {
        Self {
            points: intervals.iter().map(|i| TimePoint::new(i.a, i.b)).collect(),
            labels: intervals.iter().map(|i| i.label()).collect(),
        }
    }

    pub fn to_intervals(&self) -> Vec<IntervalAggregate> {
        self.points
            .iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(t, (p, &l))| IntervalAggregate {
                t: t as u64,
                a: p.a,
                b: p.b,
                attack_count: u64::from(l),
            })
            .collect()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            points: self.points[range.clone()].to_vec(),
            labels: self.labels[range].to_vec(),
        }
    }
}

/// Per-feature min-max statistics mapping the fit range onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Scaler {
    pub fn fit(points: &[TimePoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            for f in 0..2 {
                min[f] = min[f].min(p.feature(f));
                max[f] = max[f].max(p.feature(f));
            }
        }
        for f in 0..2 {
            if !(max[f] > min[f]) {
                return Err(Error::DegenerateScale(f));
            }
        }
        Ok(Self { min, max })
    }

    fn scale_one(&self, f: usize, x: f64) -> f64 {
        2.0 * (x - self.min[f]) / (self.max[f] - self.min[f]) - 1.0
    }

    /// Scaled point, clamped to `[-1, 1]`, and whether clamping happened.
    pub fn apply(&self, p: &TimePoint) -> (TimePoint, bool) {
        let raw = [self.scale_one(0, p.a), self.scale_one(1, p.b)];
        let clamped = raw.map(|x| x.clamp(-1.0, 1.0));
        (TimePoint::new(clamped[0], clamped[1]), raw != clamped)
    }

    pub fn unscale(&self, p: &TimePoint) -> TimePoint {
        let un = |f: usize, x: f64| (x + 1.0) / 2.0 * (self.max[f] - self.min[f]) + self.min[f];
        TimePoint::new(un(0, p.a), un(1, p.b))
    }

    /// Scales a whole series; returns the number of clamped points.
    pub fn apply_series(&self, series: &LabeledSeries) -> (LabeledSeries, usize) {
        let mut clamps = 0;
        let points = series
            .points
            .iter()
            .map(|p| {
                let (s, c) = self.apply(p);
                clamps += usize::from(c);
                s
            })
            .collect();
        (
            LabeledSeries {
                points,
                labels: series.labels.clone(),
            },
            clamps,
        )
    }
}

/// Chronological two-way split.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: LabeledSeries,
    pub test: LabeledSeries,
    /// Series offset of the first train / test point.
    pub train_offset: usize,
    pub test_offset: usize,
}

/// Cuts the series at `round(ratio·n)` and trains on the half with fewer
/// anomalous points, preferring the later half on ties.
pub fn split_benign_train(series: &LabeledSeries, ratio: f64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::SplitRatio(ratio));
    }
    let n = series.len();
    let cut = ((n as f64) * ratio).round() as usize;
    if cut == 0 || cut >= n {
        return Err(Error::SeriesTooShort { len: n, needed: 1 });
    }
    let first = series.slice(0..cut);
    let second = series.slice(cut..n);
    let attacks = |s: &LabeledSeries| s.labels.iter().filter(|&&l| l).count();
    let (fa, sa) = (attacks(&first), attacks(&second));
    if fa == first.len() && sa == second.len() {
        return Err(Error::AllAttacked);
    }
    Ok(if fa < sa {
        Split {
            train: first,
            test: second,
            train_offset: 0,
            test_offset: cut,
        }
    } else {
        Split {
            train: second,
            test: first,
            train_offset: cut,
            test_offset: 0,
        }
    })
}

/// All `n − TAU` windows; window `k` covers points `k..k+TAU` and targets `k+TAU`.
/// `offset` is added to the reported target index.
pub fn make_windows(series: &LabeledSeries, offset: usize) -> Result<Vec<TimeWindow>> {
    let n = series.len();
    if n <= TAU {
        return Err(Error::SeriesTooShort { len: n, needed: TAU });
    }
    Ok((0..n - TAU)
        .map(|k| {
            let mut context = [TimePoint::default(); TAU];
            context.copy_from_slice(&series.points[k..k + TAU]);
            TimeWindow {
                t: offset + k + TAU,
                context,
                target: series.points[k + TAU],
                label: series.labels[k + TAU],
                context_attacked: series.labels[k..k + TAU].iter().any(|&l| l),
            }
        })
        .collect())
}

/// Training windows: those whose context and target are all benign.
pub fn benign_windows(windows: &[TimeWindow]) -> Vec<TimeWindow> {
    windows
        .iter()
        .filter(|w| !w.label && !w.context_attacked)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(labels: &[bool]) -> LabeledSeries {
        LabeledSeries {
            points: (0..labels.len())
                .map(|i| TimePoint::new(i as f64, -(i as f64)))
                .collect(),
            labels: labels.to_vec(),
        }
    }

    #[test]
    fn scaler_midpoint_and_bounds() {
        let s = Scaler {
            min: [0.0, 0.0],
            max: [10.0, 10.0],
        };
        assert_eq!(s.apply(&TimePoint::new(5.0, 0.0)).0, TimePoint::new(0.0, -1.0));
        assert_eq!(s.apply(&TimePoint::new(10.0, 0.0)).0.a, 1.0);
        let (p, clamped) = s.apply(&TimePoint::new(12.0, 5.0));
        assert_eq!(p.a, 1.0);
        assert!(clamped);
    }

    #[test]
    fn scaler_rejects_flat_feature() {
        let pts = [TimePoint::new(1.0, 2.0), TimePoint::new(3.0, 2.0)];
        assert!(matches!(Scaler::fit(&pts), Err(Error::DegenerateScale(1))));
    }

    #[test]
    fn scaler_series_counts_clamps() {
        let s = Scaler::fit(&[TimePoint::new(0.0, 0.0), TimePoint::new(1.0, 1.0)]).unwrap();
        let ser = LabeledSeries {
            points: vec![TimePoint::new(0.5, 0.5), TimePoint::new(2.0, -1.0)],
            labels: vec![false, false],
        };
        let (_, clamps) = s.apply_series(&ser);
        assert_eq!(clamps, 1);
    }

    #[test]
    fn split_attacks_in_first_half() {
        let mut labels = vec![false; 10];
        labels[1] = true;
        labels[3] = true;
        let sp = split_benign_train(&series(&labels), 0.5).unwrap();
        assert_eq!(sp.train.len(), 5);
        assert_eq!(sp.test.len(), 5);
        assert_eq!(sp.train_offset, 5);
        assert_eq!(sp.test.labels, labels[..5]);
    }

    #[test]
    fn split_tie_prefers_second_half() {
        let sp = split_benign_train(&series(&[false; 10]), 0.5).unwrap();
        assert_eq!(sp.train_offset, 5);
        assert_eq!(sp.train.points[0].a, 5.0);
    }

    #[test]
    fn split_attacks_in_second_half() {
        let mut labels = vec![false; 10];
        labels[8] = true;
        let sp = split_benign_train(&series(&labels), 0.5).unwrap();
        assert_eq!(sp.train_offset, 0);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split_benign_train(&series(&[true; 6]), 0.5),
            Err(Error::AllAttacked)
        ));
        assert!(matches!(
            split_benign_train(&series(&[false; 6]), 1.0),
            Err(Error::SplitRatio(_))
        ));
    }

    #[test]
    fn window_counts_and_targets() {
        assert_eq!(make_windows(&series(&[false; 4]), 0).unwrap().len(), 1);
        let w = make_windows(&series(&[false; 10]), 0).unwrap();
        assert_eq!(w.len(), 7);
        let targets: Vec<usize> = w.iter().map(|w| w.target.a as usize).collect();
        assert_eq!(targets, (3..10).collect::<Vec<_>>());
        assert_eq!(w[0].context[2].a, 2.0);
        assert!(matches!(
            make_windows(&series(&[false; 3]), 0),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn benign_windows_drop_attacked() {
        let mut labels = vec![false; 10];
        labels[5] = true;
        let w = make_windows(&series(&labels), 0).unwrap();
        let b = benign_windows(&w);
        // windows with targets 5..=8 touch index 5
        assert_eq!(b.len(), 7 - 4);
        assert!(b.iter().all(|w| !w.label));
    }
}
