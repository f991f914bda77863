//! Synthetic two-feature series: a Gaussian random walk and an amplitude- and
//! phase-modulated sinusoid, each rescaled to `[-1, 1]`.

use std::f64::consts::TAU as TWO_PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LabeledSeries, TimePoint};
use crate::error::{Error, Result};

const MIN_LENGTH: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub length: usize,
    /// Step standard deviation of the walk.
    pub walk_sigma: f64,
    /// Pull toward zero per step; 0 gives a pure random walk.
    pub walk_reversion: f64,
    /// Carrier period of the sinusoid, in samples.
    pub period: f64,
    pub base_amplitude: f64,
    pub am_depth: f64,
    pub am_period: f64,
    /// Peak phase deviation, radians.
    pub pm_depth: f64,
    pub pm_period: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            length: 1000,
            walk_sigma: 0.05,
            walk_reversion: 0.0,
            period: 50.0,
            base_amplitude: 0.5,
            am_depth: 0.3,
            am_period: 400.0,
            pm_depth: 2.0,
            pm_period: 300.0,
        }
    }
}

fn rescale(v: &mut [f64]) {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    if hi > lo {
        for x in v.iter_mut() {
            *x = 2.0 * (*x - lo) / (hi - lo) - 1.0;
        }
    } else {
        v.fill(0.0);
    }
}

/// Deterministic for a given config and seed. Labels are all benign.
pub fn synth_series(config: &SynthConfig, seed: u64) -> Result<LabeledSeries> {
    let c = config;
    if c.length < MIN_LENGTH {
        return Err(Error::Synth(format!("length must be at least {MIN_LENGTH}")));
    }
    if !(c.walk_sigma >= 0.0) || !(0.0..=1.0).contains(&c.walk_reversion) {
        return Err(Error::Synth("walk_sigma ≥ 0 and walk_reversion ∈ [0, 1] required".into()));
    }
    for (name, v) in [
        ("period", c.period),
        ("am_period", c.am_period),
        ("pm_period", c.pm_period),
    ] {
        if !(v > 0.0) {
            return Err(Error::Synth(format!("{name} must be positive")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = Normal::new(0.0, c.walk_sigma).map_err(|e| Error::Synth(e.to_string()))?;
    let mut a = Vec::with_capacity(c.length);
    let mut level = 0.0;
    a.push(level);
    for _ in 1..c.length {
        level = (1.0 - c.walk_reversion) * level + step.sample(&mut rng);
        a.push(level);
    }
    let mut b: Vec<f64> = (0..c.length)
        .map(|t| {
            let t = t as f64;
            let amp = c.base_amplitude + c.am_depth * (TWO_PI * t / c.am_period).sin();
            let phase = c.pm_depth * (TWO_PI * t / c.pm_period).sin();
            amp * (TWO_PI * t / c.period + phase).sin()
        })
        .collect();
    rescale(&mut a);
    rescale(&mut b);
    Ok(LabeledSeries {
        points: a.into_iter().zip(b).map(|(a, b)| TimePoint::new(a, b)).collect(),
        labels: vec![false; c.length],
    })
}

/// Additive level shift over `start..start + duration`, labeled anomalous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    pub start: usize,
    pub duration: usize,
    #[serde(default)]
    pub shift_a: f64,
    #[serde(default)]
    pub shift_b: f64,
}

pub fn inject_anomalies(series: &LabeledSeries, specs: &[AnomalySpec]) -> Result<LabeledSeries> {
    let mut out = series.clone();
    for s in specs {
        let end = s.start + s.duration;
        if end > series.len() {
            return Err(Error::IntervalRange {
                start: s.start,
                end,
                len: series.len(),
            });
        }
        for t in s.start..end {
            out.points[t].a += s.shift_a;
            out.points[t].b += s.shift_b;
            out.labels[t] = true;
        }
    }
    Ok(out)
}
