//! Granger causality by nested OLS F-test.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrangerResult {
    pub feature: String,
    pub max_lag: usize,
    pub f_stat: f64,
    pub p_value: f64,
    pub rss_restricted: f64,
    pub rss_unrestricted: f64,
}

/// Residual sum of squares of the least-squares fit `y ≈ X β`.
fn rss(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if diag_max == 0.0 || r.diagonal().iter().any(|v| v.abs() < RANK_TOL * diag_max) {
        return Err(Error::Singular);
    }
    let qty = qr.q().transpose() * y;
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::Singular)?;
    let resid = y - x * beta;
    Ok(resid.norm_squared())
}

fn demean(s: &[f64]) -> Vec<f64> {
    let m = s.iter().sum::<f64>() / s.len() as f64;
    s.iter().map(|v| v - m).collect()
}

/// Does `x` Granger-cause `y` at lag order `max_lag`?
///
/// Both regressions include an intercept and use the `n − p` rows that have a
/// full lag history. `F = ((RSS_r − RSS_u)/p) / (RSS_u/(n − p − 2p − 1))`.
pub fn granger_test(name: &str, x: &[f64], y: &[f64], max_lag: usize) -> Result<GrangerResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let p = max_lag;
    let n = y.len();
    if p == 0 || n <= 3 * p + 1 {
        return Err(Error::SeriesTooShort {
            len: n,
            needed: 3 * p + 1,
        });
    }
    let (x, y) = (demean(x), demean(y));
    let rows = n - p;
    let target = DVector::from_iterator(rows, (p..n).map(|t| y[t]));
    let restricted = DMatrix::from_fn(rows, p + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            y[r + p - c]
        }
    });
    let unrestricted = DMatrix::from_fn(rows, 2 * p + 1, |r, c| match c {
        0 => 1.0,
        c if c <= p => y[r + p - c],
        c => x[r + p - (c - p)],
    });
    let rss_r = rss(&restricted, &target)?;
    let rss_u = rss(&unrestricted, &target)?.min(rss_r);
    let df_den = (rows - 2 * p - 1) as f64;
    let (f_stat, p_value) = if rss_u <= 1e-14 * rss_r.max(f64::MIN_POSITIVE) {
        (f64::INFINITY, 0.0)
    } else {
        let f = ((rss_r - rss_u) / p as f64) / (rss_u / df_den);
        let f = f.max(0.0);
        // P(F > f) = I_{d2/(d2 + d1 f)}(d2/2, d1/2)
        let xb = df_den / (df_den + p as f64 * f);
        (f, beta_reg(df_den / 2.0, p as f64 / 2.0, xb).clamp(0.0, 1.0))
    };
    Ok(GrangerResult {
        feature: name.to_owned(),
        max_lag: p,
        f_stat,
        p_value,
        rss_restricted: rss_r,
        rss_unrestricted: rss_u,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureRanking {
    pub result: GrangerResult,
    pub selected: bool,
}

/// Tests every candidate against `labels`, ranked by ascending p-value.
/// Candidates whose regression is singular come back in `skipped`.
pub fn select_features(
    candidates: &[(String, Vec<f64>)],
    labels: &[f64],
    alpha: f64,
    max_lag: usize,
) -> Result<(Vec<FeatureRanking>, Vec<(String, String)>)> {
    if candidates.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let results: Vec<_> = candidates
        .par_iter()
        .map(|(name, series)| (name, granger_test(name, series, labels, max_lag)))
        .collect();
    let mut ranked = Vec::new();
    let mut skipped = Vec::new();
    for (name, r) in results {
        match r {
            Ok(result) => ranked.push(FeatureRanking {
                selected: result.p_value < alpha,
                result,
            }),
            Err(e @ Error::Singular) => skipped.push((name.clone(), e.to_string())),
            Err(e) => return Err(e),
        }
    }
    ranked.sort_by(|a, b| a.result.p_value.total_cmp(&b.result.p_value));
    Ok((ranked, skipped))
}
