//! Log-log slope fits for convergence rates.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::MetricSeries;
use crate::error::{Error, Result};

/// Fraction of leading points dropped by [`default_window`].
pub const TRANSIENT_FRACTION: f64 = 0.2;
const BOOTSTRAP_DRAWS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% percentile bootstrap interval for the slope.
    pub ci: (f64, f64),
    /// Index range of the points actually used.
    pub window: Range<usize>,
    pub n_points: usize,
}

impl RateFit {
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.slope >= lo && self.slope <= hi
    }
}

/// Indices after the first 20%.
pub fn default_window(len: usize) -> Range<usize> {
    ((len as f64 * TRANSIENT_FRACTION).floor() as usize)..len
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Least-squares slope of `log y` against `log x` over `window`.
///
/// When the window holds non-positive or missing values it is shrunk to
/// start after the last such value, with a warning. Fails when fewer than
/// three points remain.
pub fn fit_log_log(x: &[f64], y: &[Option<f64>], window: Range<usize>, seed: u64) -> Result<RateFit> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("x has {} points, y has {}", x.len(), y.len())));
    }
    let end = window.end.min(x.len());
    let mut start = window.start.min(end);
    let bad = |i: usize| !matches!(y[i], Some(v) if v > 0.0 && v.is_finite()) || !(x[i] > 0.0);
    if let Some(last_bad) = (start..end).rev().find(|&i| bad(i)) {
        log::warn!(
            "fit window {}..{} contains non-positive values; shrinking to {}..{}",
            start,
            end,
            last_bad + 1,
            end
        );
        start = last_bad + 1;
    }
    if end - start < 3 {
        return Err(Error::Numerical(format!("only {} usable points for a rate fit", end - start)));
    }
    let lx: Vec<f64> = x[start..end].iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y[start..end].iter().map(|v| v.expect("checked").ln()).collect();
    let (slope, intercept) = least_squares(&lx, &ly);
    let mut rng = crate::stream(seed);
    let n = lx.len();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_DRAWS);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..BOOTSTRAP_DRAWS {
        for j in 0..n {
            let k = rng.random_range(0..n);
            bx[j] = lx[k];
            by[j] = ly[k];
        }
        let s = least_squares(&bx, &by).0;
        if s.is_finite() {
            slopes.push(s);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let ci = if slopes.is_empty() {
        (slope, slope)
    } else {
        (quantile_sorted(&slopes, 0.025), quantile_sorted(&slopes, 0.975))
    };
    Ok(RateFit {
        slope,
        intercept,
        ci,
        window: start..end,
        n_points: n,
    })
}

/// Slope of series `name` against the series axis.
pub fn fit_rate(series: &MetricSeries, name: &str, window: Option<Range<usize>>, seed: u64) -> Result<RateFit> {
    let y = series.get(name)?;
    let window = window.unwrap_or_else(|| default_window(y.len()));
    fit_log_log(&series.x(), y, window, seed)
}

/// Slope of series `name` at about `points` log-spaced iterations in
/// `first..=last` (1-based). Oscillating series, such as accelerated gaps,
/// average out over several decades where a dense tail window would not.
pub fn fit_rate_log_spaced(
    series: &MetricSeries,
    name: &str,
    first: usize,
    last: usize,
    points: usize,
    seed: u64,
) -> Result<RateFit> {
    let y = series.get(name)?;
    if first == 0 || first >= last || last > y.len() || points < 3 {
        return Err(Error::invalid(format!(
            "log-spaced window {first}..={last} with {points} points on a series of length {}",
            y.len()
        )));
    }
    let ratio = last as f64 / first as f64;
    let mut idx: Vec<usize> = (0..points)
        .map(|i| (first as f64 * ratio.powf(i as f64 / (points - 1) as f64)).round() as usize)
        .collect();
    idx.dedup();
    let x = series.x();
    let xs: Vec<f64> = idx.iter().map(|&n| x[n - 1]).collect();
    let ys: Vec<Option<f64>> = idx.iter().map(|&n| y[n - 1]).collect();
    fit_log_log(&xs, &ys, 0..xs.len(), seed)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}
