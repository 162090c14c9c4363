//! Per-iteration metrics of a run.
//!
//! Series are indexed by iteration `n = 1..=n_iters`. Missing values (an
//! undefined ratio, an average before its start) are `None`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::Algorithm;
use super::run::Prepared;
use crate::error::{Error, Result};
use crate::prox::ParamVector;
use crate::solvers::{weighted_average, weighted_running_mean, RunTrace, WeightSchedule};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XAxis {
    #[default]
    Iteration,
    CumulativeSamples,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub x_axis: XAxis,
    pub iteration: Vec<usize>,
    pub cumulative_samples: Vec<u64>,
    pub series: BTreeMap<String, Vec<Option<f64>>>,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.iteration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iteration.is_empty()
    }

    /// Abscissa values on the chosen axis.
    pub fn x(&self) -> Vec<f64> {
        match self.x_axis {
            XAxis::Iteration => self.iteration.iter().map(|&n| n as f64).collect(),
            XAxis::CumulativeSamples => self.cumulative_samples.iter().map(|&s| s as f64).collect(),
        }
    }

    pub fn with_axis(mut self, axis: XAxis) -> Self {
        self.x_axis = axis;
        self
    }

    pub fn get(&self, name: &str) -> Result<&[Option<f64>]> {
        self.series
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::invalid(format!("no series named `{name}`")))
    }

    pub fn insert(&mut self, name: impl Into<String>, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::invalid(format!(
                "series length {} differs from the axis length {}",
                values.len(),
                self.len()
            )));
        }
        self.series.insert(name.into(), values);
        Ok(())
    }

    /// Whether every series has the axis length and samples increase.
    pub fn is_aligned(&self) -> bool {
        self.cumulative_samples.len() == self.len() && self.series.values().all(|s| s.len() == self.len())
    }
}

/// Name prefix for the series of the average with weight exponent `a`.
pub fn average_prefix(a: f64) -> String {
    format!("avg[a={a}].")
}

fn masked(v: &ParamVector, mask: &[bool]) -> Vec<f64> {
    v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| *x).collect()
}

/// `(SEN, PRE)` of the support of `beta` against `reference`, with the
/// exact-zero test. A ratio with an empty denominator is `None`.
pub fn sensitivity_precision(beta: &[f64], reference: &[f64]) -> Result<(Option<f64>, Option<f64>)> {
    if beta.len() != reference.len() {
        return Err(Error::invalid(format!("lengths differ: {} vs {}", beta.len(), reference.len())));
    }
    let (mut both, mut n_ref, mut n_beta) = (0usize, 0usize, 0usize);
    for (b, r) in beta.iter().zip(reference) {
        let (b, r) = (*b != 0.0, *r != 0.0);
        both += (b && r) as usize;
        n_ref += r as usize;
        n_beta += b as usize;
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok((ratio(both, n_ref), ratio(both, n_beta)))
}

/// `‖beta − reference‖ / ‖reference‖`, `None` for a zero reference.
pub fn relative_error(beta: &[f64], reference: &[f64]) -> Result<Option<f64>> {
    if beta.len() != reference.len() {
        return Err(Error::invalid(format!("lengths differ: {} vs {}", beta.len(), reference.len())));
    }
    let norm = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(None);
    }
    let diff = beta.iter().zip(reference).map(|(b, r)| (b - r).powi(2)).sum::<f64>().sqrt();
    Ok(Some(diff / norm))
}

struct PointMetrics {
    relative_error: Vec<Option<f64>>,
    sensitivity: Vec<Option<f64>>,
    precision: Vec<Option<f64>>,
}

fn point_metrics<'a>(points: impl Iterator<Item = Option<&'a ParamVector>>, reference: &ParamVector, mask: &[bool]) -> Result<PointMetrics> {
    let r = masked(reference, mask);
    let mut out = PointMetrics {
        relative_error: Vec::new(),
        sensitivity: Vec::new(),
        precision: Vec::new(),
    };
    for point in points {
        match point {
            Some(p) => {
                let b = masked(p, mask);
                let (sen, pre) = sensitivity_precision(&b, &r)?;
                out.relative_error.push(relative_error(&b, &r)?);
                out.sensitivity.push(sen);
                out.precision.push(pre);
            }
            None => {
                out.relative_error.push(None);
                out.sensitivity.push(None);
                out.precision.push(None);
            }
        }
    }
    Ok(out)
}

/// Metric series of a dense trace.
///
/// Always `objective` (`F(θ_n)`, estimated for the random-effects model),
/// plus `gap` when `F*` is known, `kkt` for exact objectives, and
/// `relative_error`, `sensitivity`, `precision` against the reference
/// (the final iterate when none is fixed). Averaged runs add, per weight
/// sequence, `avg[a=…].objective`, `.gap`, `.weighted_gap` (the weighted
/// mean of `F(θ_k)` minus `F*`), `.relative_error`, `.sensitivity` and
/// `.precision`.
pub fn compute_metrics(prepared: &Prepared, trace: &RunTrace) -> Result<MetricSeries> {
    if !trace.is_dense() {
        return Err(Error::invalid("metrics need a trace without thinning"));
    }
    let n_iters = trace.n_iters();
    let mut out = MetricSeries {
        x_axis: XAxis::Iteration,
        iteration: (1..=n_iters).collect(),
        cumulative_samples: trace.cumulative_samples[1..].to_vec(),
        series: BTreeMap::new(),
    };
    let objective: Vec<f64> = if trace.objective_estimates.len() == n_iters + 1 {
        trace.objective_estimates.clone()
    } else {
        trace.iterates.iter().map(|t| prepared.objective(t)).collect::<Result<_>>()?
    };
    out.insert("objective", objective[1..].iter().map(|v| Some(*v)).collect())?;
    if let Some(f_star) = prepared.f_star {
        out.insert("gap", objective[1..].iter().map(|v| Some(v - f_star)).collect())?;
    }
    if trace.kkt_residuals.len() == n_iters + 1 {
        out.insert("kkt", trace.kkt_residuals[1..].iter().map(|v| Some(*v)).collect())?;
    }
    let reference = prepared.reference.as_ref().unwrap_or_else(|| trace.last_iterate());
    let mask = &prepared.metric_mask;
    let pm = point_metrics(trace.iterates[1..].iter().map(Some), reference, mask)?;
    out.insert("relative_error", pm.relative_error)?;
    out.insert("sensitivity", pm.sensitivity)?;
    out.insert("precision", pm.precision)?;

    let config = &prepared.config;
    if let (Algorithm::AveragedPg, Some(avg)) = (config.algorithm, &config.schedules.averaging) {
        let start = avg.start;
        for weights in &avg.weights {
            let prefix = average_prefix(weights.exponent_a);
            let means = weighted_average(trace, weights, start)?;
            // θ̄_n for n = start+1..=n_iters; earlier entries are undefined.
            let mut points: Vec<Option<&ParamVector>> = vec![None; start];
            points.extend(means.iter().map(Some));
            let values: Vec<Option<f64>> = points.iter().map(|p| p.map(|t| prepared.objective(t)).transpose()).collect::<Result<_>>()?;
            if let Some(f_star) = prepared.f_star {
                out.insert(format!("{prefix}gap"), values.iter().map(|v| v.map(|v| v - f_star)).collect())?;
                out.insert(format!("{prefix}weighted_gap"), weighted_gap(&objective, weights, start, f_star))?;
            }
            out.insert(format!("{prefix}objective"), values)?;
            let avg_reference = match &prepared.reference {
                Some(r) => r,
                None => means.last().expect("average is non-empty"),
            };
            let pm = point_metrics(points.into_iter(), avg_reference, mask)?;
            out.insert(format!("{prefix}relative_error"), pm.relative_error)?;
            out.insert(format!("{prefix}sensitivity"), pm.sensitivity)?;
            out.insert(format!("{prefix}precision"), pm.precision)?;
        }
    }
    Ok(out)
}

/// `A_n⁻¹ Σ_{start<k≤n} a_k F(θ_k) − F*` for `n = 1..`, `None` up to `start`.
fn weighted_gap(objective: &[f64], weights: &WeightSchedule, start: usize, f_star: f64) -> Vec<Option<f64>> {
    let mut out = vec![None; start];
    out.extend(weighted_running_mean(objective, weights, start).into_iter().map(|v| Some(v - f_star)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_ratios() {
        let r = [1.0, -2.0, 0.0, 3.0];
        assert_eq!(sensitivity_precision(&r, &r).unwrap(), (Some(1.0), Some(1.0)));
        let half = [1.0, 0.0, 0.0, 0.0];
        let r2 = [1.0, 2.0, 0.0, 0.0];
        assert_eq!(sensitivity_precision(&half, &r2).unwrap(), (Some(0.5), Some(1.0)));
        assert_eq!(sensitivity_precision(&[0.0, 0.0, 1.0], &[1.0, 1.0, 0.0]).unwrap(), (Some(0.0), Some(0.0)));
        assert_eq!(sensitivity_precision(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), (None, Some(0.0)));
        assert_eq!(sensitivity_precision(&[0.0], &[1.0]).unwrap(), (Some(0.0), None));
        assert!(sensitivity_precision(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn relative_errors() {
        let r = [3.0, -4.0];
        assert_eq!(relative_error(&r, &r).unwrap(), Some(0.0));
        assert_eq!(relative_error(&[0.0, 0.0], &r).unwrap(), Some(1.0));
        assert_eq!(relative_error(&[6.0, -8.0], &r).unwrap(), Some(1.0));
        assert_eq!(relative_error(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), None);
    }

    #[test]
    fn weighted_gap_starts_after_burn_in() {
        let f = [9.0, 3.0, 2.0, 1.0];
        let g = weighted_gap(&f, &WeightSchedule::uniform(), 1, 1.0);
        assert_eq!(g, vec![None, Some(1.0), Some(0.5)]);
    }

    #[test]
    fn series_are_aligned() {
        let config = crate::harness::run::tests_support::small_averaged_lasso();
        let record = crate::harness::run_experiment(&config).unwrap();
        let m = &record.metrics;
        assert!(m.is_aligned());
        assert_eq!(m.len(), config.n_iters);
        assert!(m.cumulative_samples.windows(2).all(|w| w[0] < w[1]));
        let prefix = average_prefix(0.0);
        let avg = m.get(&format!("{prefix}weighted_gap")).unwrap();
        assert!(avg[..4].iter().all(Option::is_none));
        assert!(avg[4..].iter().all(Option::is_some));
        // the averaged sensitivity against its own final value ends at 1
        assert_eq!(*m.get(&format!("{prefix}sensitivity")).unwrap().last().unwrap(), Some(1.0));
        assert!(m.get("nope").is_err());
    }
}
