//! Weighted averaging of iterates and the weighted-regret bound for the
//! perturbed proximal gradient.

use crate::error::{Error, Result};
use crate::prox::{composite_value, proximal_map, ParamVector, Penalty, SmoothObjective};

use super::{RunTrace, StepSchedule, WeightSchedule};

/// `θ̄_n = A_n⁻¹ Σ_{burn_in < k ≤ n} a_k θ_k` for every `n > burn_in`.
///
/// Weights use the global iteration index `k`, so discarding a burn-in does
/// not reset the weight sequence.
pub fn weighted_average(trace: &RunTrace, weights: &WeightSchedule, burn_in: usize) -> Result<Vec<ParamVector>> {
    if !trace.is_dense() {
        return Err(Error::invalid("weighted_average needs a trace without thinning"));
    }
    let last = trace.iterates.len().saturating_sub(1);
    if burn_in >= last {
        return Err(Error::invalid(format!(
            "burn-in {burn_in} leaves no iterates to average (trace has {last} iterations)"
        )));
    }
    let dim = trace.iterates[0].dim();
    let mut sum = ParamVector::zeros(dim);
    let mut total = 0.0;
    let mut out = Vec::with_capacity(last - burn_in);
    for k in burn_in + 1..=last {
        let a = weights.weight(k);
        sum.0.axpy(a, &trace.iterates[k].0, 1.0);
        total += a;
        out.push(ParamVector(&sum.0 / total));
    }
    Ok(out)
}

/// `A_n⁻¹ Σ_{start < k ≤ n} a_k v_k` for every `n > start`, where `values[k]`
/// belongs to iteration `k`.
pub fn weighted_running_mean(values: &[f64], weights: &WeightSchedule, start: usize) -> Vec<f64> {
    let mut sum = 0.0;
    let mut total = 0.0;
    values
        .iter()
        .enumerate()
        .skip(start + 1)
        .map(|(k, v)| {
            let a = weights.weight(k);
            sum += a * v;
            total += a;
            sum / total
        })
        .collect()
}

/// Weighted gaps and their bound along a run, for `n = 1..=n_iters`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretDiagnostic {
    /// `A_n⁻¹ Σ_{k≤n} a_k F(θ_k) − F(θ*)`
    pub weighted_gaps: Vec<f64>,
    /// `B_n`
    pub bounds: Vec<f64>,
    /// Whether `a_n/γ_n` is nondecreasing over the run.
    pub ratio_nondecreasing: bool,
}

impl RegretDiagnostic {
    /// Largest `gap_n − B_n` over the run.
    pub fn max_excess(&self) -> f64 {
        self.weighted_gaps
            .iter()
            .zip(&self.bounds)
            .map(|(g, b)| g - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.max_excess() <= tol
    }
}

/// Evaluates the bound
///
/// ```text
/// B_n = (2A_n)⁻¹ Σ_{k=1}^n (a_k/γ_k − a_{k−1}/γ_{k−1}) ‖θ_{k−1} − θ*‖²     (a_0/γ_0 := 0)
///     − A_n⁻¹ Σ_{k=1}^n a_k ( ⟨T_{γ_k}(θ_{k−1}) − θ*, η_k⟩ − γ_k ‖η_k‖² )
/// ```
///
/// on a perturbed proximal gradient trace, along with the weighted gaps it
/// controls. Valid for convex `f` and `γ_k ≤ 1/L`.
pub fn regret_bound_diagnostic<O: SmoothObjective + ?Sized>(
    obj: &O,
    penalty: &Penalty,
    trace: &RunTrace,
    theta_star: &ParamVector,
    steps: &StepSchedule,
    weights: &WeightSchedule,
    eta_history: &[ParamVector],
) -> Result<RegretDiagnostic> {
    if !trace.is_dense() {
        return Err(Error::invalid("regret diagnostic needs a trace without thinning"));
    }
    let n_iters = trace.iterates.len() - 1;
    if eta_history.len() != n_iters {
        return Err(Error::invalid(format!(
            "eta history has {} entries for {n_iters} iterations",
            eta_history.len()
        )));
    }
    let f_star = composite_value(obj, penalty, theta_star)
        .map_err(|_| Error::unsupported("regret diagnostic needs F(θ*), i.e. a solved instance with a value callable"))?;

    let mut gaps = Vec::with_capacity(n_iters);
    let mut bounds = Vec::with_capacity(n_iters);
    let mut ratio_nondecreasing = true;
    let mut prev_ratio = 0.0;
    let (mut a_total, mut weighted_f, mut drift, mut noise) = (0.0, 0.0, 0.0, 0.0);
    for k in 1..=n_iters {
        let a = weights.weight(k);
        let gamma = steps.gamma(k);
        let ratio = a / gamma;
        if k > 1 && ratio < prev_ratio {
            ratio_nondecreasing = false;
        }
        let prev = &trace.iterates[k - 1];
        drift += (ratio - prev_ratio) * prev.sub(theta_star).norm_squared();
        prev_ratio = ratio;

        let eta = &eta_history[k - 1];
        let mapped = proximal_map(obj, penalty, prev, gamma)?;
        noise += a * (mapped.sub(theta_star).dot(eta) - gamma * eta.norm_squared());

        a_total += a;
        weighted_f += a * composite_value(obj, penalty, &trace.iterates[k])?;
        gaps.push(weighted_f / a_total - f_star);
        bounds.push(drift / (2.0 * a_total) - noise / a_total);
    }
    Ok(RegretDiagnostic {
        weighted_gaps: gaps,
        bounds,
        ratio_nondecreasing,
    })
}
