//! Proximal gradient loops: exact, perturbed, and perturbed FISTA.
//!
//! Every run is a deterministic function of its inputs and seed. The solver
//! owns a single ChaCha stream seeded from `seed` and hands it to the oracle
//! at each iteration.

mod averaging;
mod presets;
mod schedules;

pub use averaging::{regret_bound_diagnostic, weighted_average, weighted_running_mean, RegretDiagnostic};
pub use presets::{schedule_preset, Affine, Bound, CostModel, PresetId, PresetRow, PresetSchedules, Table1Row, Table2Row};
pub use schedules::{
    check_t_gamma, make_t_sequence, validate_t_gamma, BatchSchedule, Rounding, StepSchedule, TCheck, TSequence,
    WeightSchedule,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{GradientOracle, OracleOutput};
use crate::prox::{kkt_residual, ParamVector, Penalty, SmoothObjective};

/// Per-iteration record of a run. Index `n` of every dense series refers to
/// `θ_n`, so series have `n_iters + 1` entries and entry 0 describes the
/// starting point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    /// Stored iterates, possibly thinned; see `iterate_index`.
    pub iterates: Vec<ParamVector>,
    pub iterate_index: Vec<usize>,
    /// `F̂(θ_n)` when an evaluator was supplied, else empty.
    pub objective_estimates: Vec<f64>,
    pub samples_per_iter: Vec<u64>,
    pub cumulative_samples: Vec<u64>,
    /// `‖θ_n − T_γ(θ_n)‖` when an exact objective was supplied, else empty.
    pub kkt_residuals: Vec<f64>,
    /// `γ_n` for `n = 1..=n_iters` (entry 0 is `γ_1`, repeated for alignment).
    pub step_sizes: Vec<f64>,
    /// `η_n` for `n = 1..=n_iters` when the oracle exposes its exact gradient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_history: Option<Vec<ParamVector>>,
    pub seed: u64,
}

impl RunTrace {
    fn new(seed: u64, capacity: usize) -> Self {
        RunTrace {
            iterates: Vec::new(),
            iterate_index: Vec::new(),
            objective_estimates: Vec::with_capacity(capacity),
            samples_per_iter: Vec::with_capacity(capacity),
            cumulative_samples: Vec::with_capacity(capacity),
            kkt_residuals: Vec::new(),
            step_sizes: Vec::with_capacity(capacity),
            eta_history: None,
            seed,
        }
    }

    /// Number of completed iterations.
    pub fn n_iters(&self) -> usize {
        self.samples_per_iter.len().saturating_sub(1)
    }

    pub fn is_dense(&self) -> bool {
        self.iterate_index.iter().enumerate().all(|(i, &n)| i == n)
    }

    pub fn last_iterate(&self) -> &ParamVector {
        self.iterates.last().expect("trace always stores θ_0")
    }

    /// Stored iterate for iteration `n`, if kept by thinning.
    pub fn iterate(&self, n: usize) -> Option<&ParamVector> {
        self.iterate_index
            .binary_search(&n)
            .ok()
            .map(|pos| &self.iterates[pos])
    }

    pub fn total_samples(&self) -> u64 {
        self.cumulative_samples.last().copied().unwrap_or(0)
    }
}

type Evaluator<'a> = dyn Fn(&ParamVector) -> Result<f64> + 'a;

/// Optional instrumentation for a run.
pub struct RunOptions<'a> {
    /// Keep every `thin`-th iterate (θ_0 and the last iterate are always kept).
    pub thin: usize,
    /// Computes `F̂(θ_n)` for `objective_estimates`.
    pub evaluator: Option<&'a Evaluator<'a>>,
    /// Exact smooth part, used for `kkt_residuals`.
    pub exact: Option<&'a dyn SmoothObjective>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        RunOptions {
            thin: 1,
            evaluator: None,
            exact: None,
        }
    }
}

impl<'a> RunOptions<'a> {
    pub fn thin(mut self, every: usize) -> Self {
        self.thin = every.max(1);
        self
    }

    pub fn evaluator(mut self, f: &'a Evaluator<'a>) -> Self {
        self.evaluator = Some(f);
        self
    }

    pub fn exact(mut self, obj: &'a dyn SmoothObjective) -> Self {
        self.exact = Some(obj);
        self
    }
}

struct Recorder<'o, 'a> {
    trace: RunTrace,
    opts: &'o RunOptions<'a>,
    penalty: &'o Penalty,
    n_iters: usize,
    record_eta: bool,
}

impl<'o, 'a> Recorder<'o, 'a> {
    fn new(seed: u64, n_iters: usize, opts: &'o RunOptions<'a>, penalty: &'o Penalty, record_eta: bool) -> Self {
        let mut trace = RunTrace::new(seed, n_iters + 1);
        if record_eta {
            trace.eta_history = Some(Vec::with_capacity(n_iters));
        }
        Recorder {
            trace,
            opts,
            penalty,
            n_iters,
            record_eta,
        }
    }

    fn record(&mut self, n: usize, theta: &ParamVector, samples: u64, gamma: f64) -> Result<()> {
        let t = &mut self.trace;
        if n.is_multiple_of(self.opts.thin) || n == self.n_iters {
            t.iterates.push(theta.clone());
            t.iterate_index.push(n);
        }
        if let Some(eval) = self.opts.evaluator {
            t.objective_estimates.push(eval(theta)?);
        }
        if let Some(exact) = self.opts.exact {
            t.kkt_residuals.push(kkt_residual(exact, self.penalty, theta, gamma)?);
        }
        let cum = t.cumulative_samples.last().copied().unwrap_or(0) + samples;
        t.samples_per_iter.push(samples);
        t.cumulative_samples.push(cum);
        t.step_sizes.push(gamma);
        Ok(())
    }

    fn record_eta(&mut self, eta: Option<ParamVector>) {
        if let (Some(hist), Some(eta)) = (self.trace.eta_history.as_mut(), eta) {
            hist.push(eta);
        }
    }

    fn abort(self, iteration: usize, source: Error) -> Error {
        Error::Aborted {
            iteration,
            partial: Box::new(self.trace),
            source: Box::new(source),
        }
    }

    fn finish(mut self) -> RunTrace {
        if self.record_eta {
            let complete = self
                .trace
                .eta_history
                .as_ref()
                .is_some_and(|h| h.len() == self.n_iters);
            if !complete {
                self.trace.eta_history = None;
            }
        }
        self.trace
    }
}

fn check_start(penalty: &Penalty, theta0: &ParamVector, dim: usize) -> Result<()> {
    theta0.check_finite("starting point")?;
    if theta0.dim() != dim || penalty.dim() != dim {
        return Err(Error::invalid(format!(
            "dimension mismatch: start {}, penalty {}, problem {dim}",
            theta0.dim(),
            penalty.dim()
        )));
    }
    if !penalty.value(theta0).is_finite() {
        return Err(Error::invalid("starting point is outside the domain of the penalty"));
    }
    Ok(())
}

fn check_iters(n_iters: usize) -> Result<()> {
    if n_iters == 0 {
        return Err(Error::invalid("n_iters must be >= 1"));
    }
    Ok(())
}

/// Exact proximal gradient: `θ_{n+1} = Prox_{γ_{n+1}}(θ_n − γ_{n+1}∇f(θ_n))`.
///
/// Records `F(θ_n)` when the objective has a value callable, and the KKT
/// residual at every iterate.
pub fn run_proximal_gradient<O: SmoothObjective>(
    obj: &O,
    penalty: &Penalty,
    theta0: &ParamVector,
    steps: &StepSchedule,
    n_iters: usize,
) -> Result<RunTrace> {
    let value = |t: &ParamVector| Ok(obj.value(t)? + penalty.value(t));
    let has_value = obj.value(theta0).is_ok();
    let mut opts = RunOptions::default().exact(obj);
    if has_value {
        opts = opts.evaluator(&value);
    }
    run_proximal_gradient_with(obj, penalty, theta0, steps, n_iters, &opts)
}

pub fn run_proximal_gradient_with<O: SmoothObjective>(
    obj: &O,
    penalty: &Penalty,
    theta0: &ParamVector,
    steps: &StepSchedule,
    n_iters: usize,
    opts: &RunOptions<'_>,
) -> Result<RunTrace> {
    check_iters(n_iters)?;
    steps.validate()?;
    check_start(penalty, theta0, obj.dim())?;
    let mut rec = Recorder::new(0, n_iters, opts, penalty, false);
    let mut theta = theta0.clone();
    rec.record(0, &theta, 0, steps.gamma(1))?;
    for n in 0..n_iters {
        let gamma = steps.gamma(n + 1);
        let step = obj
            .gradient(&theta)
            .and_then(|grad| penalty.prox(&theta.axpy(-gamma, &grad), gamma));
        theta = match step {
            Ok(next) => next,
            Err(e) => return Err(rec.abort(n + 1, e)),
        };
        rec.record(n + 1, &theta, 0, gamma)?;
    }
    Ok(rec.finish())
}

fn call_oracle(
    oracle: &mut dyn GradientOracle,
    point: &ParamVector,
    iteration: usize,
    batch: usize,
    rng: &mut crate::Stream,
) -> Result<(OracleOutput, Option<ParamVector>)> {
    let out = oracle
        .estimate(point, iteration, batch, rng)
        .map_err(|e| match e {
            e @ Error::Oracle { .. } => e,
            e => Error::Oracle {
                iteration,
                source: Box::new(e),
            },
        })?;
    out.gradient.check_finite("oracle output").map_err(|e| Error::Oracle {
        iteration,
        source: Box::new(e),
    })?;
    let eta = match oracle.exact_gradient(point) {
        Some(exact) => Some(out.gradient.sub(&exact?)),
        None => None,
    };
    Ok((out, eta))
}

/// Perturbed proximal gradient: `∇f(θ_n)` is replaced by the oracle's
/// `H_{n+1}` computed from a batch of `m_{n+1}` samples.
pub fn run_perturbed_pg(
    oracle: &mut dyn GradientOracle,
    penalty: &Penalty,
    theta0: &ParamVector,
    steps: &StepSchedule,
    batches: &BatchSchedule,
    n_iters: usize,
    seed: u64,
) -> Result<RunTrace> {
    run_perturbed_pg_with(oracle, penalty, theta0, steps, batches, n_iters, seed, &RunOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn run_perturbed_pg_with(
    oracle: &mut dyn GradientOracle,
    penalty: &Penalty,
    theta0: &ParamVector,
    steps: &StepSchedule,
    batches: &BatchSchedule,
    n_iters: usize,
    seed: u64,
    opts: &RunOptions<'_>,
) -> Result<RunTrace> {
    run_perturbed_fista_with(
        oracle,
        penalty,
        theta0,
        steps,
        batches,
        TSequence::Unit,
        n_iters,
        seed,
        opts,
    )
}

/// Perturbed FISTA:
/// `ϑ_n = θ_n + t_n⁻¹(t_{n−1} − 1)(θ_n − θ_{n−1})`,
/// `θ_{n+1} = Prox_{γ_{n+1}}(ϑ_n − γ_{n+1}H_{n+1})` with `H_{n+1} ≈ ∇f(ϑ_n)`.
#[allow(clippy::too_many_arguments)]
pub fn run_perturbed_fista(
    oracle: &mut dyn GradientOracle,
    penalty: &Penalty,
    theta0: &ParamVector,
    steps: &StepSchedule,
    batches: &BatchSchedule,
    tseq: TSequence,
    n_iters: usize,
    seed: u64,
) -> Result<RunTrace> {
    run_perturbed_fista_with(
        oracle,
        penalty,
        theta0,
        steps,
        batches,
        tseq,
        n_iters,
        seed,
        &RunOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn run_perturbed_fista_with(
    oracle: &mut dyn GradientOracle,
    penalty: &Penalty,
    theta0: &ParamVector,
    steps: &StepSchedule,
    batches: &BatchSchedule,
    tseq: TSequence,
    n_iters: usize,
    seed: u64,
    opts: &RunOptions<'_>,
) -> Result<RunTrace> {
    check_iters(n_iters)?;
    steps.validate()?;
    batches.validate()?;
    check_start(penalty, theta0, oracle.dim())?;
    if let TCheck::Violation { index } = validate_t_gamma(steps, tseq, n_iters) {
        return Err(Error::invalid(format!(
            "stepsize and t sequence are incompatible: condition fails at n = {index}"
        )));
    }
    let t = make_t_sequence(tseq, n_iters)?;
    let mut rng = crate::stream(seed);
    let record_eta = oracle.exact_gradient(theta0).is_some();
    let mut rec = Recorder::new(seed, n_iters, opts, penalty, record_eta);

    let mut prev = theta0.clone();
    let mut theta = theta0.clone();
    rec.record(0, &theta, 0, steps.gamma(1))?;
    for n in 0..n_iters {
        let gamma = steps.gamma(n + 1);
        let batch = batches.size(n + 1);
        // θ_1 uses no extrapolation; afterwards the momentum weight is (t_{n−1} − 1)/t_n.
        let momentum = if n == 0 { 0.0 } else { (t[n - 1] - 1.0) / t[n] };
        let point = if momentum == 0.0 {
            theta.clone()
        } else {
            theta.axpy(momentum, &theta.sub(&prev))
        };
        let step = call_oracle(oracle, &point, n + 1, batch, &mut rng).and_then(|(out, eta)| {
            let next = penalty.prox(&point.axpy(-gamma, &out.gradient), gamma)?;
            Ok((next, out.samples_used, eta))
        });
        let (next, used, eta) = match step {
            Ok(s) => s,
            Err(e) => return Err(rec.abort(n + 1, e)),
        };
        rec.record_eta(eta);
        prev = std::mem::replace(&mut theta, next);
        rec.record(n + 1, &theta, used, gamma)?;
    }
    Ok(rec.finish())
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration (50 steps, relative tolerance 1e−9). For `f(θ) = ½‖Aθ − b‖²`
/// pass `v ↦ AᵀAv` to get the Lipschitz constant of `∇f`.
pub fn estimate_lipschitz(dim: usize, apply: impl Fn(&ParamVector) -> ParamVector) -> f64 {
    const STEPS: usize = 50;
    const TOL: f64 = 1e-9;
    let mut v = ParamVector::from_vec((0..dim).map(|i| 1.0 + (i as f64) * 1e-3).collect());
    let norm = v.norm();
    v.0 /= norm;
    let mut estimate = 0.0;
    for _ in 0..STEPS {
        let w = apply(&v);
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        let done = (next - estimate).abs() <= TOL * next;
        estimate = next;
        v = ParamVector(w.0 / next);
        if done {
            break;
        }
    }
    estimate
}

/// High-accuracy minimizer for use as a reference point `θ*`.
///
/// Runs FISTA with step `γ` and restarts the momentum whenever the update
/// direction turns against the extrapolation, which keeps the convergence
/// linear on strongly convex problems. Stops once `‖θ − T_γ(θ)‖ < tol`.
/// Returns the point and the number of iterations used.
pub fn solve_reference<O: SmoothObjective + ?Sized>(
    obj: &O,
    penalty: &Penalty,
    theta0: &ParamVector,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(ParamVector, usize)> {
    check_start(penalty, theta0, obj.dim())?;
    let mut theta = theta0.clone();
    let mut point = theta0.clone();
    let mut t: f64 = 1.0;
    for n in 1..=max_iter {
        let grad = obj.gradient(&point)?;
        let next = penalty.prox(&point.axpy(-gamma, &grad), gamma)?;
        if point.sub(&next).dot(&next.sub(&theta)) > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        point = next.axpy((t - 1.0) / t_next, &next.sub(&theta));
        theta = next;
        t = t_next;
        if n % 10 == 0 && kkt_residual(obj, penalty, &theta, gamma)? < tol {
            return Ok((theta, n));
        }
    }
    let res = kkt_residual(obj, penalty, &theta, gamma)?;
    if res < tol {
        Ok((theta, max_iter))
    } else {
        Err(Error::Numerical(format!(
            "reference solve stopped after {max_iter} iterations with residual {res:e}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::ExactOracle;
    use crate::prox::{ElasticNetPenalty, FnObjective};

    fn lasso_1d() -> (FnObjective, Penalty) {
        let obj = FnObjective::new(1, |t| ParamVector::from_slice(&[t[0] - 2.0]))
            .with_value(|t| 0.5 * (t[0] - 2.0).powi(2))
            .with_lipschitz(1.0);
        (obj, Penalty::ElasticNet(ElasticNetPenalty::lasso(1, 1.0).unwrap()))
    }

    #[test]
    fn zero_problem_stays_put() {
        let obj = FnObjective::zero(3);
        let theta0 = ParamVector::from_slice(&[1.0, 2.0, -3.0]);
        let trace = run_proximal_gradient(&obj, &Penalty::none(3), &theta0, &StepSchedule::constant(0.5), 5).unwrap();
        assert!(trace.iterates.iter().all(|t| *t == theta0));
        assert_eq!(trace.iterates.len(), 6);
        assert_eq!(trace.objective_estimates.len(), 6);
    }

    #[test]
    fn one_step_reaches_lasso_solution() {
        let (obj, pen) = lasso_1d();
        let trace = run_proximal_gradient(&obj, &pen, &ParamVector::from_slice(&[2.0]), &StepSchedule::constant(1.0), 1).unwrap();
        assert_eq!(trace.iterates[1][0], 1.0);
        assert_eq!(trace.kkt_residuals[1], 0.0);
    }

    #[test]
    fn start_outside_domain_rejected() {
        let obj = FnObjective::zero(1);
        let pen = Penalty::Box(crate::prox::BoxConstraint::uniform(1, 0.0, 1.0).unwrap());
        let err = run_proximal_gradient(&obj, &pen, &ParamVector::from_slice(&[3.0]), &StepSchedule::constant(1.0), 3);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn exact_oracle_reproduces_plain_pg() {
        let (obj, pen) = lasso_1d();
        let theta0 = ParamVector::from_slice(&[-4.0]);
        let steps = StepSchedule::constant(0.3);
        let plain = run_proximal_gradient(&obj, &pen, &theta0, &steps, 20).unwrap();
        let mut oracle = ExactOracle::new(&obj);
        let value = |t: &ParamVector| Ok(obj.value(t)? + pen.value(t));
        let opts = RunOptions::default().evaluator(&value).exact(&obj);
        let perturbed = run_perturbed_pg_with(&mut oracle, &pen, &theta0, &steps, &BatchSchedule::constant(1), 20, 9, &opts).unwrap();
        assert_eq!(plain.iterates, perturbed.iterates);
        assert_eq!(plain.objective_estimates, perturbed.objective_estimates);
        assert_eq!(plain.kkt_residuals, perturbed.kkt_residuals);
        assert!(perturbed.eta_history.unwrap().iter().all(|e| e.norm() == 0.0));
    }

    #[test]
    fn thinning_keeps_ends() {
        let (obj, pen) = lasso_1d();
        let value = |t: &ParamVector| Ok(obj.value(t)? + pen.value(t));
        let opts = RunOptions::default().thin(4).evaluator(&value);
        let trace = run_proximal_gradient_with(&obj, &pen, &ParamVector::from_slice(&[5.0]), &StepSchedule::constant(0.1), 10, &opts).unwrap();
        assert_eq!(trace.iterate_index, vec![0, 4, 8, 10]);
        assert_eq!(trace.objective_estimates.len(), 11);
        assert!(trace.iterate(4).is_some() && trace.iterate(5).is_none());
        assert!(!trace.is_dense());
    }

    #[test]
    fn invalid_schedules_rejected_before_running() {
        let (obj, pen) = lasso_1d();
        let mut oracle = ExactOracle::new(&obj);
        let ok = StepSchedule::constant(0.1);
        assert!(run_perturbed_fista(&mut oracle, &pen, &ParamVector::zeros(1), &ok, &BatchSchedule::constant(1), TSequence::Recursive, 5, 0).is_ok());
        let growing = StepSchedule::power(0.1, -1.0);
        assert!(matches!(
            run_perturbed_fista(&mut oracle, &pen, &ParamVector::zeros(1), &growing, &BatchSchedule::constant(1), TSequence::Recursive, 5, 0),
            Err(Error::InvalidArgument(_))
        ));
        let bad_t = TSequence::Power { beta: 1.5, n0: 1.0 };
        assert!(matches!(
            run_perturbed_fista(&mut oracle, &pen, &ParamVector::zeros(1), &ok, &BatchSchedule::constant(1), bad_t, 5, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn oracle_failure_keeps_partial_trace() {
        struct Failing(usize);
        impl GradientOracle for Failing {
            fn dim(&self) -> usize {
                1
            }
            fn estimate(&mut self, theta: &ParamVector, iteration: usize, batch: usize, _rng: &mut dyn rand::RngCore) -> Result<OracleOutput> {
                if iteration > self.0 {
                    return Err(Error::Numerical("boom".into()));
                }
                Ok(OracleOutput {
                    gradient: theta.clone(),
                    samples_used: batch as u64,
                })
            }
        }
        let mut oracle = Failing(3);
        let err = run_perturbed_pg(&mut oracle, &Penalty::none(1), &ParamVector::from_slice(&[1.0]), &StepSchedule::constant(0.5), &BatchSchedule::constant(2), 10, 0).unwrap_err();
        match err {
            Error::Aborted { iteration, partial, source } => {
                assert_eq!(iteration, 4);
                assert_eq!(partial.n_iters(), 3);
                assert_eq!(partial.cumulative_samples, vec![0, 2, 4, 6]);
                assert!(matches!(*source, Error::Oracle { iteration: 4, .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let diag = [1.0, 4.0, 2.5];
        let l = estimate_lipschitz(3, |v| ParamVector::from_vec(v.iter().zip(&diag).map(|(a, b)| a * b).collect()));
        assert!((l - 4.0).abs() < 1e-6, "{l}");
    }

    #[test]
    fn reference_solve_on_ill_conditioned_lasso() {
        use crate::models::{generate_lasso, Conditioning, LassoSpec};
        let inst = generate_lasso(&LassoSpec {
            conditioning: Conditioning::LogSpectrum { smallest: 1e-6 },
            ..LassoSpec::default()
        })
        .unwrap();
        let pen = Penalty::ElasticNet(ElasticNetPenalty::lasso(20, 0.01).unwrap());
        let l = inst.objective.lipschitz().unwrap();
        let (star, iters) = solve_reference(&inst.objective, &pen, &ParamVector::zeros(20), 1.0 / l, 1e-12, 1_000_000).unwrap();
        assert!(kkt_residual(&inst.objective, &pen, &star, 1.0 / l).unwrap() < 1e-12);
        assert!(iters < 1_000_000);
        let (_, pen1) = lasso_1d();
        let (one, _) = solve_reference(&lasso_1d().0, &pen1, &ParamVector::zeros(1), 1.0, 1e-14, 100).unwrap();
        assert!((one[0] - 1.0).abs() < 1e-14);
    }
}
