//! Instance preparation and single runs.

use std::sync::Arc;
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig, OracleConfig, ProblemConfig, ReferenceConfig};
use super::metrics::{compute_metrics, MetricSeries};
use crate::error::{Error, Result};
use crate::models::logistic::{generate_synthetic, LoglikPanel, LogisticREModel};
use crate::models::mrf::MrfModel;
use crate::models::{generate_lasso, LeastSquares};
use crate::oracles::{ExactOracle, GradientOracle, InitPolicy, MinibatchOracle, NoisyOracle};
use crate::prox::{ElasticNetPenalty, ParamVector, Penalty, SmoothObjective};
use crate::solvers::{run_perturbed_fista_with, solve_reference, RunOptions, RunTrace, TSequence};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

enum Instance {
    Lasso(Arc<LeastSquares>),
    Ising(Arc<MrfModel>),
    Logistic { model: Arc<LogisticREModel>, panel: LoglikPanel },
}

/// A configuration with its instance built and its reference quantities
/// computed; shared read-only by all replications.
pub struct Prepared {
    pub config: ExperimentConfig,
    instance: Instance,
    pub penalty: Penalty,
    pub theta0: ParamVector,
    /// `F(θ*)` when the objective is exact.
    pub f_star: Option<f64>,
    pub theta_star: Option<ParamVector>,
    /// Fixed reference for relative error and support recovery; `None`
    /// means each run's final iterate.
    pub reference: Option<ParamVector>,
    /// Coordinates entering relative error and support recovery.
    pub metric_mask: Vec<bool>,
}

/// Reference solves stop at this KKT residual.
const REFERENCE_TOL: f64 = 1e-10;
const REFERENCE_MAX_ITER: usize = 2_000_000;

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        Self::build(config).map_err(|e| Error::Experiment {
            context: context(config),
            source: Box::new(e),
        })
    }

    fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut prepared = match &config.problem {
            ProblemConfig::LassoLs { spec, lambda, alpha, .. } => {
                let inst = generate_lasso(spec)?;
                let obj = Arc::new(inst.objective);
                let dim = obj.dim();
                let penalty = Penalty::ElasticNet(ElasticNetPenalty::uniform(dim, *lambda, *alpha)?);
                let theta0 = ParamVector::zeros(dim);
                let gamma = 1.0 / obj.lipschitz().unwrap_or(1.0);
                let (star, _) = solve_reference(&*obj, &penalty, &theta0, gamma, REFERENCE_TOL, REFERENCE_MAX_ITER)?;
                let f_star = obj.value(&star)? + penalty.value(&star);
                Prepared {
                    config: config.clone(),
                    instance: Instance::Lasso(obj),
                    penalty,
                    theta0,
                    f_star: Some(f_star),
                    theta_star: Some(star),
                    reference: None,
                    metric_mask: vec![true; dim],
                }
            }
            ProblemConfig::Ising { instance, lambda, .. } => {
                let (model, population_theta) = instance.build()?;
                let dim = model.dim();
                let penalty = model.penalty(*lambda, None)?;
                let theta0 = ParamVector::zeros(dim);
                let star = match population_theta {
                    Some(theta) if *lambda == 0.0 => theta,
                    _ => {
                        let gamma = 1.0 / model.variance_lipschitz_bound();
                        solve_reference(&model, &penalty, &theta0, gamma, REFERENCE_TOL, REFERENCE_MAX_ITER)?.0
                    }
                };
                let f_star = model.value(&star)? + penalty.value(&star);
                Prepared {
                    config: config.clone(),
                    instance: Instance::Ising(Arc::new(model)),
                    penalty,
                    theta0,
                    f_star: Some(f_star),
                    theta_star: Some(star),
                    reference: None,
                    metric_mask: vec![true; dim],
                }
            }
            ProblemConfig::LogisticRe { spec, .. } => {
                let inst = generate_synthetic(spec)?;
                let model = Arc::new(inst.model);
                let p = model.n_covariates();
                let penalty = model.penalty(spec.lambda, spec.alpha)?;
                // β = 0, σ = 1
                let mut theta0 = ParamVector::zeros(p + 1);
                theta0[p] = 1.0;
                let mut rng = crate::substream(config.metrics.panel_seed, 13);
                let panel = LoglikPanel::new(model.n_effects(), config.metrics.loglik_panel, &mut rng)?;
                let mut mask = vec![true; p + 1];
                mask[p] = false;
                Prepared {
                    config: config.clone(),
                    instance: Instance::Logistic { model, panel },
                    penalty,
                    theta0,
                    f_star: None,
                    theta_star: None,
                    reference: None,
                    metric_mask: mask,
                }
            }
        };
        prepared.reference = match &config.metrics.reference {
            ReferenceConfig::Auto => prepared.theta_star.clone(),
            ReferenceConfig::FinalIterate => None,
            ReferenceConfig::Fixed { values } => {
                if values.len() != prepared.theta0.dim() {
                    return Err(Error::invalid(format!(
                        "fixed reference has {} entries, expected {}",
                        values.len(),
                        prepared.theta0.dim()
                    )));
                }
                Some(ParamVector::from_slice(values))
            }
            ReferenceConfig::LongRun { n_iters, seed } => {
                let trace = prepared.trace_with(*seed, *n_iters)?;
                Some(trace.last_iterate().clone())
            }
        };
        Ok(prepared)
    }

    pub fn dim(&self) -> usize {
        self.theta0.dim()
    }

    fn smooth(&self) -> Option<&dyn SmoothObjective> {
        match &self.instance {
            Instance::Lasso(obj) => Some(&**obj),
            Instance::Ising(model) => Some(&**model),
            Instance::Logistic { .. } => None,
        }
    }

    /// `F(θ)` exactly when available, else the Monte Carlo estimate
    /// `−ℓ̂(θ) + g(θ)` on the fixed panel.
    pub fn objective(&self, theta: &ParamVector) -> Result<f64> {
        let smooth = match &self.instance {
            Instance::Lasso(obj) => obj.value(theta)?,
            Instance::Ising(model) => model.value(theta)?,
            Instance::Logistic { model, panel } => -panel.loglik(model, theta)?,
        };
        Ok(smooth + self.penalty.value(theta))
    }

    pub fn is_exact_objective(&self) -> bool {
        self.smooth().is_some()
    }

    pub fn make_oracle(&self) -> Result<Box<dyn GradientOracle>> {
        let oracle_config = match &self.config.problem {
            ProblemConfig::LassoLs { oracle, .. } | ProblemConfig::Ising { oracle, .. } | ProblemConfig::LogisticRe { oracle, .. } => oracle,
        };
        let oracle: Box<dyn GradientOracle> = match (&self.instance, oracle_config) {
            (Instance::Lasso(obj), OracleConfig::Exact) => Box::new(ExactOracle::new(Arc::clone(obj))),
            (Instance::Lasso(obj), OracleConfig::Noisy { sd }) => Box::new(NoisyOracle::new(Arc::clone(obj), *sd)?),
            (Instance::Lasso(obj), OracleConfig::Minibatch) => {
                Box::new(MinibatchOracle::new(obj.dim(), obj.component_gradients())?)
            }
            (Instance::Ising(model), OracleConfig::Exact) => Box::new(ExactOracle::new(Arc::clone(model))),
            (Instance::Ising(model), OracleConfig::Iid) => Box::new(model.iid_oracle()?),
            (Instance::Ising(model), OracleConfig::Gibbs { warm, burn_in }) => {
                let init = if *warm {
                    InitPolicy::Warm {
                        initial: vec![0; model.p()],
                    }
                } else {
                    let m = (**model).clone();
                    InitPolicy::fresh(move |_, rng: &mut dyn RngCore| Ok(m.uniform_config(rng)))
                };
                Box::new(model.gibbs_oracle(init, *burn_in))
            }
            (Instance::Logistic { model, .. }, OracleConfig::Gibbs { warm, burn_in }) => Box::new(model.oracle(*warm, *burn_in)),
            (_, other) => return Err(Error::invalid(format!("oracle {other:?} does not fit this problem"))),
        };
        Ok(oracle)
    }

    fn trace_with(&self, seed: u64, n_iters: usize) -> Result<RunTrace> {
        let config = &self.config;
        let mut oracle = self.make_oracle()?;
        let evaluator = |t: &ParamVector| self.objective(t);
        let mut opts = RunOptions::default().evaluator(&evaluator);
        if let Some(obj) = self.smooth() {
            opts = opts.exact(obj);
        }
        let tseq = match config.algorithm {
            Algorithm::Fista => config.schedules.tseq.unwrap_or(TSequence::Recursive),
            _ => TSequence::Unit,
        };
        run_perturbed_fista_with(
            &mut *oracle,
            &self.penalty,
            &self.theta0,
            &config.schedules.steps,
            &config.schedules.batches,
            tseq,
            n_iters,
            seed,
            &opts,
        )
    }

    /// Runs replication `replication` with seed drawn from
    /// `substream(config.seed, replication)`.
    pub fn run(&self, replication: usize) -> Result<RunRecord> {
        let seed = replication_seed(self.config.seed, replication);
        self.run_seeded(replication, seed)
    }

    pub fn run_seeded(&self, replication: usize, seed: u64) -> Result<RunRecord> {
        let start = Instant::now();
        let result = self.trace_with(seed, self.config.n_iters).and_then(|trace| {
            let metrics = compute_metrics(self, &trace)?;
            Ok((trace, metrics))
        });
        let (trace, metrics) = result.map_err(|e| Error::Experiment {
            context: format!("{} (replication {replication}, seed {seed})", context(&self.config)),
            source: Box::new(e),
        })?;
        Ok(RunRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            config: self.config.clone(),
            config_hash: self.config.hash(),
            replication,
            seed,
            f_star: self.f_star,
            reference: self.reference.clone().map(|r| r.as_slice().to_vec()),
            metrics,
            trace,
            provenance: Provenance::now(start),
        })
    }
}

fn context(config: &ExperimentConfig) -> String {
    let name = if config.name.is_empty() { "unnamed" } else { &config.name };
    format!("{name} [{}]", &config.hash()[..12])
}

pub fn replication_seed(seed: u64, replication: usize) -> u64 {
    crate::substream(seed, replication as u64).next_u64()
}

/// Wall-clock facts, kept apart from the reproducible payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_version: String,
    pub created_unix: u64,
    pub elapsed_seconds: f64,
    pub threads: usize,
}

impl Provenance {
    fn now(start: Instant) -> Self {
        Provenance {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            elapsed_seconds: start.elapsed().as_secs_f64(),
            threads: super::thread_count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub replication: usize,
    pub seed: u64,
    pub f_star: Option<f64>,
    pub reference: Option<Vec<f64>>,
    pub metrics: MetricSeries,
    pub trace: RunTrace,
    pub provenance: Provenance,
}

#[derive(Serialize)]
struct Payload<'a> {
    schema_version: u32,
    config: &'a ExperimentConfig,
    config_hash: &'a str,
    replication: usize,
    seed: u64,
    f_star: Option<f64>,
    reference: &'a Option<Vec<f64>>,
    metrics: &'a MetricSeries,
    trace: &'a RunTrace,
}

impl RunRecord {
    /// JSON of everything except the provenance block; identical bytes for
    /// identical `(config, seed)`.
    pub fn payload_json(&self) -> Result<String> {
        let payload = Payload {
            schema_version: self.schema_version,
            config: &self.config,
            config_hash: &self.config_hash,
            replication: self.replication,
            seed: self.seed,
            f_star: self.f_star,
            reference: &self.reference,
            metrics: &self.metrics,
            trace: &self.trace,
        };
        Ok(serde_json::to_string(&payload)?)
    }
}

/// Prepares the instance and runs replication 0.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    Prepared::new(config)?.run(0)
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::harness::config::{Averaging, MetricsConfig, Schedules};
    use crate::models::LassoSpec;
    use crate::solvers::{BatchSchedule, StepSchedule, WeightSchedule};

    pub(crate) fn lasso_config(algorithm: Algorithm, oracle: OracleConfig) -> ExperimentConfig {
        ExperimentConfig {
            name: "lasso".into(),
            problem: ProblemConfig::LassoLs {
                spec: LassoSpec::default(),
                lambda: 1.0,
                alpha: 1.0,
                oracle,
            },
            algorithm,
            schedules: Schedules {
                steps: StepSchedule::constant(0.01),
                batches: BatchSchedule::constant(4),
                tseq: None,
                averaging: None,
            },
            n_iters: 40,
            replications: 1,
            seed: 5,
            output: None,
            metrics: MetricsConfig::default(),
        }
    }

    pub(crate) fn small_averaged_lasso() -> ExperimentConfig {
        let mut config = lasso_config(Algorithm::AveragedPg, OracleConfig::Noisy { sd: 0.5 });
        config.schedules.averaging = Some(Averaging {
            weights: vec![WeightSchedule::uniform(), WeightSchedule { exponent_a: 1.0 }],
            start: 4,
        });
        config.metrics.reference = ReferenceConfig::FinalIterate;
        config
    }
}
