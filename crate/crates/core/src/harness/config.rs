//! Experiment configuration, serialized as JSON.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LassoSpec, MrfModel, SyntheticSpec};
use crate::prox::ParamVector;
use crate::models::mrf::{packed_dim, packed_index};
use crate::solvers::{validate_t_gamma, BatchSchedule, PresetId, StepSchedule, TCheck, TSequence, WeightSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Exact proximal gradient (needs an exact objective).
    Pg,
    PerturbedPg,
    /// Perturbed FISTA; deterministic when the oracle is exact.
    Fista,
    /// Perturbed proximal gradient followed by weighted averaging.
    AveragedPg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OracleConfig {
    Exact,
    /// Exact gradient plus `N(0, sd²/m)` noise.
    Noisy { sd: f64 },
    /// Uniform draws of the least-squares components.
    Minibatch,
    /// Exact draws from the model (enumerable MRFs).
    Iid,
    /// Gibbs chain; `warm` continues the chain across iterations.
    Gibbs { warm: bool, burn_in: usize },
}

/// Ising instance on `{−1, 1}^p`. The data are either `n_data` exact draws
/// from `theta`, or (when `n_data` is absent) the population moments at
/// `theta`, in which case `theta` is the unpenalized minimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingSpec {
    pub p: usize,
    /// Packed upper triangle, entry `(k, j)` with `k ≤ j` at `j(j+1)/2 + k`.
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_data: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl IsingSpec {
    /// Four nodes with couplings spread over an order of magnitude, so that
    /// the curvature at the minimizer ranges from about 4 down to 4e−7.
    pub fn population4() -> Self {
        let p = 4;
        let mut theta = vec![0.0; packed_dim(p)];
        let fields = [0.1, -0.2, 0.3, 0.0];
        for (j, h) in fields.iter().enumerate() {
            theta[packed_index(j, j)] = *h;
        }
        for (k, j, v) in [(0, 1, 4.0), (0, 2, 3.0), (1, 2, 2.2), (0, 3, 1.5), (1, 3, 1.0), (2, 3, 0.5)] {
            theta[packed_index(k, j)] = v;
        }
        IsingSpec {
            p,
            theta,
            n_data: None,
            seed: 0,
        }
    }

    /// The model, plus the known minimizer for a population instance.
    pub fn build(&self) -> Result<(MrfModel, Option<ParamVector>)> {
        let theta = ParamVector::from_slice(&self.theta);
        let mut model = MrfModel::ising(self.p, Vec::new())?;
        match self.n_data {
            None => {
                model.set_population(&theta)?;
                Ok((model, Some(theta)))
            }
            Some(n) => {
                let mut rng = crate::substream(self.seed, 11);
                let data = model.sample_exact(&theta, n, &mut rng)?;
                model.set_data(data)?;
                Ok((model, None))
            }
        }
    }

    /// Moderate random parameter: fields uniform on `[−0.3, 0.3]`, half the
    /// couplings zero and the rest uniform on `[−0.6, 0.6]`; `n_data` draws.
    pub fn random(p: usize, n_data: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = crate::substream(seed, 7);
        let mut theta = vec![0.0; packed_dim(p)];
        for j in 0..p {
            theta[packed_index(j, j)] = rng.random_range(-0.3..=0.3);
            for k in 0..j {
                if rng.random::<bool>() {
                    theta[packed_index(k, j)] = rng.random_range(-0.6..=0.6);
                }
            }
        }
        IsingSpec {
            p,
            theta,
            n_data: Some(n_data),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProblemConfig {
    LassoLs {
        spec: LassoSpec,
        lambda: f64,
        #[serde(default = "one")]
        alpha: f64,
        oracle: OracleConfig,
    },
    Ising {
        instance: IsingSpec,
        #[serde(default)]
        lambda: f64,
        oracle: OracleConfig,
    },
    LogisticRe {
        spec: SyntheticSpec,
        oracle: OracleConfig,
    },
}

fn one() -> f64 {
    1.0
}

/// Weighted averages `θ̄_n` of the iterates, one per weight sequence, over
/// iterations after `start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averaging {
    pub weights: Vec<WeightSchedule>,
    #[serde(default)]
    pub start: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedules {
    pub steps: StepSchedule,
    #[serde(default = "unit_batches")]
    pub batches: BatchSchedule,
    /// FISTA momentum; defaults to the recursive sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tseq: Option<TSequence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub averaging: Option<Averaging>,
}

fn unit_batches() -> BatchSchedule {
    BatchSchedule::constant(1)
}

/// Point that relative error and support recovery are measured against.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReferenceConfig {
    /// The accurate minimizer when the objective is exact, else the final
    /// iterate of each run.
    #[default]
    Auto,
    FinalIterate,
    Fixed { values: Vec<f64> },
    /// Final iterate of one longer run with the same settings, computed once
    /// and shared by all replications.
    LongRun { n_iters: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    #[serde(default)]
    pub reference: ReferenceConfig,
    /// Prior draws for the Monte Carlo log-likelihood (random-effects model).
    #[serde(default = "default_panel")]
    pub loglik_panel: usize,
    #[serde(default)]
    pub panel_seed: u64,
}

fn default_panel() -> usize {
    crate::models::logistic::DEFAULT_PANEL_SIZE
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            reference: ReferenceConfig::Auto,
            loglik_panel: default_panel(),
            panel_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub problem: ProblemConfig,
    pub algorithm: Algorithm,
    pub schedules: Schedules,
    pub n_iters: usize,
    #[serde(default = "one_rep")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn one_rep() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks that do not need the problem instance, including the
    /// stepsize / momentum compatibility for FISTA.
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 {
            return Err(Error::invalid("n_iters must be >= 1"));
        }
        self.schedules.steps.validate()?;
        self.schedules.batches.validate()?;
        if self.algorithm == Algorithm::Fista {
            let tseq = self.schedules.tseq.unwrap_or(TSequence::Recursive);
            if let TCheck::Violation { index } = validate_t_gamma(&self.schedules.steps, tseq, self.n_iters) {
                return Err(Error::invalid(format!(
                    "stepsize and t sequence are incompatible: condition fails at n = {index}"
                )));
            }
        }
        match (&self.algorithm, &self.schedules.averaging) {
            (Algorithm::AveragedPg, None) => return Err(Error::invalid("averaged_pg needs an averaging block")),
            (Algorithm::AveragedPg, Some(a)) => {
                if a.weights.is_empty() {
                    return Err(Error::invalid("averaging needs at least one weight sequence"));
                }
                if a.start >= self.n_iters {
                    return Err(Error::invalid("averaging start must be below n_iters"));
                }
                for w in &a.weights {
                    WeightSchedule::new(w.exponent_a)?;
                }
            }
            _ => {}
        }
        let oracle = match &self.problem {
            ProblemConfig::LassoLs { oracle, .. } => {
                if !matches!(oracle, OracleConfig::Exact | OracleConfig::Noisy { .. } | OracleConfig::Minibatch) {
                    return Err(Error::invalid("lasso_ls supports the exact, noisy and minibatch oracles"));
                }
                oracle
            }
            ProblemConfig::Ising { oracle, instance, .. } => {
                if !matches!(oracle, OracleConfig::Exact | OracleConfig::Iid | OracleConfig::Gibbs { .. }) {
                    return Err(Error::invalid("ising supports the exact, iid and gibbs oracles"));
                }
                if instance.theta.len() != packed_dim(instance.p) {
                    return Err(Error::invalid(format!(
                        "ising theta must have {} packed entries",
                        packed_dim(instance.p)
                    )));
                }
                oracle
            }
            ProblemConfig::LogisticRe { oracle, .. } => {
                if !matches!(oracle, OracleConfig::Gibbs { .. }) {
                    return Err(Error::invalid("logistic_re supports the gibbs oracle only"));
                }
                oracle
            }
        };
        if self.algorithm == Algorithm::Pg && *oracle != OracleConfig::Exact {
            return Err(Error::invalid("pg runs on the exact gradient; use perturbed_pg for other oracles"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Named runs: the rate-table rows on the four-node population Ising model
/// with exact draws, and the random-effects runs at desk scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Table(PresetId),
    Algo1,
    Algo2,
    Algo3,
    AlgoF1,
    AlgoF2,
    AlgoW,
}

impl Preset {
    pub fn all() -> Vec<Preset> {
        let mut out: Vec<Preset> = PresetId::all().into_iter().map(Preset::Table).collect();
        out.extend([Preset::Algo1, Preset::Algo2, Preset::Algo3, Preset::AlgoF1, Preset::AlgoF2, Preset::AlgoW]);
        out
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Table(id) => id.name(),
            Preset::Algo1 => "algo1",
            Preset::Algo2 => "algo2",
            Preset::Algo3 => "algo3",
            Preset::AlgoF1 => "algoF1",
            Preset::AlgoF2 => "algoF2",
            Preset::AlgoW => "algoW",
        }
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        match self {
            Preset::Table(id) => table_config(*id),
            _ => Ok(logistic_config(*self)),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::all()
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown preset `{s}`")))
    }
}

/// Stepsize for the Ising presets: `1/L` with `L = 10`, the trace bound on
/// the covariance Hessian for four nodes.
pub const ISING_GAMMA: f64 = 0.1;

fn table_config(id: PresetId) -> Result<ExperimentConfig> {
    let row = crate::solvers::schedule_preset(id);
    let sched = row.representative(ISING_GAMMA, 1.0)?;
    let (algorithm, n_iters) = match (id, row.b) {
        (PresetId::Table1(_), None) => (Algorithm::AveragedPg, 1000),
        (PresetId::Table1(_), Some(_)) => (Algorithm::AveragedPg, 1000),
        (PresetId::Table2(_), None) => (Algorithm::Fista, 200),
        // b > 3 draws Σ n^b samples; 200 iterations keep that near 7e8.
        (PresetId::Table2(_), Some(_)) => (Algorithm::Fista, 200),
    };
    let oracle = if row.b.is_some() {
        OracleConfig::Iid
    } else {
        OracleConfig::Exact
    };
    let averaging = sched.weights.map(|w| Averaging {
        weights: vec![w],
        start: 0,
    });
    Ok(ExperimentConfig {
        name: id.name().to_string(),
        problem: ProblemConfig::Ising {
            instance: IsingSpec::population4(),
            lambda: 0.0,
            oracle,
        },
        algorithm,
        schedules: Schedules {
            steps: sched.steps,
            batches: sched.batches,
            tseq: sched.tseq,
            averaging,
        },
        n_iters,
        replications: 1,
        seed: 0,
        output: None,
        metrics: MetricsConfig::default(),
    })
}

fn logistic_config(preset: Preset) -> ExperimentConfig {
    use crate::solvers::Rounding;
    let spec = SyntheticSpec::desk();
    let (algorithm, steps, batches) = match preset {
        Preset::Algo1 | Preset::AlgoW => (Algorithm::PerturbedPg, StepSchedule::constant(0.005), BatchSchedule::power(1.0, 1.0).with_offset(200)),
        Preset::Algo2 => (Algorithm::PerturbedPg, StepSchedule::constant(0.001), BatchSchedule::power(1.0, 1.0).with_offset(200)),
        Preset::Algo3 => (
            Algorithm::PerturbedPg,
            StepSchedule::power(0.05, 0.5),
            BatchSchedule::power(1.0, 0.5).with_offset(270).with_rounding(Rounding::Ceil),
        ),
        Preset::AlgoF1 => (
            Algorithm::Fista,
            StepSchedule::constant(0.001),
            BatchSchedule::power(1.0 / 6000.0, 3.1).with_offset(45).with_rounding(Rounding::Ceil),
        ),
        Preset::AlgoF2 => (
            Algorithm::Fista,
            StepSchedule::power(0.1, 1.0).with_cap(0.005),
            BatchSchedule::power(0.01, 2.1).with_offset(155).with_rounding(Rounding::Ceil),
        ),
        Preset::Table(_) => unreachable!("table presets are built separately"),
    };
    let (algorithm, averaging) = if preset == Preset::AlgoW {
        let weights = [-0.1, 0.0, 0.5].map(|a| WeightSchedule { exponent_a: a }).to_vec();
        (Algorithm::AveragedPg, Some(Averaging { weights, start: 35 }))
    } else {
        (algorithm, None)
    };
    ExperimentConfig {
        name: preset.name().to_string(),
        problem: ProblemConfig::LogisticRe {
            spec,
            oracle: OracleConfig::Gibbs { warm: true, burn_in: 0 },
        },
        algorithm,
        schedules: Schedules {
            steps,
            batches,
            tseq: (algorithm == Algorithm::Fista).then_some(TSequence::Recursive),
            averaging,
        },
        n_iters: 150,
        replications: 1,
        seed: 0,
        output: None,
        metrics: MetricsConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_round_trip() {
        for preset in Preset::all() {
            let config = preset.config().unwrap();
            config.validate().unwrap();
            let back = ExperimentConfig::from_json(&config.to_json().unwrap()).unwrap();
            assert_eq!(back, config);
            assert_eq!(back.hash(), config.hash());
            assert_eq!(preset.name().parse::<Preset>().unwrap(), preset);
        }
    }

    #[test]
    fn literal_logistic_schedules() {
        let f1 = Preset::AlgoF1.config().unwrap();
        assert_eq!(f1.schedules.batches.size(10), 45 + (10f64.powf(3.1) / 6000.0).ceil() as usize);
        let f2 = Preset::AlgoF2.config().unwrap();
        assert_eq!(f2.schedules.steps.gamma(10), 0.005f64.min(0.01));
        assert_eq!(f2.schedules.steps.gamma(100), 0.001);
        let a3 = Preset::Algo3.config().unwrap();
        assert_eq!(a3.schedules.batches.size(10), 270 + 4);
        assert_eq!(Preset::Algo1.config().unwrap().schedules.batches.size(7), 207);
    }

    #[test]
    fn incompatible_fista_rejected() {
        let mut config = Preset::Table(PresetId::Table2(crate::solvers::Table2Row::NoBias1)).config().unwrap();
        config.validate().unwrap();
        // t_1(t_1 − 1) > t_0² for this power sequence under a constant step.
        config.schedules.steps = StepSchedule::constant(0.1);
        config.schedules.tseq = Some(TSequence::Power { beta: 0.9, n0: 1.0 });
        assert!(config.validate().is_err());
        assert_ne!(config.hash(), Preset::Algo1.config().unwrap().hash());
    }
}
