//! Experiment runner: configs, runs, metrics, replication, rate fits and
//! export.
//!
//! ```no_run
//! use stochprox::harness::{run_experiment, fit_rate, Preset};
//!
//! let config: Preset = "table1.r1".parse()?;
//! let record = run_experiment(&config.config()?)?;
//! let fit = fit_rate(&record.metrics, "avg[a=1].weighted_gap", None, 0)?;
//! println!("slope {:.3}", fit.slope);
//! # Ok::<(), stochprox::Error>(())
//! ```

pub mod config;
pub mod export;
pub mod metrics;
pub mod rates;
pub mod replicate;
pub mod run;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    Algorithm, Averaging, ExperimentConfig, IsingSpec, MetricsConfig, OracleConfig, Preset, ProblemConfig, ReferenceConfig,
    Schedules,
};
pub use export::{export, export_aggregate, read_record_json, Format};
pub use metrics::{average_prefix, relative_error, sensitivity_precision, MetricSeries, XAxis};
pub use rates::{default_window, fit_log_log, fit_rate, fit_rate_log_spaced, RateFit};
pub use replicate::{aggregate, replicate_and_aggregate, replicate_seeds, thread_count, Aggregate, Replicated, SeriesSummary};
pub use run::{run_experiment, Prepared, Provenance, RunRecord};

use crate::error::Result;
use crate::solvers::PresetId;

/// Name of the series whose slope a table row predicts: the weighted gap
/// of the first average for averaged runs, the raw gap otherwise.
pub fn rate_series(config: &ExperimentConfig) -> String {
    match (&config.algorithm, &config.schedules.averaging) {
        (Algorithm::AveragedPg, Some(avg)) => format!("{}weighted_gap", average_prefix(avg.weights[0].exponent_a)),
        _ => "gap".to_string(),
    }
}

/// One cell of a sweep over table rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub preset: String,
    /// Predicted exponent `r` of the rate `n^{−r}`.
    pub predicted_rate: f64,
    pub slope_iteration: Option<f64>,
    pub slope_samples: Option<f64>,
    pub error: Option<String>,
}

/// Runs each table row once (seeded by `seed`) with at most `n_iters`
/// iterations, and fits the rate series against iterations and samples.
pub fn sweep(ids: &[PresetId], n_iters: Option<usize>, seed: u64) -> Result<Vec<SweepCell>> {
    replicate::with_pool(|| {
        ids.par_iter()
            .map(|&id| {
                let row = crate::solvers::schedule_preset(id);
                let predicted_rate = row.rate_exponent(row.c.representative(0.0, 0.0));
                let result = (|| -> Result<(Option<f64>, Option<f64>)> {
                    let mut config = Preset::Table(id).config()?;
                    config.seed = seed;
                    if let Some(n) = n_iters {
                        config.n_iters = config.n_iters.min(n);
                    }
                    let record = run_experiment(&config)?;
                    let name = rate_series(&config);
                    let it = fit_rate(&record.metrics, &name, None, seed).ok().map(|f| f.slope);
                    let metrics = record.metrics.clone().with_axis(XAxis::CumulativeSamples);
                    let sa = fit_rate(&metrics, &name, None, seed).ok().map(|f| f.slope);
                    Ok((it, sa))
                })();
                match result {
                    Ok((slope_iteration, slope_samples)) => SweepCell {
                        preset: id.name().into(),
                        predicted_rate,
                        slope_iteration,
                        slope_samples,
                        error: None,
                    },
                    Err(e) => SweepCell {
                        preset: id.name().into(),
                        predicted_rate,
                        slope_iteration: None,
                        slope_samples: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    })
}
