//! Independent replications and their per-iteration summaries.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::rates::quantile_sorted;
use super::run::{replication_seed, Prepared, RunRecord, RECORD_SCHEMA_VERSION};
use crate::error::{Error, Result};

pub const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Pointwise summary of one metric across replications.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub mean: Vec<Option<f64>>,
    /// One vector per entry of [`QUANTILES`].
    pub quantiles: Vec<Vec<Option<f64>>>,
    /// Replications with a value at each iteration.
    pub count: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub schema_version: u32,
    pub config_hash: String,
    pub replications: usize,
    pub successes: usize,
    pub failures: Vec<ReplicationFailure>,
    pub quantile_levels: Vec<f64>,
    pub iteration: Vec<usize>,
    pub series: BTreeMap<String, SeriesSummary>,
}

pub struct Replicated {
    pub records: Vec<RunRecord>,
    pub aggregate: Aggregate,
}

/// Worker threads: `STOCHPROX_THREADS` when set to a positive integer, else
/// the available parallelism.
pub fn thread_count() -> usize {
    std::env::var("STOCHPROX_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub(crate) fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Summary of whatever records are given. The result does not depend on
/// their order.
pub fn aggregate(config_hash: &str, records: &[RunRecord], failures: Vec<ReplicationFailure>) -> Result<Aggregate> {
    let first = records
        .first()
        .ok_or_else(|| Error::Numerical("every replication failed".into()))?;
    let len = first.metrics.len();
    let mut names: Vec<&String> = first.metrics.series.keys().collect();
    names.retain(|name| records.iter().all(|r| r.metrics.series.contains_key(*name)));
    let mut series = BTreeMap::new();
    for name in names {
        let mut summary = SeriesSummary {
            quantiles: vec![Vec::with_capacity(len); QUANTILES.len()],
            ..Default::default()
        };
        for i in 0..len {
            let mut values: Vec<f64> = records
                .iter()
                .filter_map(|r| r.metrics.series[name].get(i).copied().flatten())
                .collect();
            values.sort_by(f64::total_cmp);
            summary.count.push(values.len());
            if values.is_empty() {
                summary.mean.push(None);
                summary.quantiles.iter_mut().for_each(|q| q.push(None));
            } else {
                summary.mean.push(Some(values.iter().sum::<f64>() / values.len() as f64));
                for (q, level) in summary.quantiles.iter_mut().zip(QUANTILES) {
                    q.push(Some(quantile_sorted(&values, level)));
                }
            }
        }
        series.insert(name.clone(), summary);
    }
    Ok(Aggregate {
        schema_version: RECORD_SCHEMA_VERSION,
        config_hash: config_hash.to_string(),
        replications: records.len() + failures.len(),
        successes: records.len(),
        failures,
        quantile_levels: QUANTILES.to_vec(),
        iteration: first.metrics.iteration.clone(),
        series,
    })
}

/// Runs the given seeds in parallel on a prepared instance.
pub fn replicate_seeds(prepared: &Prepared, seeds: &[u64]) -> Result<Replicated> {
    let results: Vec<Result<RunRecord>> = with_pool(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(r, &seed)| prepared.run_seeded(r, seed))
            .collect()
    })?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, result) in results.into_iter().enumerate() {
        match result {
            Ok(record) => records.push(record),
            Err(e) => {
                log::warn!("replication {r} failed: {e}");
                failures.push(ReplicationFailure {
                    replication: r,
                    seed: seeds[r],
                    error: e.to_string(),
                });
            }
        }
    }
    let aggregate = aggregate(&prepared.config.hash(), &records, failures)?;
    Ok(Replicated { records, aggregate })
}

/// `replications` independent runs, seeded `substream(config.seed, r)`.
pub fn replicate_and_aggregate(config: &ExperimentConfig, replications: usize) -> Result<Replicated> {
    if replications < 2 {
        return Err(Error::invalid(format!("replication needs R >= 2, got {replications}")));
    }
    let prepared = Prepared::new(config)?;
    let seeds: Vec<u64> = (0..replications).map(|r| replication_seed(config.seed, r)).collect();
    replicate_seeds(&prepared, &seeds)
}
