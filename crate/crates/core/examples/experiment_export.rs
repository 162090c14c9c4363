//! An experiment defined in code, replicated in parallel and exported as
//! CSV and JSON. `STOCHPROX_THREADS` caps the worker count.

use stochprox::harness::{
    export, export_aggregate, fit_rate, replicate_and_aggregate, Algorithm, Averaging, ExperimentConfig, Format, MetricsConfig,
    OracleConfig, ProblemConfig, Schedules,
};
use stochprox::models::LassoSpec;
use stochprox::{BatchSchedule, Result, StepSchedule, WeightSchedule};

fn main() -> Result<()> {
    let config = ExperimentConfig {
        name: "noisy-lasso".into(),
        problem: ProblemConfig::LassoLs {
            spec: LassoSpec::default(),
            lambda: 0.5,
            alpha: 1.0,
            oracle: OracleConfig::Noisy { sd: 2.0 },
        },
        algorithm: Algorithm::AveragedPg,
        schedules: Schedules {
            steps: StepSchedule::power(0.01, 0.5),
            batches: BatchSchedule::power(1.0, 1.0),
            tseq: None,
            averaging: Some(Averaging {
                weights: vec![WeightSchedule::uniform(), WeightSchedule::new(1.0)?],
                start: 0,
            }),
        },
        n_iters: 300,
        replications: 8,
        seed: 2024,
        output: None,
        metrics: MetricsConfig::default(),
    };
    config.validate()?;
    println!("config hash {}", &config.hash()[..12]);

    let out = replicate_and_aggregate(&config, config.replications)?;
    let dir = std::env::temp_dir().join("stochprox-example");
    std::fs::create_dir_all(&dir)?;
    let first = &out.records[0];
    println!("wrote {}", export(first, Format::Json, &dir.join("replication0"))?.display());
    println!("wrote {}", export(first, Format::Csv, &dir.join("replication0"))?.display());
    println!("wrote {}", export_aggregate(&out.aggregate, Format::Csv, &dir.join("summary"))?.display());

    for series in ["gap", "avg[a=0].weighted_gap", "avg[a=1].weighted_gap"] {
        let fit = fit_rate(&first.metrics, series, None, 0)?;
        let s = &out.aggregate.series[series];
        let last = s.mean.len() - 1;
        println!(
            "{series:<24} slope {:>7.3}   final median {:.3e} (IQR {:.3e}..{:.3e})",
            fit.slope,
            s.quantiles[2][last].unwrap(),
            s.quantiles[1][last].unwrap(),
            s.quantiles[3][last].unwrap()
        );
    }
    Ok(())
}
