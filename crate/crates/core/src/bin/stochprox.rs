use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stochprox::harness::{
    self, export, export_aggregate, rate_series, read_record_json, ExperimentConfig, Format, Preset,
};
use stochprox::solvers::PresetId;
use stochprox::{Error, Result};

/// Stochastic proximal gradient experiments.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one replication and export its record.
    Run(Common),
    /// Run several replications and export pointwise summaries.
    Replicate(Common),
    /// Fit rates for table rows (all rows unless --preset is given).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Cap on iterations per row.
        #[arg(long)]
        n_iters: Option<usize>,
    },
    /// Run the property suites.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ten times fewer cases.
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-export a JSON run record, e.g. to CSV.
    Export {
        /// Record written by `run --format json`.
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named run: table1.r1 … table2.b3, algo1, algo2, algo3, algoF1, algoF2, algoW.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Output stem; the extension follows --format.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: Format,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
            (None, Some(preset)) => preset.config()?,
            (None, None) => return Err(Error::InvalidArgument("give --config or --preset".into())),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(reps) = self.reps {
            config.replications = reps;
        }
        Ok(config)
    }

    fn stem(&self, config: &ExperimentConfig, default: &str) -> PathBuf {
        self.out
            .clone()
            .or_else(|| config.output.clone())
            .unwrap_or_else(|| PathBuf::from(if config.name.is_empty() { default } else { &config.name }))
    }
}

fn run(common: &Common) -> Result<()> {
    let config = common.load()?;
    let record = harness::run_experiment(&config)?;
    let path = export(&record, common.format, &common.stem(&config, "run"))?;
    let objective = record.metrics.get("objective")?.last().copied().flatten();
    println!(
        "{}: {} iterations, {} samples, final objective {}",
        config.name,
        config.n_iters,
        record.trace.total_samples(),
        objective.map_or("n/a".into(), |v| format!("{v:.6}"))
    );
    if let Ok(fit) = harness::fit_rate(&record.metrics, &rate_series(&config), None, config.seed) {
        println!("{} slope vs iteration {:.3} [{:.3}, {:.3}]", rate_series(&config), fit.slope, fit.ci.0, fit.ci.1);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn replicate(common: &Common) -> Result<()> {
    let config = common.load()?;
    let reps = config.replications.max(2);
    let out = harness::replicate_and_aggregate(&config, reps)?;
    let agg = &out.aggregate;
    let path = export_aggregate(agg, common.format, &common.stem(&config, "replicate"))?;
    println!("{}: {}/{} replications succeeded", config.name, agg.successes, agg.replications);
    for f in &agg.failures {
        println!("  replication {} (seed {}) failed: {}", f.replication, f.seed, f.error);
    }
    if let Some(s) = agg.series.get("objective") {
        if let (Some(Some(mean)), Some(Some(lo)), Some(Some(hi))) = (s.mean.last(), s.quantiles[0].last(), s.quantiles[4].last()) {
            println!("final objective mean {mean:.6}, 5-95% [{lo:.6}, {hi:.6}]");
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn sweep(common: &Common, n_iters: Option<usize>) -> Result<()> {
    let ids: Vec<PresetId> = match common.preset {
        Some(Preset::Table(id)) => vec![id],
        Some(other) => return Err(Error::InvalidArgument(format!("{} is not a table row", other.name()))),
        None => PresetId::all(),
    };
    let cells = harness::sweep(&ids, n_iters, common.seed.unwrap_or(0))?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |s| format!("{s:.3}"));
    println!("{:<14} {:>9} {:>11} {:>11}", "row", "predicted", "vs n", "vs samples");
    for c in &cells {
        println!(
            "{:<14} {:>9.3} {:>11} {:>11}{}",
            c.preset,
            -c.predicted_rate,
            fmt(c.slope_iteration),
            fmt(c.slope_samples),
            c.error.as_ref().map(|e| format!("  error: {e}")).unwrap_or_default()
        );
    }
    if let Some(stem) = &common.out {
        let path = match common.format {
            Format::Json => {
                let path = stem.with_extension("json");
                std::fs::write(&path, serde_json::to_string_pretty(&cells)?)?;
                path
            }
            Format::Csv => {
                let path = stem.with_extension("csv");
                let mut w = csv::Writer::from_path(&path)?;
                for c in &cells {
                    w.serialize(c)?;
                }
                w.flush()?;
                path
            }
        };
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn validate(seed: u64, quick: bool, out: Option<&Path>) -> Result<bool> {
    let outcomes = stochprox::validate::run_all(seed, quick)?;
    let mut ok = true;
    for o in &outcomes {
        ok &= o.passed;
        println!(
            "{} {:<45} worst {:.3e} (tol {:.1e}, {} cases, {:.2}s) {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.worst,
            o.tolerance,
            o.cases,
            o.elapsed_seconds,
            o.detail
        );
    }
    if let Some(path) = out {
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&outcomes)?)?;
    }
    Ok(ok)
}

fn export_record(input: &Path, format: Format, out: Option<&Path>) -> Result<()> {
    let record = read_record_json(input)?;
    let stem = out.map(Path::to_path_buf).unwrap_or_else(|| input.with_extension(""));
    let path = export(&record, format, &stem)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => run(c).map(|_| true),
        Command::Replicate(c) => replicate(c).map(|_| true),
        Command::Sweep { common, n_iters } => sweep(common, *n_iters).map(|_| true),
        Command::Validate { seed, quick, out } => validate(*seed, *quick, out.as_deref()),
        Command::Export { input, format, out } => export_record(input, *format, out.as_deref()).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
