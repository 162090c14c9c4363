//! Averaged perturbed proximal gradient on a four-node Ising model with an
//! i.i.d. Monte Carlo oracle, against the run with exact gradients.

use stochprox::harness::{fit_rate, rate_series, run_experiment, Preset, XAxis};
use stochprox::Result;

fn main() -> Result<()> {
    let mut rows = Vec::new();
    for name in ["table1.r1", "table1.exact"] {
        let config = name.parse::<Preset>()?.config()?;
        let record = run_experiment(&config)?;
        let series = rate_series(&config);
        let fit = fit_rate(&record.metrics, &series, None, 0)?;
        println!("{name}: slope vs n {:.3} (95% CI {:.3}..{:.3}), {} samples", fit.slope, fit.ci.0, fit.ci.1, record.trace.total_samples());
        if record.trace.total_samples() > 0 {
            let by_samples = record.metrics.clone().with_axis(XAxis::CumulativeSamples);
            println!("  slope vs samples {:.3}", fit_rate(&by_samples, &series, None, 0)?.slope);
        }
        rows.push((series, record));
    }
    println!("\n{:>6} {:>14} {:>14}", "n", "mc wgap", "exact wgap");
    let gap = |i: usize, r: usize| {
        let (series, record) = &rows[r];
        record.metrics.get(series).ok().and_then(|s| s[i]).unwrap_or(f64::NAN)
    };
    for n in [10, 30, 100, 300, 1000] {
        println!("{n:>6} {:>14.4e} {:>14.4e}", gap(n - 1, 0), gap(n - 1, 1));
    }
    Ok(())
}
