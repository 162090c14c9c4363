//! Sparse logistic regression with random effects: the Gibbs oracle built on
//! Polya-Gamma augmentation, run under the stochastic proximal gradient
//! schedule with a warm-started chain.

use stochprox::harness::{run_experiment, Preset};
use stochprox::Result;

fn main() -> Result<()> {
    let mut config = Preset::Algo1.config()?;
    // Short run to keep the example quick; the preset runs 150 iterations.
    config.n_iters = 60;
    let record = run_experiment(&config)?;
    let m = &record.metrics;
    let get = |name: &str, i: usize| m.get(name).ok().and_then(|s| s[i]).unwrap_or(f64::NAN);
    println!("{:>4} {:>12} {:>8} {:>8} {:>9} {:>10}", "n", "objective", "sens", "prec", "rel err", "samples");
    for n in [1, 5, 10, 20, 40, 60] {
        let i = n - 1;
        println!(
            "{n:>4} {:>12.4} {:>8.3} {:>8.3} {:>9.4} {:>10}",
            get("objective", i),
            get("sensitivity", i),
            get("precision", i),
            get("relative_error", i),
            m.cumulative_samples[i]
        );
    }
    let last = record.trace.last_iterate();
    let p = last.dim() - 1;
    let nonzero = last.as_slice()[..p].iter().filter(|v| **v != 0.0).count();
    println!("final iterate: {nonzero} nonzero coefficients, sigma = {:.4}", last[p]);
    Ok(())
}
