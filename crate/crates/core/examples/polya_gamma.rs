//! Polya-Gamma draws by the truncated series: sample moments against the
//! closed-form mean, and a histogram against the density.

use stochprox::models::polya_gamma::{pg_density, polya_gamma_mean, sample_polya_gamma};
use stochprox::Result;

fn main() -> Result<()> {
    let mut rng = stochprox::stream(42);
    let draws = 200_000;
    println!("{:>6} {:>12} {:>12} {:>10}", "c", "mean", "sample", "rel err");
    for c in [0.0, 0.5, 1.0, 2.5, 5.0, 10.0] {
        let mut sum = 0.0;
        for _ in 0..draws {
            sum += sample_polya_gamma(c, &mut rng)?;
        }
        let sample = sum / draws as f64;
        let mean = polya_gamma_mean(c);
        println!("{c:>6} {mean:>12.6} {sample:>12.6} {:>10.2e}", (sample - mean).abs() / mean);
    }

    let c = 1.5;
    let width = 0.05;
    let mut counts = [0usize; 12];
    for _ in 0..draws {
        let w = sample_polya_gamma(c, &mut rng)?;
        let k = (w / width) as usize;
        if k < counts.len() {
            counts[k] += 1;
        }
    }
    println!("\nPG(1, {c}) histogram against the density");
    for (k, n) in counts.iter().enumerate() {
        let mid = (k as f64 + 0.5) * width;
        let empirical = *n as f64 / (draws as f64 * width);
        let bar = "#".repeat((empirical * 10.0) as usize);
        println!("{mid:5.3} {empirical:7.3} {:7.3} {bar}", pg_density(mid, c));
    }
    Ok(())
}
