//! Penalized Ising likelihood fitted by perturbed FISTA with a Gibbs-sampler
//! oracle. The model is small enough to enumerate, so the exact gradient is
//! available for the oracle diagnostics and the reference solution.

use stochprox::harness::IsingSpec;
use stochprox::oracles::{estimate_oracle_moments, GradientOracle, InitPolicy};
use stochprox::prox::{composite_value, kkt_residual};
use stochprox::solvers::{run_perturbed_fista, solve_reference};
use stochprox::{BatchSchedule, ParamVector, Result, SmoothObjective, StepSchedule, TSequence};

fn main() -> Result<()> {
    let (model, _) = IsingSpec::random(5, 500, 3).build()?;
    let d = model.dim();
    let pen = model.penalty(0.02, None)?;
    let gamma = 1.0 / model.variance_lipschitz_bound();
    let theta0 = ParamVector::zeros(d);
    let (theta_star, _) = solve_reference(&model, &pen, &theta0, gamma, 1e-10, 1_000_000)?;
    let f_star = composite_value(&model, &pen, &theta_star)?;

    let uniform = model.clone();
    let mut oracle = model.gibbs_oracle(InitPolicy::fresh(move |_, rng| Ok(uniform.uniform_config(rng))), 0);
    let exact = |t: &ParamVector| model.gradient(t);
    println!("Gibbs oracle at the minimizer, fresh uniform start");
    println!("{:>6} {:>12} {:>12}", "batch", "bias", "E|eta|^2");
    for m in [10, 40, 160, 640] {
        let mo = estimate_oracle_moments(&mut oracle, &exact, &theta_star, m, 300, 5)?;
        println!("{m:>6} {:>12.3e} {:>12.3e}", mo.bias_norm_estimate, mo.second_moment_estimate);
    }

    // t_n ~ n with constant γ and m_n ~ n^3: the accelerated rate survives
    // the noise.
    let steps = StepSchedule::constant(gamma);
    let batches = BatchSchedule::power(1.0, 3.0);
    oracle.reset();
    let n = 60;
    let trace = run_perturbed_fista(&mut oracle, &pen, &theta0, &steps, &batches, TSequence::Recursive, n, 11)?;
    println!("\n{:>4} {:>12} {:>10} {:>12}", "n", "gap", "kkt", "samples");
    for k in [1, 5, 10, 20, 40, 60] {
        let t = &trace.iterates[k];
        println!(
            "{k:>4} {:>12.3e} {:>10.2e} {:>12}",
            composite_value(&model, &pen, t)? - f_star,
            kkt_residual(&model, &pen, t, gamma)?,
            trace.cumulative_samples[k]
        );
    }
    Ok(())
}
