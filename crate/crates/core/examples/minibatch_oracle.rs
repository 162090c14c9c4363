//! Bias and variance of a minibatch oracle as the batch grows, then a
//! perturbed proximal gradient run with increasing batches.

use stochprox::models::{generate_lasso, LassoSpec};
use stochprox::oracles::{estimate_oracle_moments, MinibatchOracle};
use stochprox::prox::composite_value;
use stochprox::solvers::{run_perturbed_pg, solve_reference};
use stochprox::{BatchSchedule, ElasticNetPenalty, ParamVector, Penalty, Result, SmoothObjective, StepSchedule};

fn main() -> Result<()> {
    let inst = generate_lasso(&LassoSpec { n_obs: 200, ..LassoSpec::default() })?;
    let f = &inst.objective;
    let d = f.dim();
    let exact = |t: &ParamVector| f.gradient(t);
    let mut oracle = MinibatchOracle::new(d, f.component_gradients())?;

    // The oracle is unbiased, so the bias column is pure estimation noise.
    println!("{:>6} {:>20} {:>12}", "batch", "bias (se)", "E|eta|^2");
    for m in [1, 4, 16, 64, 256] {
        let mo = estimate_oracle_moments(&mut oracle, &exact, &inst.theta_true, m, 400, 1)?;
        let bias = format!("{:.2e} ({:.2e})", mo.bias_norm_estimate, mo.bias_norm_se);
        println!("{m:>6} {bias:>20} {:>12.3e}", mo.second_moment_estimate);
    }

    let pen = Penalty::ElasticNet(ElasticNetPenalty::lasso(d, 0.05)?);
    let theta0 = ParamVector::zeros(d);
    let (theta_star, _) = solve_reference(f, &pen, &theta0, 1.0 / f.lipschitz().unwrap(), 1e-12, 1_000_000)?;
    let f_star = composite_value(f, &pen, &theta_star)?;
    // A single component N·f_i has curvature N‖a_i‖², far above that of f;
    // a step past 2/(N‖a_i‖²) makes small batches diverge.
    let row_max = f.design().row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max);
    let steps = StepSchedule::constant(1.0 / (f.n_obs() as f64 * row_max));
    for (label, batches) in [("m_n = 4", BatchSchedule::constant(4)), ("m_n = n", BatchSchedule::power(1.0, 1.0))] {
        let trace = run_perturbed_pg(&mut oracle, &pen, &theta0, &steps, &batches, 300, 7)?;
        let gap = composite_value(f, &pen, trace.last_iterate())? - f_star;
        println!("{label}: final gap {gap:.3e} after {} samples", trace.total_samples());
    }
    Ok(())
}
