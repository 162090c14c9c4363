//! Exact proximal gradient against FISTA on a random lasso.

use stochprox::models::{generate_lasso, LassoSpec};
use stochprox::oracles::ExactOracle;
use stochprox::prox::composite_value;
use stochprox::solvers::{run_proximal_gradient, run_perturbed_fista, solve_reference};
use stochprox::{BatchSchedule, ElasticNetPenalty, ParamVector, Penalty, Result, SmoothObjective, StepSchedule, TSequence};

fn main() -> Result<()> {
    let inst = generate_lasso(&LassoSpec::default())?;
    let f = &inst.objective;
    let d = f.dim();
    let pen = Penalty::ElasticNet(ElasticNetPenalty::lasso(d, 0.5)?);
    let gamma = 1.0 / f.lipschitz().unwrap();
    let theta0 = ParamVector::zeros(d);
    let (theta_star, used) = solve_reference(f, &pen, &theta0, gamma, 1e-12, 1_000_000)?;
    let f_star = composite_value(f, &pen, &theta_star)?;
    println!("reference solved in {used} iterations, F* = {f_star:.10}");

    let steps = StepSchedule::constant(gamma);
    let n = 500;
    let pg = run_proximal_gradient(f, &pen, &theta0, &steps, n)?;
    let mut oracle = ExactOracle::new(f);
    let fista = run_perturbed_fista(&mut oracle, &pen, &theta0, &steps, &BatchSchedule::constant(1), TSequence::Recursive, n, 0)?;

    println!("{:>5} {:>12} {:>12}", "n", "PG gap", "FISTA gap");
    for k in [1, 2, 5, 10, 20, 50, 100, 200, 500] {
        let gp = composite_value(f, &pen, &pg.iterates[k])? - f_star;
        let gf = composite_value(f, &pen, &fista.iterates[k])? - f_star;
        println!("{k:>5} {gp:>12.3e} {gf:>12.3e}");
    }
    let support = |t: &ParamVector| t.iter().filter(|v| **v != 0.0).count();
    println!("support: true {}, reference {}", support(&inst.theta_true), support(&theta_star));
    Ok(())
}
