//! The numerical property suites: proximal operators against brute force,
//! firm nonexpansiveness, the majorization and descent inequalities, the
//! perturbation bounds, Polya-Gamma moments and the model constants.

fn main() -> stochprox::Result<()> {
    let quick = !std::env::args().any(|a| a == "--full");
    let outcomes = stochprox::validate::run_all(0, quick)?;
    for o in &outcomes {
        println!(
            "{} {:<40} worst {:.2e} (tol {:.0e}) {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.worst,
            o.tolerance,
            o.detail
        );
    }
    Ok(())
}
