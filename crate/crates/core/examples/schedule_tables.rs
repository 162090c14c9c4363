//! The admissible schedule regions of the averaged and accelerated rate
//! tables, with the representative schedules the presets run.

use stochprox::solvers::{schedule_preset, PresetId};
use stochprox::Result;

fn main() -> Result<()> {
    println!(
        "{:<13} {:>6} {:>9} {:>10} {:>22} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "row", "biased", "c", "a", "b", "c used", "a used", "b used", "rate", "cost"
    );
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    for id in PresetId::all() {
        let row = schedule_preset(id);
        let s = row.representative(0.1, 1.0)?;
        let cost = s.b.and_then(|b| row.cost_exponent(b, s.c));
        println!(
            "{:<13} {:>6} {:>9} {:>10} {:>22} {:>6.2} {:>6} {:>6} {:>6.3} {:>6}",
            id.name(),
            row.biased,
            row.c.to_string(),
            row.a.map_or("-".into(), |a| a.to_string()),
            row.b.map_or("-".into(), |b| b.to_string()),
            s.c,
            opt(s.a),
            opt(s.b),
            row.rate_exponent(s.c),
            opt(cost),
        );
    }
    println!("\nrate is r in F - F* = O(n^-r); cost is e in samples = O(delta^-e) for accuracy delta");

    // A row evaluated away from its representative point.
    let row = schedule_preset("table1.r2".parse()?);
    for c in [0.0, 0.25, 0.5, 0.75] {
        match row.instantiate(c, 0.1, 1.0) {
            Ok(s) => println!("table1.r2 at c = {c}: a = {}, b = {}, rate {:.3}", opt(s.a), opt(s.b), row.rate_exponent(c)),
            Err(e) => println!("table1.r2 at c = {c}: {e}"),
        }
    }
    Ok(())
}
