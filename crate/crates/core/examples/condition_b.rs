//! Condition (B) verdicts with the diagnostics behind them.

use qsdlab::criteria::check_condition_b;
use qsdlab::measure::suite;

fn main() -> qsdlab::Result<()> {
    let names: Vec<String> = std::env::args().skip(1).collect();
    let names = if names.is_empty() {
        ["exit15", "example1", "sticky-half", "bm", "log-borderline"].map(String::from).to_vec()
    } else {
        names
    };
    for name in names {
        let r = check_condition_b(&suite::named(&name)?)?;
        println!("{name}: {:?}", r.verdict);
        for c in &r.components {
            println!("  {:?} {:?} {:?}", c.criterion, c.verdict, c.diagnostics);
        }
    }
    Ok(())
}
