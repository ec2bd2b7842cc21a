//! `P_x(t < τ)/x` for Brownian motion on the half-line against `E_{1/x}(Z_t)`
//! for its dual.

use qsdlab::analysis::{duality_crosscheck, DualityOptions};
use qsdlab::measure::suite;
use qsdlab::simulator::McOptions;

fn main() -> qsdlab::Result<()> {
    let paths: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let r = duality_crosscheck(
        &suite::named("bm")?,
        &[0.5, 1.0, 2.0, 10.0],
        1.0,
        &McOptions::new(paths, 9),
        &DualityOptions::default(),
    )?;
    println!("x,lhs,lhs_se,rhs,rhs_se,z");
    for row in &r.rows {
        println!(
            "{},{:.5},{:.5},{:.5},{:.5},{:.2}",
            row.x, row.lhs, row.lhs_se, row.rhs, row.rhs_se, row.z_score
        );
    }
    Ok(())
}
