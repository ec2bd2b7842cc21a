//! Recovering a speed measure from its QSD: a gamma law on the half-line,
//! and the round trip through the solver on a grid.

use qsdlab::measure::{measure_from_qsd, suite, Density, Interval, QsdInput};
use qsdlab::solver::{build_grid, qsd_power_iteration};

fn main() -> qsdlab::Result<()> {
    let m = measure_from_qsd(
        QsdInput::Density {
            support: Interval::half_line(0.0),
            density: Density::parse("x*exp(-x)")?,
            atoms: vec![],
        },
        1.0,
    )?;
    println!("x,dm/dx for alpha = x e^-x, lambda0 = 1");
    for x in [0.01, 0.1, 1.0, 5.0, 20.0] {
        println!("{x},{:.6e}", m.density_at(x));
    }

    let g = build_grid(&suite::named("exit15")?, 400, Some(1e5))?;
    let s = qsd_power_iteration(&g, 1e-14, 100_000)?;
    let back = measure_from_qsd(QsdInput::Discrete { grid: &g, alpha: &s.alpha }, s.lambda0)?;
    let worst = back
        .atoms()
        .iter()
        .zip(g.cell_mass())
        .map(|(a, w)| (a.mass / w - 1.0).abs())
        .fold(0.0, f64::max);
    println!("exit15 round trip: lambda0 {:.6}, max relative weight error {worst:.2e}", s.lambda0);
    Ok(())
}
