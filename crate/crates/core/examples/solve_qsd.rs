//! Green-kernel power iteration on absorbed Brownian motion and on sticky
//! Brownian motion, against their closed forms.

use std::f64::consts::PI;

use qsdlab::measure::suite;
use qsdlab::solver::{build_grid, qsd_power_iteration, sticky_oracle, StickyOracle};

fn main() -> qsdlab::Result<()> {
    for n in [250, 1000, 4000] {
        let g = build_grid(&suite::named("bm01")?, n, None)?;
        let s = qsd_power_iteration(&g, 1e-12, 100_000)?;
        println!("bm01 n={n}: lambda0 {:.8} (pi^2/2 = {:.8}), {} iterations", s.lambda0, PI * PI / 2.0, s.iterations);
    }
    let o = sticky_oracle();
    for n in [251, 1001, 4001] {
        let g = build_grid(&StickyOracle::measure(), n, None)?;
        let s = qsd_power_iteration(&g, 1e-12, 100_000)?;
        let atom = g.partition().nearest(0.0);
        println!(
            "sticky n={n}: lambda0 {:.8} (oracle {:.8}), weight at 0 {:.6} (atom {:.6})",
            s.lambda0, o.lambda0, s.alpha.weights()[atom], o.atom_mass
        );
    }
    Ok(())
}
