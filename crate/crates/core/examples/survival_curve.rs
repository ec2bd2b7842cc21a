//! Survival of the birth–death chain for Brownian motion on (0, 1) and the
//! absorption rate read off its decay.

use qsdlab::analysis::lambda0_from_survival;
use qsdlab::measure::suite;
use qsdlab::simulator::{survival_curve, ChainSpec, McOptions, PathModel};
use qsdlab::solver::build_grid;

fn main() -> qsdlab::Result<()> {
    let paths: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let g = build_grid(&suite::named("bm01")?, 64, None)?;
    let model = PathModel::chain(ChainSpec::from_grid(&g)?);
    let times: Vec<f64> = (1..=16).map(|k| 0.05 * k as f64).collect();
    let c = survival_curve(&model, 0.5, &times, &McOptions::new(paths, 1))?;
    print!("{}", c.to_csv());
    let fit = lambda0_from_survival(&c, (0.3, 0.8))?;
    eprintln!("rate {:.4} (pi^2/2 = 4.9348), r^2 {:.4}", fit.rate, fit.r_squared);
    Ok(())
}
