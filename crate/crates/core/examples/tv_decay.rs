//! Conditional law of Brownian motion on (0, 1) started near the edge,
//! converging in total variation to the QSD.

use std::sync::Arc;

use qsdlab::analysis::tv_decay_series;
use qsdlab::measure::suite;
use qsdlab::simulator::{ChainSpec, McOptions, PathModel};
use qsdlab::solver::{build_grid, qsd_power_iteration, Partition};

fn main() -> qsdlab::Result<()> {
    let m = suite::named("bm01")?;
    let alpha = qsd_power_iteration(&build_grid(&m, 2000, None)?, 1e-12, 100_000)?.alpha;
    let bins = Arc::new(Partition::uniform(0.0, 1.0, 2)?);
    let model = PathModel::chain(ChainSpec::from_grid(&build_grid(&m, 100, None)?)?);
    let times: Vec<f64> = (0..=8).map(|k| 0.1 + 0.05 * k as f64).collect();
    let s = tv_decay_series(&model, 0.1, &times, &alpha.rebin(&bins), &McOptions::new(200_000, 3))?;
    print!("{}", s.to_csv());
    let fit = s.fit((0.1, 0.35))?;
    eprintln!("rate {:.2} (3 pi^2/2 = 14.80), r^2 {:.3}", fit.rate, fit.r_squared);
    Ok(())
}
