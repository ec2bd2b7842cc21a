//! Diffusion with upward jumps above level 1: the conditional law settles
//! between t = 1 and t = 2.

use std::sync::Arc;

use qsdlab::analysis::tv_distance;
use qsdlab::measure::suite;
use qsdlab::simulator::{conditional_series, ChainSpec, McOptions, PathModel};
use qsdlab::solver::{build_grid_with, GridOptions, Partition};

fn main() -> qsdlab::Result<()> {
    let rate: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let opts = GridOptions { allow_non_entrance: true, ..Default::default() };
    let g = build_grid_with(&suite::named("cubic")?, 200, Some(1e3), &opts)?;
    let model = PathModel::chain(ChainSpec::from_grid(&g)?).with_jumps(rate);
    let edges = vec![0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 10.0, 1e3];
    let points = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let bins = Arc::new(Partition::new(edges, points)?);
    let s = conditional_series(&model, 2.0, &[0.5, 1.0, 2.0], &bins, &McOptions::new(100_000, 12))?;
    for st in &s {
        println!("t = {}: {} survivors, mean position {:.4}", st.t, st.n_survived, st.mean_position);
    }
    println!("{} jumps over the run", s[0].diagnostics.jumps);
    println!("TV(t=1, t=2) = {:.4}", tv_distance(&s[1].distribution, &s[2].distribution)?);
    Ok(())
}
