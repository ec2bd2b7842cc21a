//! Strict local martingale plateau: `E_z(Z_1)` for the dual of Brownian
//! motion (speed measure `z^-4`), against `z (2Φ(1/z) - 1)`.

use qsdlab::measure::suite;
use qsdlab::simulator::{martingale_expectation_probe, McOptions, ProbeOptions};
use statrs::function::erf::erf;

fn main() -> qsdlab::Result<()> {
    let m = suite::named("dual-bm")?;
    let z = [1.0, 10.0, 100.0, 1000.0];
    let cells: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    let paths: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let probe = ProbeOptions { cells, ..Default::default() };
    let t0 = std::time::Instant::now();
    let pts = martingale_expectation_probe(&m, &z, 1.0, &McOptions::new(paths, 2024), &probe)?;
    println!("z,estimate,se,exact");
    for p in pts {
        // 2Φ(a) - 1 = erf(a/√2)
        let exact = p.z * erf(1.0 / (p.z * std::f64::consts::SQRT_2));
        println!("{},{:.5},{:.5},{:.5}", p.z, p.mean, p.se, exact);
    }
    eprintln!("{:.1?}", t0.elapsed());
    Ok(())
}
