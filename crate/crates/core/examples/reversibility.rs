//! Symmetry of `∫ f P_t g dm` for sticky Brownian motion.

use qsdlab::analysis::{reversibility_check, ReversibilityOptions};
use qsdlab::measure::Interval;
use qsdlab::simulator::McOptions;
use qsdlab::solver::StickyOracle;

fn main() -> qsdlab::Result<()> {
    let m = StickyOracle::measure();
    let ropts = ReversibilityOptions { cells: 51, truncation: None };
    for (f, g) in [((-0.5, -0.1), (0.2, 0.6)), ((-0.2, 0.2), (0.5, 0.9))] {
        let r = reversibility_check(
            &m,
            Interval::new(f.0, f.1)?,
            Interval::new(g.0, g.1)?,
            0.5,
            &McOptions::new(50_000, 5),
            &ropts,
        )?;
        println!(
            "f on {f:?}, g on {g:?}: {:.5} +- {:.5} vs {:.5} +- {:.5}, z {:.2}",
            r.lhs, r.lhs_se, r.rhs, r.rhs_se, r.z_score
        );
    }
    Ok(())
}
