//! Boundary classification for the built-in suite, and how it swaps under
//! the `1/x` dual.

use qsdlab::measure::{classify_boundary, dual_measure, suite, End};

fn main() -> qsdlab::Result<()> {
    println!("model,lower,upper,dual lower,dual upper");
    for model in suite::MODELS {
        let m = suite::named(model.name)?;
        let kind = |m: &qsdlab::measure::SpeedMeasure, end| {
            classify_boundary(m, end).map(|c| format!("{:?}", c.kind)).unwrap_or_else(|e| e.kind().to_string())
        };
        let (dl, du) = match dual_measure(&m) {
            Ok(d) => (kind(&d, End::Lower), kind(&d, End::Upper)),
            Err(_) => ("-".into(), "-".into()),
        };
        println!("{},{},{},{dl},{du}", model.name, kind(&m, End::Lower), kind(&m, End::Upper));
    }
    Ok(())
}
