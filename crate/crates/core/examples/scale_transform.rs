//! Natural-scale form of Brownian motion with constant drift toward 0 on
//! the half-line, exported as `(y, s(y))` pairs.

use qsdlab::expr::Expr;
use qsdlab::measure::{classify_boundary, scale_transform, End, Interval, ScaleOptions};

fn main() -> qsdlab::Result<()> {
    let sigma = Expr::parse("1")?;
    let mu = Expr::parse("-1")?;
    let (s, m) = scale_transform(&sigma, &mu, Interval::half_line(0.0), 0.0, &ScaleOptions::default())?;
    // s(y) = (e^{2y} - 1)/2
    for y in [0.1, 1.0, 3.0] {
        println!("s({y}) = {:.10} (exact {:.10})", s.eval(y), ((2.0 * y).exp() - 1.0) / 2.0);
    }
    println!("natural-scale support {}", m.support());
    println!(
        "lower {:?}, upper {:?}",
        classify_boundary(&m, End::Lower)?.kind,
        classify_boundary(&m, End::Upper)?.kind
    );
    let csv = s.to_csv();
    println!("{} knots, first rows:", s.len());
    for line in csv.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
