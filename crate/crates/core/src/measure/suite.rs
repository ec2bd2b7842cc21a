//! Named reference measures used by the examples, the CLI `--model` flag
//! and the test-suite.

use super::{Atom, Interval, SpeedMeasure};
use crate::error::{Error, Result};

/// Atoms `a_i = i^-2` of the accumulating-atom example, `i = 2..=EXAMPLE1_ATOMS`.
pub const EXAMPLE1_ATOMS: usize = 1_000_000;

pub struct Model {
    pub name: &'static str,
    pub about: &'static str,
    /// Suggested truncation radius for half-line grids.
    pub truncation: Option<f64>,
}

pub const MODELS: &[Model] = &[
    Model { name: "bm01", about: "Brownian motion absorbed at both ends of (0, 1)", truncation: None },
    Model { name: "sticky", about: "Brownian motion on (-1, 1), sticky at 0 (Lebesgue plus a unit atom)", truncation: None },
    Model { name: "bm", about: "Brownian motion on (0, inf)", truncation: Some(100.0) },
    Model { name: "cubic", about: "density 1 on (0, 1), y^-3 beyond; regular at 0, entrance at inf", truncation: Some(1e5) },
    Model { name: "exit15", about: "density x^-1.5 near 0, y^-3 tail; exit at 0, entrance at inf", truncation: Some(1e5) },
    Model { name: "sticky-half", about: "the cubic model with a unit atom at 0.5", truncation: Some(1e5) },
    Model { name: "example1", about: "the cubic model plus unit atoms at i^-2, i >= 2", truncation: Some(1e5) },
    Model { name: "log-borderline", about: "density x^-2 / ln(1/x) near 0, y^-3 tail", truncation: Some(1e5) },
    Model { name: "dual-bm", about: "density z^-4 on (0, inf), the 1/x dual of Brownian motion", truncation: Some(1e4) },
];

pub fn model(name: &str) -> Option<&'static Model> {
    MODELS.iter().find(|m| m.name == name)
}

const CUBIC: &str = "if(x < 1, 1, x^-3)";

pub fn named(name: &str) -> Result<SpeedMeasure> {
    let half = Interval::half_line(0.0);
    match name {
        "bm01" => SpeedMeasure::lebesgue(Interval::new(0.0, 1.0)?, vec![]),
        "sticky" => SpeedMeasure::lebesgue(Interval::new(-1.0, 1.0)?, vec![Atom::new(0.0, 1.0)]),
        "bm" => SpeedMeasure::lebesgue(half, vec![]),
        "cubic" => SpeedMeasure::from_expr(half, CUBIC, vec![]),
        "exit15" => SpeedMeasure::from_expr(half, "if(x < 1, x^-1.5, x^-3)", vec![]),
        "sticky-half" => SpeedMeasure::from_expr(half, CUBIC, vec![Atom::new(0.5, 1.0)]),
        "example1" => SpeedMeasure::from_expr(half, CUBIC, example1_atoms(EXAMPLE1_ATOMS)),
        "log-borderline" => SpeedMeasure::from_expr(half, "if(x < 0.5, x^-2 / ln(1/x), x^-3)", vec![]),
        "dual-bm" => SpeedMeasure::from_expr(half, "x^-4", vec![]),
        _ => Err(Error::Schema {
            key: "model".into(),
            message: format!(
                "unknown model `{name}`; known: {}",
                MODELS.iter().map(|m| m.name).collect::<Vec<_>>().join(", ")
            ),
        }),
    }
}

/// Unit atoms at `i^-2` for `i = 2..=count`, in increasing order.
pub fn example1_atoms(count: usize) -> Vec<Atom> {
    (2..=count)
        .rev()
        .map(|i| Atom::new(1.0 / (i as f64 * i as f64), 1.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_model_builds() {
        for m in MODELS {
            assert!(named(m.name).is_ok(), "{}", m.name);
        }
        assert!(named("nope").is_err());
    }

    #[test]
    fn example1_atoms_sorted() {
        let a = example1_atoms(10);
        assert_eq!(a.len(), 9);
        assert_eq!(a[0].location, 0.01);
        assert_eq!(a[8].location, 0.25);
    }
}
