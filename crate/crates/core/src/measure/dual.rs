use super::{Atom, Interval, SpeedMeasure};
use crate::error::{Error, Result};

/// Speed measure of `1/X` after the `h(x) = x` transform:
/// density `z ↦ z⁻⁴ (dm/dΛ)(1/z)` and atoms `(a, w) ↦ (1/a, w a²)`.
pub fn dual_measure(m: &SpeedMeasure) -> Result<SpeedMeasure> {
    let s = m.support();
    if s.is_bounded() {
        return Err(Error::UnsupportedDomain(format!(
            "dual measure needs support (0, inf), got {s}"
        )));
    }
    if s.left != 0.0 {
        return Err(Error::UnsupportedDomain(format!(
            "translate the support to start at 0 first, got {s}"
        )));
    }
    let atoms: Vec<Atom> = m
        .atoms()
        .iter()
        .rev()
        .map(|a| Atom::new(1.0 / a.location, a.mass * a.location * a.location))
        .collect();
    let support = Interval::half_line(0.0);
    if m.is_atomic_grid() {
        SpeedMeasure::atomic(support, atoms)
    } else {
        SpeedMeasure::new(support, m.density().dual(), atoms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{classify_boundary, End};

    #[test]
    fn brownian_dual_density() {
        let m = SpeedMeasure::lebesgue(Interval::half_line(0.0), vec![Atom::new(2.0, 1.0)]).unwrap();
        let d = dual_measure(&m).unwrap();
        for z in [0.01, 0.5, 3.0, 100.0] {
            assert!((d.density_at(z) - z.powi(-4)).abs() <= 1e-15 * z.powi(-4));
        }
        assert_eq!(d.atoms(), &[Atom::new(0.5, 4.0)]);
        assert_eq!(classify_boundary(&d, End::Upper).unwrap().kind, crate::measure::BoundaryKind::Entrance);
    }

    #[test]
    fn rejects_bounded_support() {
        let m = SpeedMeasure::lebesgue(Interval::new(0.0, 1.0).unwrap(), vec![]).unwrap();
        assert!(matches!(dual_measure(&m), Err(Error::UnsupportedDomain(_))));
    }
}
