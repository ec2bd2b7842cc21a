use serde::Serialize;

use super::SpeedMeasure;
use crate::error::{Error, Result};
use crate::quadrature::{improper_to_endpoint, improper_to_infinity, Convergence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryKind {
    Regular,
    Exit,
    Entrance,
    Natural,
}

impl BoundaryKind {
    /// Reachable from the interior in finite time.
    pub fn is_accessible(self) -> bool {
        matches!(self, BoundaryKind::Regular | BoundaryKind::Exit)
    }
}

/// Classification of one endpoint together with the two test integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryClass {
    pub end: End,
    pub kind: BoundaryKind,
    /// `∫ d(y) m(dy)` near the end, `d` the distance to the end
    /// (or `∫ y m(dy)` toward `+∞`).
    pub moment_integral: Convergence,
    /// `∫ m(dy)` near the end.
    pub mass_integral: Convergence,
}

/// Point splitting the interval into a neighbourhood of each end.
pub(crate) fn reference_point(m: &SpeedMeasure) -> f64 {
    let s = m.support();
    if !s.is_bounded() || s.right - s.left >= 2.0 {
        s.left + 1.0
    } else {
        0.5 * (s.left + s.right)
    }
}

fn add_atoms(c: Convergence, extra: f64) -> Convergence {
    match c {
        Convergence::Converged { value, tail } => Convergence::Converged {
            value: value + extra,
            tail,
        },
        Convergence::Diverged { partial } => Convergence::Diverged {
            partial: partial + extra,
        },
        Convergence::Inconclusive { partial } => Convergence::Inconclusive {
            partial: partial + extra,
        },
    }
}

/// `∫ w(y) m(dy)` over the part of the support between `c` and the finite
/// endpoint `e`.
pub(crate) fn near_end_integral<W: Fn(f64) -> f64>(m: &SpeedMeasure, w: W, c: f64, e: f64) -> Convergence {
    let d = m.density();
    let conv = if d.is_zero() {
        Convergence::Converged { value: 0.0, tail: 0.0 }
    } else {
        improper_to_endpoint(|y| w(y) * d.eval(y), c, e)
    };
    let (lo, hi) = if e < c { (e, c) } else { (c, e) };
    let atoms: f64 = m
        .atoms()
        .iter()
        .filter(|a| a.location > lo && a.location < hi)
        .map(|a| w(a.location) * a.mass)
        .sum();
    add_atoms(conv, atoms)
}

/// `∫ w(y) m(dy)` over `[l + 1, ∞)`.
pub(crate) fn tail_integral<W: Fn(f64) -> f64>(m: &SpeedMeasure, w: W) -> Convergence {
    let l = m.support().left;
    let d = m.density();
    let conv = if d.is_zero() {
        Convergence::Converged { value: 0.0, tail: 0.0 }
    } else {
        improper_to_infinity(|u| w(l + u) * d.eval(l + u), 1.0)
    };
    let atoms: f64 = m
        .atoms_in(l + 1.0, f64::INFINITY)
        .iter()
        .map(|a| w(a.location) * a.mass)
        .sum();
    add_atoms(conv, atoms)
}

fn inconclusive(what: &str, end: End, c: Convergence) -> Error {
    Error::QuadratureInconclusive(format!(
        "{what} at the {end:?} end undecided (partial sum {:e})",
        c.partial()
    ))
}

/// Feller classification of an endpoint on natural scale.
pub fn classify_boundary(m: &SpeedMeasure, end: End) -> Result<BoundaryClass> {
    let s = m.support();
    let c = reference_point(m);
    let (moment, mass) = match end {
        End::Lower => {
            let l = s.left;
            (
                near_end_integral(m, |y| y - l, c, l),
                near_end_integral(m, |_| 1.0, c, l),
            )
        }
        End::Upper if s.is_bounded() => {
            let r = s.right;
            (
                near_end_integral(m, |y| r - y, c, r),
                near_end_integral(m, |_| 1.0, c, r),
            )
        }
        End::Upper => {
            let l = s.left;
            (tail_integral(m, |y| y - l), tail_integral(m, |_| 1.0))
        }
    };
    let kind = if end == End::Upper && !s.is_bounded() {
        match moment {
            Convergence::Converged { .. } => BoundaryKind::Entrance,
            Convergence::Diverged { .. } => BoundaryKind::Natural,
            Convergence::Inconclusive { .. } => {
                return Err(inconclusive("moment integral", end, moment))
            }
        }
    } else {
        match moment {
            Convergence::Diverged { .. } => BoundaryKind::Natural,
            Convergence::Inconclusive { .. } => {
                return Err(inconclusive("moment integral", end, moment))
            }
            Convergence::Converged { .. } => match mass {
                Convergence::Converged { .. } => BoundaryKind::Regular,
                Convergence::Diverged { .. } => BoundaryKind::Exit,
                Convergence::Inconclusive { .. } => {
                    return Err(inconclusive("mass integral", end, mass))
                }
            },
        }
    };
    Ok(BoundaryClass {
        end,
        kind,
        moment_integral: moment,
        mass_integral: mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, Interval};

    fn half(density: &str) -> SpeedMeasure {
        SpeedMeasure::from_expr(Interval::half_line(0.0), density, vec![]).unwrap()
    }

    #[test]
    fn lebesgue_half_line() {
        let m = half("1");
        let lo = classify_boundary(&m, End::Lower).unwrap();
        assert_eq!(lo.kind, BoundaryKind::Regular);
        assert!((lo.moment_integral.value().unwrap() - 0.5).abs() < 1e-8);
        assert!((lo.mass_integral.value().unwrap() - 1.0).abs() < 1e-8);
        assert_eq!(classify_boundary(&m, End::Upper).unwrap().kind, BoundaryKind::Natural);
    }

    #[test]
    fn cubic_tail_is_entrance() {
        let m = half("if(x < 1, 1, x^-3)");
        let up = classify_boundary(&m, End::Upper).unwrap();
        assert_eq!(up.kind, BoundaryKind::Entrance);
        assert!((up.moment_integral.value().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exit_and_natural_lower_ends() {
        assert_eq!(classify_boundary(&half("x^-1.5"), End::Lower).unwrap().kind, BoundaryKind::Exit);
        assert_eq!(classify_boundary(&half("x^-2.5"), End::Lower).unwrap().kind, BoundaryKind::Natural);
        assert!(matches!(
            classify_boundary(&half("if(x < 0.5, x^-2 / ln(1/x), x^-3)"), End::Lower),
            Err(Error::QuadratureInconclusive(_))
        ));
    }

    #[test]
    fn bounded_upper_end_and_shifted_support() {
        let m = SpeedMeasure::from_expr(Interval::new(-1.0, 1.0).unwrap(), "1", vec![Atom::new(0.0, 1.0)])
            .unwrap();
        assert_eq!(classify_boundary(&m, End::Upper).unwrap().kind, BoundaryKind::Regular);
        let m = SpeedMeasure::from_expr(Interval::new(2.0, 3.0).unwrap(), "(3-x)^-1.5", vec![]).unwrap();
        assert_eq!(classify_boundary(&m, End::Upper).unwrap().kind, BoundaryKind::Exit);
        assert_eq!(classify_boundary(&m, End::Lower).unwrap().kind, BoundaryKind::Regular);
    }
}
