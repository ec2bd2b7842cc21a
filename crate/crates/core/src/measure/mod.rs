//! Speed measures on natural scale, their boundary classification, the
//! `1/x` dual measure, scale transforms of general SDEs, and the inverse
//! construction of a speed measure from a prescribed QSD.

mod classify;
mod dual;
mod inverse;
mod scale;
pub mod suite;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{BinOp, DensityExpr, Expr};
use crate::quadrature;

pub use classify::{classify_boundary, BoundaryClass, BoundaryKind, End};
pub use dual::dual_measure;
pub use inverse::{measure_from_qsd, QsdInput};
pub use scale::{scale_transform, ScaleFunction, ScaleOptions};

/// State interval `(left, right)`; `left` is finite, `right` may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub left: f64,
    pub right: f64,
}

impl Interval {
    pub fn new(left: f64, right: f64) -> Result<Interval> {
        if !left.is_finite() {
            return Err(Error::InvalidInterval(format!("left end {left} must be finite")));
        }
        if right.is_nan() || right == f64::NEG_INFINITY {
            return Err(Error::InvalidInterval(format!("right end {right} is invalid")));
        }
        if left >= right {
            return Err(Error::InvalidInterval(format!("need left < right, got ({left}, {right})")));
        }
        Ok(Interval { left, right })
    }

    pub fn half_line(left: f64) -> Interval {
        Interval {
            left,
            right: f64::INFINITY,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.right.is_finite()
    }

    pub fn contains_interior(&self, x: f64) -> bool {
        x > self.left && x < self.right
    }

    /// Interior sample points, clustered geometrically toward each end.
    /// The flag marks points away from the ends, where a density that
    /// underflows to zero is a genuine gap rather than roundoff.
    pub(crate) fn sample_points(&self) -> Vec<(f64, bool)> {
        let mut pts = Vec::new();
        if self.is_bounded() {
            let w = self.right - self.left;
            for k in 1..64 {
                pts.push((self.left + w * k as f64 / 64.0, true));
            }
            for k in 1..=40 {
                let d = w * 0.5 * 2f64.powi(-k);
                pts.push((self.left + d, false));
                pts.push((self.right - d, false));
            }
        } else {
            for k in -40..=40 {
                pts.push((self.left + 2f64.powf(k as f64 + 0.37), (-8..=8).contains(&k)));
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.right.is_finite() {
            write!(f, "({}, {})", self.left, self.right)
        } else {
            write!(f, "({}, inf)", self.left)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

impl Atom {
    pub fn new(location: f64, mass: f64) -> Atom {
        Atom { location, mass }
    }
}

/// Tabulated positive density, interpolated linearly in `(ln x, ln d)`.
#[derive(Debug, Clone)]
pub struct Tabulated {
    ln_x: Vec<f64>,
    ln_d: Vec<f64>,
    origin: f64,
}

impl Tabulated {
    /// `x` strictly increasing and above `origin`; `d` positive.
    pub fn new(origin: f64, x: &[f64], d: &[f64]) -> Result<Tabulated> {
        if x.len() < 2 || x.len() != d.len() {
            return Err(Error::InvalidMeasure("tabulated density needs ≥ 2 knots".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) || x[0] <= origin {
            return Err(Error::InvalidMeasure("tabulated knots must increase".into()));
        }
        if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidMeasure("tabulated density must be positive".into()));
        }
        Ok(Tabulated {
            ln_x: x.iter().map(|v| (v - origin).ln()).collect(),
            ln_d: d.iter().map(|v| v.ln()).collect(),
            origin,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.origin).ln();
        let n = self.ln_x.len();
        let i = match self.ln_x.partition_point(|&v| v <= u) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let (u0, u1) = (self.ln_x[i], self.ln_x[i + 1]);
        let t = (u - u0) / (u1 - u0);
        (self.ln_d[i] + t * (self.ln_d[i + 1] - self.ln_d[i])).exp()
    }
}

enum DensityKind {
    Zero,
    Constant(f64),
    Expr(DensityExpr),
    Func {
        label: String,
        f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    },
    /// `z ↦ z⁻⁴ · inner(1/z)`.
    Dual(Density),
    Scaled(Density, f64),
    Tabulated(Tabulated),
}

/// Lebesgue density of the absolutely continuous part of a measure.
#[derive(Clone)]
pub struct Density(Arc<DensityKind>);

impl Density {
    pub fn zero() -> Density {
        Density(Arc::new(DensityKind::Zero))
    }

    pub fn constant(c: f64) -> Density {
        Density(Arc::new(DensityKind::Constant(c)))
    }

    pub fn expr(e: DensityExpr) -> Density {
        Density(Arc::new(DensityKind::Expr(e)))
    }

    pub fn parse(src: &str) -> Result<Density> {
        Ok(Density::expr(DensityExpr::parse(src)?))
    }

    pub fn from_fn<F>(label: impl Into<String>, f: F) -> Density
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Density(Arc::new(DensityKind::Func {
            label: label.into(),
            f: Box::new(f),
        }))
    }

    pub fn tabulated(t: Tabulated) -> Density {
        Density(Arc::new(DensityKind::Tabulated(t)))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &*self.0 {
            DensityKind::Zero => 0.0,
            DensityKind::Constant(c) => *c,
            DensityKind::Expr(e) => e.eval(x),
            DensityKind::Func { f, .. } => f(x),
            DensityKind::Dual(inner) => {
                let w = 1.0 / x;
                let w2 = w * w;
                inner.eval(w) * (w2 * w2)
            }
            DensityKind::Scaled(inner, k) => k * inner.eval(x),
            DensityKind::Tabulated(t) => t.eval(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(&*self.0, DensityKind::Zero)
    }

    /// Density of the `1/x` dual. Dualizing a dual returns the original.
    pub fn dual(&self) -> Density {
        match &*self.0 {
            DensityKind::Dual(inner) => inner.clone(),
            DensityKind::Zero => Density::zero(),
            _ => Density(Arc::new(DensityKind::Dual(self.clone()))),
        }
    }

    pub fn scaled(&self, k: f64) -> Density {
        match &*self.0 {
            DensityKind::Zero => Density::zero(),
            DensityKind::Constant(c) => Density::constant(c * k),
            _ => Density(Arc::new(DensityKind::Scaled(self.clone(), k))),
        }
    }

    /// Closed-form expression when one exists.
    pub fn to_expr(&self) -> Option<Expr> {
        match &*self.0 {
            DensityKind::Zero => Some(Expr::Num(0.0)),
            DensityKind::Constant(c) => Some(Expr::Num(*c)),
            DensityKind::Expr(e) => Some(e.ast().clone()),
            DensityKind::Dual(inner) => {
                let recip = Expr::bin(BinOp::Div, Expr::Num(1.0), Expr::X);
                let body = inner.to_expr()?.substitute(&recip);
                let factor = Expr::bin(BinOp::Pow, Expr::X, Expr::Num(-4.0));
                Some(Expr::bin(BinOp::Mul, factor, body))
            }
            DensityKind::Scaled(inner, k) => {
                Some(Expr::bin(BinOp::Mul, Expr::Num(*k), inner.to_expr()?))
            }
            DensityKind::Func { .. } | DensityKind::Tabulated(_) => None,
        }
    }

    pub fn label(&self) -> String {
        match &*self.0 {
            DensityKind::Expr(e) => e.source().to_string(),
            DensityKind::Func { label, .. } => label.clone(),
            DensityKind::Tabulated(_) => "<tabulated>".into(),
            _ => self
                .to_expr()
                .map(|e| e.to_string())
                .unwrap_or_else(|| "<composite>".into()),
        }
    }

    fn checked(&self, x: f64) -> Result<f64> {
        let v = self.eval(x);
        if v.is_finite() && v >= 0.0 {
            return Ok(v);
        }
        if let DensityKind::Expr(e) = &*self.0 {
            e.density_at(x)?;
        }
        Err(Error::InvalidMeasure(format!(
            "density `{}` evaluates to {v} at x = {x}",
            self.label()
        )))
    }
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Density({})", self.label())
    }
}

/// Speed measure `m = density · Λ + Σ mass_i δ_{location_i}` on natural scale.
#[derive(Debug, Clone)]
pub struct SpeedMeasure {
    support: Interval,
    density: Density,
    atoms: Arc<[Atom]>,
    atomic_grid: bool,
}

impl SpeedMeasure {
    pub fn new(support: Interval, density: Density, atoms: Vec<Atom>) -> Result<SpeedMeasure> {
        let m = SpeedMeasure {
            support,
            density,
            atoms: atoms.into(),
            atomic_grid: false,
        };
        m.validate()?;
        Ok(m)
    }

    /// Purely atomic measure on a declared grid of atoms (no density).
    pub fn atomic(support: Interval, atoms: Vec<Atom>) -> Result<SpeedMeasure> {
        let m = SpeedMeasure {
            support,
            density: Density::zero(),
            atoms: atoms.into(),
            atomic_grid: true,
        };
        if m.atoms.is_empty() {
            return Err(Error::InvalidMeasure("atomic measure without atoms".into()));
        }
        m.validate()?;
        Ok(m)
    }

    /// Convenience constructor from a density expression.
    pub fn from_expr(support: Interval, density: &str, atoms: Vec<Atom>) -> Result<SpeedMeasure> {
        SpeedMeasure::new(support, Density::parse(density)?, atoms)
    }

    /// Lebesgue measure on `support`, possibly with atoms.
    pub fn lebesgue(support: Interval, atoms: Vec<Atom>) -> Result<SpeedMeasure> {
        SpeedMeasure::new(support, Density::constant(1.0), atoms)
    }

    fn validate(&self) -> Result<()> {
        let s = self.support;
        for w in self.atoms.windows(2) {
            if w[1].location <= w[0].location {
                return Err(Error::InvalidMeasure(
                    "atom locations must be strictly increasing".into(),
                ));
            }
        }
        for a in self.atoms.iter() {
            if !s.contains_interior(a.location) {
                return Err(Error::InvalidMeasure(format!(
                    "atom at {} is not inside {s}",
                    a.location
                )));
            }
            if !(a.mass.is_finite() && a.mass > 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "atom at {} has non-positive mass {}",
                    a.location, a.mass
                )));
            }
        }
        if self.atomic_grid {
            return Ok(());
        }
        for (x, core) in s.sample_points() {
            let v = self.density.checked(x)?;
            if v == 0.0 && core {
                return Err(Error::InvalidMeasure(format!(
                    "density `{}` vanishes at x = {x}; the measure must charge every open interval",
                    self.density.label()
                )));
            }
        }
        Ok(())
    }

    pub fn support(&self) -> Interval {
        self.support
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_atomic_grid(&self) -> bool {
        self.atomic_grid
    }

    #[inline]
    pub fn density_at(&self, x: f64) -> f64 {
        self.density.eval(x)
    }

    /// Atoms with location in the half-open range `[lo, hi)`.
    pub fn atoms_in(&self, lo: f64, hi: f64) -> &[Atom] {
        let a = self.atoms.partition_point(|t| t.location < lo);
        let b = self.atoms.partition_point(|t| t.location < hi);
        &self.atoms[a..b.max(a)]
    }

    /// Multiplies the whole measure by `k > 0`.
    pub fn scaled(&self, k: f64) -> SpeedMeasure {
        SpeedMeasure {
            support: self.support,
            density: self.density.scaled(k),
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom::new(a.location, a.mass * k))
                .collect::<Vec<_>>()
                .into(),
            atomic_grid: self.atomic_grid,
        }
    }

    /// `∫_{[lo,hi)} g(y) m(dy)` over a finite subrange, density by adaptive
    /// quadrature at relative tolerance `rel_tol`.
    pub fn integrate_on<G: Fn(f64) -> f64>(&self, g: G, lo: f64, hi: f64, rel_tol: f64) -> f64 {
        let mut v = 0.0;
        if !self.density.is_zero() && hi > lo {
            v += quadrature::integrate(|y| g(y) * self.density.eval(y), lo, hi, rel_tol, 1e-300).value;
        }
        for a in self.atoms_in(lo, hi) {
            v += g(a.location) * a.mass;
        }
        v
    }

    /// `m([lo, hi))`.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        self.integrate_on(|_| 1.0, lo, hi, 1e-10)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_invariants() {
        assert!(Interval::new(0.0, 1.0).is_ok());
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(f64::NEG_INFINITY, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).unwrap().right.is_infinite());
    }

    #[test]
    fn measure_validation() {
        let s = Interval::new(0.0, 1.0).unwrap();
        assert!(SpeedMeasure::from_expr(s, "1", vec![Atom::new(0.5, 1.0)]).is_ok());
        // atom on the boundary
        assert!(SpeedMeasure::from_expr(s, "1", vec![Atom::new(1.0, 1.0)]).is_err());
        // unsorted atoms
        assert!(SpeedMeasure::from_expr(
            s,
            "1",
            vec![Atom::new(0.6, 1.0), Atom::new(0.5, 1.0)]
        )
        .is_err());
        // negative density
        assert!(matches!(
            SpeedMeasure::from_expr(s, "x - 0.5", vec![]),
            Err(Error::Expression(_))
        ));
        // vanishing on a subinterval
        assert!(SpeedMeasure::from_expr(s, "if(x<0.5, 1, 0)", vec![]).is_err());
        // pure atoms are fine only when declared
        assert!(SpeedMeasure::atomic(s, vec![Atom::new(0.5, 1.0)]).is_ok());
    }

    #[test]
    fn mass_on_subrange_includes_atoms() {
        let s = Interval::new(-1.0, 1.0).unwrap();
        let m = SpeedMeasure::lebesgue(s, vec![Atom::new(0.0, 1.0)]).unwrap();
        assert!((m.mass(-0.5, 0.5) - 2.0).abs() < 1e-12);
        assert!((m.mass(0.1, 0.5) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn tabulated_is_exact_on_power_laws() {
        let x: Vec<f64> = (0..10).map(|k| 2f64.powi(k)).collect();
        let d: Vec<f64> = x.iter().map(|v| v.powf(-1.5)).collect();
        let t = Tabulated::new(0.0, &x, &d).unwrap();
        for v in [1.3, 7.7, 300.0, 1e4] {
            assert!((t.eval(v) / v.powf(-1.5) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_of_dual_is_identity_density() {
        let d = Density::parse("x^-1.5 + 1").unwrap();
        let dd = d.dual().dual();
        for z in [1e-3, 0.37, 2.0, 1e3] {
            assert_eq!(dd.eval(z), d.eval(z));
        }
        let e = d.dual().to_expr().unwrap();
        for z in [0.1f64, 1.0, 5.0] {
            let direct = z.powi(-4) * d.eval(1.0 / z);
            assert!((e.eval(z) / direct - 1.0).abs() < 1e-14);
        }
    }
}
