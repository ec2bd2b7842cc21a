use std::sync::Arc;

use super::{Atom, Density, Interval, SpeedMeasure};
use crate::error::{Error, Result};
use crate::quadrature::{self, Convergence};
use crate::solver::{apply_kernel, DiscreteMeasure, Grid};

/// A prescribed QSD.
#[derive(Debug, Clone)]
pub enum QsdInput<'a> {
    /// Weights on the nodes of a grid; the grid supplies the kernel.
    Discrete { grid: &'a Grid, alpha: &'a DiscreteMeasure },
    /// Density (plus atoms) on a half-line.
    Density {
        support: Interval,
        density: Density,
        atoms: Vec<Atom>,
    },
}

/// Speed measure whose QSD is `α` with absorption rate `λ₀`:
/// `dm/dα(x) = 1 / (2 λ₀ Kα(x))`, `Kα(x) = ∫ G(x, y) α(dy)`.
pub fn measure_from_qsd(alpha: QsdInput<'_>, lambda0: f64) -> Result<SpeedMeasure> {
    if !(lambda0 > 0.0 && lambda0.is_finite()) {
        return Err(Error::InvalidMeasure(format!("lambda0 must be positive, got {lambda0}")));
    }
    match alpha {
        QsdInput::Discrete { grid, alpha } => from_discrete(grid, alpha, lambda0),
        QsdInput::Density { support, density, atoms } => from_density(support, density, atoms, lambda0),
    }
}

fn from_discrete(grid: &Grid, alpha: &DiscreteMeasure, lambda0: f64) -> Result<SpeedMeasure> {
    if alpha.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let l = grid.left();
    let first_moment = alpha.integrate(|x| x - l);
    if !first_moment.is_finite() {
        return Err(Error::NonIntegrableTail(format!("sum of x alpha is {first_moment}")));
    }
    let ka = apply_kernel(grid, alpha.weights());
    let atoms: Vec<Atom> = grid
        .nodes()
        .iter()
        .zip(alpha.weights())
        .zip(&ka)
        .filter(|((_, w), _)| **w > 0.0)
        .map(|((x, w), k)| Atom::new(*x, w / (2.0 * lambda0 * k)))
        .collect();
    SpeedMeasure::atomic(grid.domain(), atoms)
}

/// Cumulative tables of `∫_l^x u(y) α(dy)` on geometric knots, refined by
/// one adaptive piece per evaluation.
struct Cumulative {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl Cumulative {
    fn build<F: Fn(f64) -> f64>(f: &F, l: f64, knots: Vec<f64>) -> Result<Cumulative> {
        let head = match quadrature::improper_to_endpoint(f, knots[0], l) {
            Convergence::Converged { value, .. } => value,
            other => {
                return Err(Error::QuadratureInconclusive(format!(
                    "alpha integral near the lower end undecided (partial {:e})",
                    other.partial()
                )))
            }
        };
        let mut values = Vec::with_capacity(knots.len());
        let mut acc = head;
        values.push(acc);
        for w in knots.windows(2) {
            acc += quadrature::integrate(f, w[0], w[1], 1e-12, 0.0).value;
            values.push(acc);
        }
        Ok(Cumulative { knots, values })
    }

    fn at<F: Fn(f64) -> f64>(&self, f: &F, l: f64, x: f64) -> f64 {
        let k = self.knots.partition_point(|&v| v <= x);
        if k == 0 {
            return match quadrature::improper_to_endpoint(f, x, l) {
                Convergence::Converged { value, .. } => value,
                other => other.partial(),
            };
        }
        let k = k - 1;
        self.values[k] + quadrature::integrate(f, self.knots[k], x, 1e-12, 0.0).value
    }
}

fn from_density(support: Interval, density: Density, atoms: Vec<Atom>, lambda0: f64) -> Result<SpeedMeasure> {
    if support.is_bounded() {
        return Err(Error::UnsupportedDomain(format!(
            "density input needs a half-line support, got {support}"
        )));
    }
    let l = support.left;
    // validates the density and atoms
    let alpha = SpeedMeasure::new(support, density.clone(), atoms.clone())?;
    let first = match quadrature::improper_to_infinity(|u| u * density.eval(l + u), 1.0) {
        Convergence::Converged { value, .. } => value,
        Convergence::Diverged { partial } => {
            return Err(Error::NonIntegrableTail(format!("diverges, partial sum {partial:e}")))
        }
        Convergence::Inconclusive { partial } => {
            return Err(Error::NonIntegrableTail(format!(
                "cannot certify convergence, partial sum {partial:e}"
            )))
        }
    };
    let tail_mass = quadrature::improper_to_infinity(|u| density.eval(l + u), 1.0).partial();
    let d1 = density.clone();
    let f_mass = move |y: f64| d1.eval(y);
    let d2 = density.clone();
    let f_moment = move |y: f64| (y - l) * d2.eval(y);
    let knots: Vec<f64> = (0..=600).map(|k| l + 2f64.powf(-40.0 + k as f64 * 0.1)).collect();
    let mass_tab = Cumulative::build(&f_mass, l, knots.clone())?;
    let moment_tab = Cumulative::build(&f_moment, l, knots)?;
    let atom_total: f64 = atoms.iter().map(|a| a.mass).sum();
    let head_mass = quadrature::integrate(&f_mass, l + 2f64.powi(-40), l + 1.0, 1e-12, 0.0).value
        + mass_tab.values[0];
    let total = head_mass + tail_mass + atom_total;
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidMeasure(format!("alpha has total mass {total}, expected 1")));
    }
    let _ = first;

    let ka = Arc::new(move |x: f64| {
        // ∫ (x∧y - l) α(dy) = ∫_l^x (y-l) α + (x-l) α((x, ∞))
        let below_moment = moment_tab.at(&f_moment, l, x);
        let below_mass = mass_tab.at(&f_mass, l, x);
        let (mut am, mut aw) = (0.0, 0.0);
        for a in alpha.atoms() {
            if a.location <= x {
                am += (a.location - l) * a.mass;
                aw += a.mass;
            }
        }
        below_moment + am + (x - l) * (total - below_mass - aw).max(0.0)
    });
    let ka2 = ka.clone();
    let dens = density.clone();
    let m_density = Density::from_fn(format!("inverse of {}", density.label()), move |x| {
        dens.eval(x) / (2.0 * lambda0 * ka2(x))
    });
    let m_atoms = atoms
        .iter()
        .map(|a| Atom::new(a.location, a.mass / (2.0 * lambda0 * ka(a.location))))
        .collect();
    SpeedMeasure::new(support, m_density, m_atoms)
}
