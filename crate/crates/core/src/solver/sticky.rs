use serde::Serialize;

use super::{eta_from_alpha, DiscreteMeasure, Grid, QsdSolution};
use crate::error::Result;
use crate::measure::{Atom, Interval, SpeedMeasure};

/// Closed-form QSD of Brownian motion on (-1, 1) with a unit atom of speed
/// measure at 0: `α = a δ₀ + b sin(γ(1 - |x|)) dx`, `λ₀ = γ²/2`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StickyOracle {
    pub gamma: f64,
    pub atom_mass: f64,
    pub b: f64,
    pub lambda0: f64,
    /// `a - b sin γ`
    pub continuity_residual: f64,
    /// `a + (2b/γ)(1 - cos γ) - 1`
    pub normalization_residual: f64,
}

/// Root of `cot γ = γ/2` in `(0, π]`.
pub fn sticky_gamma() -> f64 {
    // cos γ - (γ/2) sin γ has the sign of cot γ - γ/2 on (0, π)
    let f = |g: f64| g.cos() - 0.5 * g * g.sin();
    let (mut lo, mut hi) = (1e-9, std::f64::consts::PI);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn sticky_oracle() -> StickyOracle {
    let gamma = sticky_gamma();
    let b = gamma / 2.0;
    let a = gamma * gamma.sin() / 2.0;
    let o = StickyOracle {
        gamma,
        atom_mass: a,
        b,
        lambda0: gamma * gamma / 2.0,
        continuity_residual: a - b * gamma.sin(),
        normalization_residual: a + 2.0 * b / gamma * (1.0 - gamma.cos()) - 1.0,
    };
    assert!(o.continuity_residual.abs() <= 1e-12);
    assert!(o.normalization_residual.abs() <= 1e-12);
    o
}

impl StickyOracle {
    /// The speed measure `Λ + δ₀` on (-1, 1).
    pub fn measure() -> SpeedMeasure {
        SpeedMeasure::lebesgue(Interval { left: -1.0, right: 1.0 }, vec![Atom::new(0.0, 1.0)])
            .expect("sticky measure is valid")
    }

    pub fn density(&self, x: f64) -> f64 {
        self.b * (self.gamma * (1.0 - x.abs())).sin()
    }

    /// `∫_u^v` of the density part, exactly.
    pub fn density_mass(&self, u: f64, v: f64) -> f64 {
        let prim = |x: f64| {
            let p = self.b / self.gamma * (self.gamma * (1.0 - x.abs())).cos();
            if x >= 0.0 {
                p
            } else {
                2.0 * self.b / self.gamma * self.gamma.cos() - p
            }
        };
        prim(v.clamp(-1.0, 1.0)) - prim(u.clamp(-1.0, 1.0))
    }

    /// Exact cell masses of `α` on `grid`, atom on the node nearest 0.
    pub fn on_grid(&self, grid: &Grid) -> Result<QsdSolution> {
        let e = grid.edges();
        let mut w: Vec<f64> = e.windows(2).map(|c| self.density_mass(c[0], c[1])).collect();
        w[grid.partition().nearest(0.0)] += self.atom_mass;
        let alpha = DiscreteMeasure::probability(grid.partition().clone(), w)?;
        let eta = eta_from_alpha(grid, &alpha);
        Ok(QsdSolution {
            alpha,
            lambda0: self.lambda0,
            eta,
            iterations: 0,
            residual: 0.0,
            tail_bound: 0.0,
        })
    }
}
