use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use super::kernel::apply_kernel_into;
use super::{apply_kernel, Grid, KernelKind, Partition};
use crate::error::{Error, Result};

/// Weights on the cells of a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    partition: Arc<Partition>,
    weights: Vec<f64>,
    is_probability: bool,
}

impl DiscreteMeasure {
    pub fn new(partition: Arc<Partition>, weights: Vec<f64>) -> Result<DiscreteMeasure> {
        if weights.len() != partition.len() {
            return Err(Error::InvalidGrid("weight vector does not match the partition".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        Ok(DiscreteMeasure {
            partition,
            weights,
            is_probability: (total - 1.0).abs() <= 1e-12,
        })
    }

    /// Normalizes `weights` to a probability vector.
    pub fn probability(partition: Arc<Partition>, mut weights: Vec<f64>) -> Result<DiscreteMeasure> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidMeasure(format!("cannot normalize total mass {total}")));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        let mut d = DiscreteMeasure::new(partition, weights)?;
        d.is_probability = true;
        Ok(d)
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn points(&self) -> &[f64] {
        self.partition.points()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_probability(&self) -> bool {
        self.is_probability
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_i f(x_i)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.points().iter().zip(&self.weights).map(|(x, w)| f(*x) * w).sum()
    }

    /// Moves each weight to the cell of `target` containing its point.
    pub fn rebin(&self, target: &Arc<Partition>) -> DiscreteMeasure {
        let mut w = vec![0.0; target.len()];
        for (x, v) in self.points().iter().zip(&self.weights) {
            w[target.locate(*x)] += v;
        }
        DiscreteMeasure {
            partition: target.clone(),
            weights: w,
            is_probability: self.is_probability,
        }
    }
}

/// QSD `α`, absorption rate `λ₀` and the limit function `η` on a grid.
#[derive(Debug, Clone)]
pub struct QsdSolution {
    pub alpha: DiscreteMeasure,
    pub lambda0: f64,
    pub eta: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionHeader {
    pub lambda0: f64,
    pub iterations: usize,
    pub residual: f64,
    pub tail_bound: f64,
}

impl QsdSolution {
    pub fn header(&self) -> SolutionHeader {
        SolutionHeader {
            lambda0: self.lambda0,
            iterations: self.iterations,
            residual: self.residual,
            tail_bound: self.tail_bound,
        }
    }

    /// CSV `x,alpha_weight,eta,M_1,...` with one row per node.
    pub fn to_csv(&self, moments: &[Vec<f64>]) -> String {
        let extra: Vec<&Vec<f64>> = moments.iter().skip(1).collect();
        let mut out = String::from("x,alpha_weight,eta");
        for k in 1..=extra.len() {
            let _ = write!(out, ",M_{k}");
        }
        out.push('\n');
        for (i, (x, a)) in self.alpha.points().iter().zip(self.alpha.weights()).enumerate() {
            let _ = write!(out, "{x:.16e},{a:.16e},{:.16e}", self.eta[i]);
            for mk in &extra {
                let _ = write!(out, ",{:.16e}", mk[i]);
            }
            out.push('\n');
        }
        out
    }
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn check_solvable(grid: &Grid) -> Result<()> {
    if grid.reflecting_lower() {
        return Err(Error::InvalidGrid("the solver needs an absorbing lower end".into()));
    }
    Ok(())
}

/// Power iteration `w ← normalize((Kw)·m)` on the measure side.
pub fn qsd_power_iteration(grid: &Grid, tol: f64, max_iter: usize) -> Result<QsdSolution> {
    check_solvable(grid)?;
    let x = grid.nodes();
    let m = grid.cell_mass();
    let (l, r) = (grid.left(), grid.right());
    let mut w: Vec<f64> = match grid.kind() {
        KernelKind::OneSidedAbsorbZero => x.iter().zip(m).map(|(x, m)| m * (x - l)).collect(),
        KernelKind::TwoSidedAbsorb => x.iter().zip(m).map(|(x, m)| m * (x - l) * (r - x)).collect(),
    };
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    let mut kw = vec![0.0; w.len()];
    let mut next = vec![0.0; w.len()];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        apply_kernel_into(grid, &w, &mut kw);
        let mut total = 0.0;
        for i in 0..w.len() {
            next[i] = kw[i] * m[i];
            total += next[i];
        }
        next.iter_mut().for_each(|v| *v /= total);
        residual = tv(&next, &w);
        std::mem::swap(&mut w, &mut next);
        if residual < tol {
            return finish(grid, w, it, residual);
        }
    }
    Err(Error::NoConvergence {
        residual,
        iterations: max_iter,
    })
}

fn finish(grid: &Grid, w: Vec<f64>, iterations: usize, residual: f64) -> Result<QsdSolution> {
    let kalpha = apply_kernel(grid, &w);
    let denom: f64 = kalpha.iter().zip(grid.cell_mass()).map(|(k, m)| k * m).sum();
    let lambda0 = 1.0 / (2.0 * denom);
    let alpha = DiscreteMeasure::probability(grid.partition().clone(), w)?;
    let eta = eta_from_alpha(grid, &alpha);
    Ok(QsdSolution {
        alpha,
        lambda0,
        eta,
        iterations,
        residual,
        tail_bound: grid.tail_bound(),
    })
}

/// `η_i = (Kα)_i / Σ_j α_j (Kα)_j`.
pub fn eta_from_alpha(grid: &Grid, alpha: &DiscreteMeasure) -> Vec<f64> {
    let kalpha = apply_kernel(grid, alpha.weights());
    let norm: f64 = kalpha.iter().zip(alpha.weights()).map(|(k, a)| k * a).sum();
    kalpha.into_iter().map(|k| k / norm).collect()
}

/// `M_0 = 1`, `M_k = 2k K(M_{k-1} · m)`.
pub fn absorption_moments(grid: &Grid, k_max: usize) -> Vec<Vec<f64>> {
    let n = grid.len();
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(vec![1.0; n]);
    for k in 1..=k_max {
        let prev = &out[k - 1];
        let weighted: Vec<f64> = prev.iter().zip(grid.cell_mass()).map(|(p, m)| p * m).collect();
        let mut mk = apply_kernel(grid, &weighted);
        mk.iter_mut().for_each(|v| *v *= 2.0 * k as f64);
        out.push(mk);
    }
    out
}

/// Markov bound `min_k M_k(x) / t^k` on `P_x(t < τ)` at node `i`.
pub fn markov_bound(moments: &[Vec<f64>], i: usize, t: f64) -> f64 {
    moments
        .iter()
        .enumerate()
        .map(|(k, mk)| mk[i] / t.powi(k as i32))
        .fold(f64::INFINITY, f64::min)
}
