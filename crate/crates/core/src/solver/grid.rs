use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{classify_boundary, BoundaryKind, End, Interval, SpeedMeasure};
use crate::quadrature::{self, Convergence};

const CELL_REL_TOL: f64 = 1e-10;

/// Cell edges plus one representative point per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    edges: Vec<f64>,
    points: Vec<f64>,
}

impl Partition {
    pub fn new(edges: Vec<f64>, points: Vec<f64>) -> Result<Partition> {
        if edges.len() != points.len() + 1 || points.is_empty() {
            return Err(Error::InvalidGrid("need one point per cell".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if !(edges[i] < edges[i + 1] && *p >= edges[i] && *p <= edges[i + 1]) {
                return Err(Error::InvalidGrid(format!("cell {i} is malformed")));
            }
        }
        Ok(Partition { edges, points })
    }

    /// `bins` equal bins on `[lo, hi]` with centers as points.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Partition> {
        if bins == 0 || !(lo < hi) || !hi.is_finite() {
            return Err(Error::InvalidGrid(format!("cannot bin [{lo}, {hi}] into {bins}")));
        }
        let h = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| lo + h * k as f64).collect();
        let points = (0..bins).map(|k| lo + h * (k as f64 + 0.5)).collect();
        Partition::new(edges, points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Index of the cell containing `x`, clamped to the outer cells.
    pub fn locate(&self, x: f64) -> usize {
        let k = self.edges.partition_point(|&e| e <= x);
        k.clamp(1, self.points.len()) - 1
    }

    /// Index of the point nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let k = self.points.partition_point(|&p| p < x);
        if k == 0 {
            0
        } else if k == self.points.len() {
            k - 1
        } else if (self.points[k] - x) < (x - self.points[k - 1]) {
            k
        } else {
            k - 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelKind {
    OneSidedAbsorbZero,
    TwoSidedAbsorb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spacing {
    /// Uniform on bounded supports, stretched on the half-line.
    Auto,
    Uniform,
    /// Spacing proportional to the distance to the nearer end, bounded
    /// below by `min_cell` and above by `max_cell` (or `R/64`).
    Stretched { min_cell: f64, max_cell: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub spacing: Spacing,
    /// Skip the entrance requirement and the tail check; used for
    /// simulation grids on the half-line.
    pub allow_non_entrance: bool,
    /// Reflecting lower end at this point, for measures whose lower end is
    /// inaccessible.
    pub reflect_below: Option<f64>,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            spacing: Spacing::Auto,
            allow_non_entrance: false,
            reflect_below: None,
        }
    }
}

/// Discretized state space with per-cell speed-measure masses.
#[derive(Debug, Clone)]
pub struct Grid {
    partition: Arc<Partition>,
    cell_mass: Vec<f64>,
    domain: Interval,
    kind: KernelKind,
    truncation: Option<f64>,
    tail_bound: f64,
    bulk: f64,
    reflecting_lower: bool,
    atom_nodes: Vec<usize>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.cell_mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_mass.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        self.partition.points()
    }

    pub fn edges(&self) -> &[f64] {
        self.partition.edges()
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn cell_mass(&self) -> &[f64] {
        &self.cell_mass
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Right end `R` of the last cell on half-line grids.
    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    /// `∫_R^∞ (y - l) m(dy)`; zero on bounded grids.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// `∫_l^R (y - l) m(dy)`.
    pub fn bulk(&self) -> f64 {
        self.bulk
    }

    pub fn reflecting_lower(&self) -> bool {
        self.reflecting_lower
    }

    /// Nodes that received at least one atom.
    pub fn atom_nodes(&self) -> &[usize] {
        &self.atom_nodes
    }

    pub fn left(&self) -> f64 {
        self.domain.left
    }

    pub fn right(&self) -> f64 {
        self.domain.right
    }

    /// Grid with explicit nodes, edges and masses.
    pub fn from_parts(
        partition: Partition,
        cell_mass: Vec<f64>,
        domain: Interval,
        kind: KernelKind,
    ) -> Result<Grid> {
        if cell_mass.len() != partition.len() {
            return Err(Error::InvalidGrid("mass vector length mismatch".into()));
        }
        if cell_mass.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidGrid("cell masses must be finite and nonnegative".into()));
        }
        let truncation = match kind {
            KernelKind::OneSidedAbsorbZero => Some(*partition.edges().last().unwrap()),
            KernelKind::TwoSidedAbsorb => None,
        };
        let l = domain.left;
        let bulk = partition
            .points()
            .iter()
            .zip(&cell_mass)
            .map(|(x, m)| (x - l) * m)
            .sum();
        Ok(Grid {
            partition: Arc::new(partition),
            cell_mass,
            domain,
            kind,
            truncation,
            tail_bound: 0.0,
            bulk,
            reflecting_lower: false,
            atom_nodes: Vec::new(),
        })
    }
}

/// Builds a grid with the default options.
pub fn build_grid(m: &SpeedMeasure, n: usize, truncation: Option<f64>) -> Result<Grid> {
    build_grid_with(m, n, truncation, &GridOptions::default())
}

/// Number of cells used by stretched spacing on `[u0, u1]` (distances
/// from the boundary) for slope `kappa`, and the inverse map.
#[derive(Debug, Clone, Copy)]
struct Stretch {
    kappa: f64,
    h_min: f64,
    h_max: f64,
}

impl Stretch {
    fn b1(&self) -> f64 {
        self.h_min / self.kappa
    }

    fn b2(&self) -> f64 {
        self.h_max / self.kappa
    }

    /// Cell coordinate `ξ(u)` with `dξ/du = 1/h(u)`, `ξ(0) = 0`.
    fn xi(&self, u: f64) -> f64 {
        let (b1, b2) = (self.b1(), self.b2());
        if u <= b1 {
            u / self.h_min
        } else if u <= b2 {
            b1 / self.h_min + (u / b1).ln() / self.kappa
        } else {
            b1 / self.h_min + (b2 / b1).ln() / self.kappa + (u - b2) / self.h_max
        }
    }

    fn inv(&self, xi: f64) -> f64 {
        let (b1, b2) = (self.b1(), self.b2());
        let x1 = b1 / self.h_min;
        let x2 = x1 + (b2 / b1).ln() / self.kappa;
        if xi <= x1 {
            xi * self.h_min
        } else if xi <= x2 {
            b1 * (self.kappa * (xi - x1)).exp()
        } else {
            b2 + (xi - x2) * self.h_max
        }
    }
}

/// Edges of a stretched partition of `[lo, hi]`; `u0` is the distance from
/// `lo` to the boundary the spacing is measured from.
fn stretched_edges(lo: f64, hi: f64, u0: f64, n: usize, h_min: f64, h_max: f64) -> Result<Vec<f64>> {
    let mid = 0.5 * (lo + hi);
    let half = mid - lo;
    if h_min * n as f64 >= hi - lo {
        return Err(Error::InvalidGrid(format!(
            "minimum cell {h_min} too large for {n} cells on [{lo}, {hi}]"
        )));
    }
    if h_max * n as f64 <= hi - lo {
        return Err(Error::InvalidGrid(format!(
            "maximum cell {h_max} too small for {n} cells on [{lo}, {hi}]"
        )));
    }
    let count = |kappa: f64| {
        let s = Stretch { kappa, h_min, h_max };
        (s.xi(u0 + half) - s.xi(u0)) + s.xi(half)
    };
    // count decreases in kappa
    let (mut a, mut b) = (1e-12_f64, 1.0_f64);
    while count(b) > n as f64 {
        b *= 2.0;
        if b > 1e12 {
            return Err(Error::InvalidGrid("cannot fit stretched spacing".into()));
        }
    }
    if count(a) < n as f64 {
        return Err(Error::InvalidGrid("too many cells for the requested spacing".into()));
    }
    for _ in 0..200 {
        let c = (a * b).sqrt();
        if count(c) > n as f64 {
            a = c;
        } else {
            b = c;
        }
    }
    let s = Stretch {
        kappa: b,
        h_min,
        h_max,
    };
    let xl0 = s.xi(u0);
    let xl = s.xi(u0 + half) - xl0;
    let xr = s.xi(half);
    let nl = (xl.floor() as usize).min(n);
    let nr = (n - nl).min(xr.ceil() as usize);
    let mut left: Vec<f64> = (0..=nl).map(|k| lo + s.inv(xl0 + k as f64) - u0).collect();
    left[0] = lo;
    let mut right: Vec<f64> = (0..=nr).map(|k| hi - s.inv(k as f64)).collect();
    right[0] = hi;
    // drop edges that cross the midpoint
    while left.len() > 1 && *left.last().unwrap() >= mid {
        left.pop();
    }
    while right.len() > 1 && *right.last().unwrap() <= mid {
        right.pop();
    }
    right.reverse();
    let mut edges = left;
    edges.extend(right);
    // adjust to exactly n cells by merging or splitting the middle
    while edges.len() - 1 > n {
        let j = edges.partition_point(|&e| e < mid).clamp(1, edges.len() - 2);
        edges.remove(j);
    }
    while edges.len() - 1 < n {
        let j = edges.partition_point(|&e| e < mid).clamp(1, edges.len() - 1);
        let (a, b) = (edges[j - 1], edges[j]);
        edges.insert(j, 0.5 * (a + b));
    }
    Ok(edges)
}

/// Edges of `[lo, hi]` refined toward `lo` only, for grids whose upper end
/// is a truncation.
fn one_sided_edges(lo: f64, hi: f64, u0: f64, n: usize, h_min: f64, h_max: f64) -> Result<Vec<f64>> {
    let w = hi - lo;
    if h_min * n as f64 >= w || h_max * n as f64 <= w {
        return Err(Error::InvalidGrid(format!(
            "cell bounds [{h_min}, {h_max}] do not fit {n} cells on [{lo}, {hi}]"
        )));
    }
    let count = |kappa: f64| {
        let s = Stretch { kappa, h_min, h_max };
        s.xi(u0 + w) - s.xi(u0)
    };
    let (mut a, mut b) = (1e-12_f64, 1.0_f64);
    while count(b) > n as f64 {
        b *= 2.0;
        if b > 1e12 {
            return Err(Error::InvalidGrid("cannot fit stretched spacing".into()));
        }
    }
    for _ in 0..200 {
        let c = (a * b).sqrt();
        if count(c) > n as f64 {
            a = c;
        } else {
            b = c;
        }
    }
    let s = Stretch {
        kappa: b,
        h_min,
        h_max,
    };
    let x0 = s.xi(u0);
    let scale = count(b) / n as f64;
    let mut e: Vec<f64> = (0..=n).map(|k| lo - u0 + s.inv(x0 + k as f64 * scale)).collect();
    e[0] = lo;
    e[n] = hi;
    Ok(e)
}

fn default_max_cell(width: f64, n: usize) -> f64 {
    (width / 64.0).max(4.0 * width / n as f64)
}

fn cell_density_mass(m: &SpeedMeasure, a: f64, b: f64) -> f64 {
    if m.density().is_zero() {
        return 0.0;
    }
    quadrature::integrate(|y| m.density_at(y), a, b, CELL_REL_TOL, 1e-300).value
}

/// `∫_a^b |y - e| m(dy)` for the density part.
fn cell_moment(m: &SpeedMeasure, a: f64, b: f64, e: f64) -> f64 {
    if m.density().is_zero() {
        return 0.0;
    }
    quadrature::integrate(|y| (y - e).abs() * m.density_at(y), a, b, CELL_REL_TOL, 1e-300).value
}

/// Discretizes `m`.
///
/// Cells next to an absorbing end carry the effective mass
/// `∫ d(y) m(dy) / d(x₁)`, `d` the distance to that end, so the Green
/// kernel (linear in `d` there) integrates exactly and exit-type
/// singularities stay finite. Atoms are added to the nearest node.
pub fn build_grid_with(m: &SpeedMeasure, n: usize, truncation: Option<f64>, opts: &GridOptions) -> Result<Grid> {
    let s = m.support();
    if m.is_atomic_grid() {
        return atomic_grid(m);
    }
    if n < 16 {
        return Err(Error::InvalidGrid(format!("need n >= 16, got {n}")));
    }
    let l = s.left;
    let (kind, lo, hi) = if s.is_bounded() {
        (KernelKind::TwoSidedAbsorb, l, s.right)
    } else {
        let r = truncation.ok_or_else(|| Error::InvalidGrid("half-line grids need a truncation radius".into()))?;
        if !(r > l && r.is_finite()) {
            return Err(Error::InvalidGrid(format!("truncation {r} must exceed the left end {l}")));
        }
        (KernelKind::OneSidedAbsorbZero, l, r)
    };
    let reflect_lo = opts.reflect_below;
    let start = match reflect_lo {
        Some(x0) if x0 > lo && x0 < hi => x0,
        Some(x0) => return Err(Error::InvalidGrid(format!("reflection point {x0} outside the grid"))),
        None => lo,
    };

    let edges = match (opts.spacing, kind) {
        (Spacing::Uniform, _) | (Spacing::Auto, KernelKind::TwoSidedAbsorb) => {
            let h = (hi - start) / n as f64;
            let mut e: Vec<f64> = (0..=n).map(|k| start + h * k as f64).collect();
            e[n] = hi;
            e
        }
        (Spacing::Auto, KernelKind::OneSidedAbsorbZero) => {
            let w = hi - lo;
            one_sided_edges(start, hi, start - lo, n, w * 1e-10, default_max_cell(w, n))?
        }
        (Spacing::Stretched { min_cell, max_cell }, KernelKind::OneSidedAbsorbZero) => {
            let w = hi - lo;
            one_sided_edges(start, hi, start - lo, n, min_cell, max_cell.unwrap_or(default_max_cell(w, n)))?
        }
        (Spacing::Stretched { min_cell, max_cell }, KernelKind::TwoSidedAbsorb) => {
            let w = hi - lo;
            stretched_edges(start, hi, start - lo, n, min_cell, max_cell.unwrap_or(default_max_cell(w, n)))?
        }
    };
    let points: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let partition = Partition::new(edges, points)?;
    let e = partition.edges();
    let x = partition.points();

    let mut mass: Vec<f64> = (0..n).map(|i| cell_density_mass(m, e[i], e[i + 1])).collect();
    let absorbing_lower = reflect_lo.is_none();
    if absorbing_lower {
        mass[0] = cell_moment(m, e[0], e[1], lo) / (x[0] - lo);
    } else {
        // reflecting end: mass of the cell plus its mirror image
        mass[0] = 2.0 * cell_density_mass(m, e[0], e[1]);
    }
    if kind == KernelKind::TwoSidedAbsorb {
        let r = hi;
        mass[n - 1] = cell_moment(m, e[n - 1], e[n], r) / (r - x[n - 1]);
    }
    let mut atom_nodes = Vec::new();
    for a in m.atoms() {
        if a.location < start || a.location >= hi {
            continue;
        }
        let j = partition.nearest(a.location);
        let w = if j == 0 && absorbing_lower {
            a.mass * (a.location - lo) / (x[0] - lo)
        } else if j == n - 1 && kind == KernelKind::TwoSidedAbsorb {
            a.mass * (hi - a.location) / (hi - x[n - 1])
        } else {
            a.mass
        };
        mass[j] += w;
        if atom_nodes.last() != Some(&j) {
            atom_nodes.push(j);
        }
    }
    if let Some(i) = mass.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidGrid(format!(
            "cell {i} at x = {} has mass {}",
            x[i], mass[i]
        )));
    }

    let bulk: f64 = (0..n).map(|i| cell_moment(m, e[i], e[i + 1], lo)).sum::<f64>()
        + m.atoms_in(start, hi).iter().map(|a| (a.location - lo) * a.mass).sum::<f64>();
    let mut tail_bound = 0.0;
    let mut truncation_r = None;
    if kind == KernelKind::OneSidedAbsorbZero {
        truncation_r = Some(hi);
        if !opts.allow_non_entrance {
            let up = classify_boundary(m, End::Upper)?;
            if up.kind != BoundaryKind::Entrance {
                return Err(Error::InvalidGrid(format!(
                    "upper end is {:?}; half-line grids need an entrance boundary",
                    up.kind
                )));
            }
            tail_bound = tail_moment(m, hi)?;
            if tail_bound > 1e-4 * bulk {
                return Err(Error::TruncationTooSmall {
                    tail: tail_bound,
                    bulk,
                });
            }
        } else if let Ok(t) = tail_moment(m, hi) {
            tail_bound = t;
        } else {
            tail_bound = f64::INFINITY;
        }
    }
    Ok(Grid {
        partition: Arc::new(partition),
        cell_mass: mass,
        domain: s,
        kind,
        truncation: truncation_r,
        tail_bound,
        bulk,
        reflecting_lower: !absorbing_lower,
        atom_nodes,
    })
}

/// `∫_R^∞ (y - l) m(dy)`.
fn tail_moment(m: &SpeedMeasure, r: f64) -> Result<f64> {
    let l = m.support().left;
    let atoms: f64 = m
        .atoms_in(r, f64::INFINITY)
        .iter()
        .map(|a| (a.location - l) * a.mass)
        .sum();
    if m.density().is_zero() {
        return Ok(atoms);
    }
    let d = r - l;
    match quadrature::improper_to_infinity(|u| u * m.density_at(l + u), d) {
        Convergence::Converged { value, .. } => Ok(value + atoms),
        other => Err(Error::QuadratureInconclusive(format!(
            "tail moment beyond {r} not convergent (partial {:e})",
            other.partial()
        ))),
    }
}

/// Nodes at the atoms of a purely atomic measure.
fn atomic_grid(m: &SpeedMeasure) -> Result<Grid> {
    let s = m.support();
    let atoms = m.atoms();
    let x: Vec<f64> = atoms.iter().map(|a| a.location).collect();
    let n = x.len();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(s.left);
    for w in x.windows(2) {
        edges.push(0.5 * (w[0] + w[1]));
    }
    let last = if s.is_bounded() {
        s.right
    } else if n > 1 {
        x[n - 1] + 0.5 * (x[n - 1] - x[n - 2])
    } else {
        2.0 * x[0] - s.left
    };
    edges.push(last);
    let partition = Partition::new(edges, x)?;
    let kind = if s.is_bounded() {
        KernelKind::TwoSidedAbsorb
    } else {
        KernelKind::OneSidedAbsorbZero
    };
    let mut g = Grid::from_parts(partition, atoms.iter().map(|a| a.mass).collect(), s, kind)?;
    g.atom_nodes = (0..n).collect();
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Atom;

    #[test]
    fn uniform_lebesgue() {
        let m = SpeedMeasure::lebesgue(Interval::new(0.0, 1.0).unwrap(), vec![]).unwrap();
        let g = build_grid(&m, 1000, None).unwrap();
        assert_eq!(g.kind(), KernelKind::TwoSidedAbsorb);
        for v in g.cell_mass() {
            assert!((v - 1e-3).abs() < 1e-14);
        }
    }

    #[test]
    fn atom_snaps_to_middle_node() {
        let m = SpeedMeasure::lebesgue(Interval::new(-1.0, 1.0).unwrap(), vec![Atom::new(0.0, 1.0)]).unwrap();
        let g = build_grid(&m, 2001, None).unwrap();
        let h = 2.0 / 2001.0;
        assert_eq!(g.nodes()[1000], 0.0);
        assert!((g.cell_mass()[1000] - (1.0 + h)).abs() < 1e-12);
        assert_eq!(g.atom_nodes(), &[1000]);
    }

    #[test]
    fn cubic_tail_bound() {
        let m = SpeedMeasure::from_expr(Interval::half_line(0.0), "if(x<1, 1, x^-3)", vec![]).unwrap();
        let opts = GridOptions {
            allow_non_entrance: true,
            ..GridOptions::default()
        };
        let g = build_grid_with(&m, 400, Some(50.0), &opts).unwrap();
        assert!((g.tail_bound() - 0.02).abs() < 1e-9);
        // bulk = 1/2 + (1 - 1/50)
        assert!((g.bulk() - 1.48).abs() < 1e-3);
        // tail 1/R against bulk ~1.5 needs R > ~6700
        assert!(matches!(build_grid(&m, 400, Some(50.0)), Err(Error::TruncationTooSmall { .. })));
        assert!(build_grid(&m, 400, Some(1e5)).is_ok());
    }

    #[test]
    fn stretched_edges_are_monotone_and_counted() {
        for &(n, r) in &[(16usize, 1.0), (100, 50.0), (1001, 1e4)] {
            let e = stretched_edges(0.0, r, 0.0, n, r * 1e-10, default_max_cell(r, n)).unwrap();
            assert_eq!(e.len(), n + 1);
            assert_eq!(e[0], 0.0);
            assert_eq!(e[n], r);
            assert!(e.windows(2).all(|w| w[1] > w[0]));
        }
        let e = stretched_edges(0.0, 20.0, 0.0, 600, 0.02, 0.5).unwrap();
        let h: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(h.iter().all(|&v| v > 0.0199 && v < 0.51));
        let e = one_sided_edges(0.0, 1e4, 0.0, 400, 1e-6, 200.0).unwrap();
        assert_eq!(e.len(), 401);
        let h: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(h.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)));
        assert!(h[0] < 2e-6 && h[399] > 150.0);
    }

    #[test]
    fn exit_singularity_has_finite_first_cell() {
        let m = SpeedMeasure::from_expr(Interval::half_line(0.0), "if(x<1, x^-1.5, x^-3)", vec![]).unwrap();
        let g = build_grid(&m, 500, Some(1e5)).unwrap();
        let x0 = g.nodes()[0];
        let e1 = g.edges()[1];
        // ∫_0^{e1} y^-0.5 dy / x0
        let exact = 2.0 * e1.sqrt() / x0;
        assert!((g.cell_mass()[0] / exact - 1.0).abs() < 1e-8);
    }
}
