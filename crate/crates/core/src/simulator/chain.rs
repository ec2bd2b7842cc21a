use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::{Grid, KernelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryPolicy {
    Absorb,
    Reflect,
}

/// How a start point between two nodes is mapped to a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StartRule {
    /// Nearest node.
    Nearest,
    /// One of the two neighbouring nodes (or the absorbing end), chosen with
    /// the natural-scale hitting probabilities; preserves the mean.
    Split,
}

/// Continuous-time birth–death chain on the nodes of a grid.
///
/// With spacings `d⁻`, `d⁺` to the neighbours of node `i` (an absorbing
/// end counts as a neighbour), the chain moves right with probability
/// `d⁻/(d⁻ + d⁺)` and waits an exponential time of mean
/// `2 m_i d⁻ d⁺ / (d⁻ + d⁺)`. At a reflecting node the mean is `2 m_i d`,
/// `d` the spacing to the only neighbour.
#[derive(Debug, Clone)]
pub struct ChainSpec {
    nodes: Vec<f64>,
    hold: Vec<f64>,
    p_right: Vec<f64>,
    left: f64,
    right: f64,
    lower: BoundaryPolicy,
    upper: BoundaryPolicy,
    start: StartRule,
}

/// Where a path begins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Start {
    Node(usize),
    AbsorbedLower,
    AbsorbedUpper,
}

impl ChainSpec {
    pub fn from_grid(grid: &Grid) -> Result<ChainSpec> {
        let x = grid.nodes();
        let m = grid.cell_mass();
        let n = x.len();
        if n < 2 {
            return Err(Error::InvalidGrid("a chain needs at least two nodes".into()));
        }
        let lower = if grid.reflecting_lower() {
            BoundaryPolicy::Reflect
        } else {
            BoundaryPolicy::Absorb
        };
        let upper = match grid.kind() {
            KernelKind::TwoSidedAbsorb => BoundaryPolicy::Absorb,
            KernelKind::OneSidedAbsorbZero => BoundaryPolicy::Reflect,
        };
        let left = grid.left();
        let right = match upper {
            BoundaryPolicy::Absorb => grid.right(),
            BoundaryPolicy::Reflect => f64::INFINITY,
        };
        let mut hold = Vec::with_capacity(n);
        let mut p_right = Vec::with_capacity(n);
        for i in 0..n {
            let dl = if i > 0 {
                Some(x[i] - x[i - 1])
            } else if lower == BoundaryPolicy::Absorb {
                Some(x[0] - left)
            } else {
                None
            };
            let dr = if i + 1 < n {
                Some(x[i + 1] - x[i])
            } else if upper == BoundaryPolicy::Absorb {
                Some(right - x[i])
            } else {
                None
            };
            let (h, p) = match (dl, dr) {
                (Some(a), Some(b)) => (2.0 * m[i] * a * b / (a + b), a / (a + b)),
                (Some(a), None) => (2.0 * m[i] * a, 0.0),
                (None, Some(b)) => (2.0 * m[i] * b, 1.0),
                (None, None) => unreachable!(),
            };
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidGrid(format!("holding mean {h} at node {i} (x = {})", x[i])));
            }
            hold.push(h);
            p_right.push(p);
        }
        Ok(ChainSpec {
            nodes: x.to_vec(),
            hold,
            p_right,
            left,
            right,
            lower,
            upper,
            start: StartRule::Split,
        })
    }

    pub fn with_start_rule(mut self, rule: StartRule) -> Self {
        self.start = rule;
        self
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn holding_means(&self) -> &[f64] {
        &self.hold
    }

    pub fn p_right(&self) -> &[f64] {
        &self.p_right
    }

    pub fn lower(&self) -> BoundaryPolicy {
        self.lower
    }

    pub fn upper(&self) -> BoundaryPolicy {
        self.upper
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn start_rule(&self) -> StartRule {
        self.start
    }

    /// Largest node.
    pub fn top(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let k = self.nodes.partition_point(|&p| p < x);
        if k == 0 {
            0
        } else if k == self.nodes.len() {
            k - 1
        } else if self.nodes[k] - x < x - self.nodes[k - 1] {
            k
        } else {
            k - 1
        }
    }

    /// Maps a start point to a node. Uses one uniform draw for `Split`.
    pub(crate) fn start<R: Rng>(&self, x0: f64, rng: &mut R) -> Start {
        let n = self.nodes.len();
        let absorbing_lower = self.lower == BoundaryPolicy::Absorb;
        let absorbing_upper = self.upper == BoundaryPolicy::Absorb;
        if absorbing_lower && x0 <= self.left {
            return Start::AbsorbedLower;
        }
        if absorbing_upper && x0 >= self.right {
            return Start::AbsorbedUpper;
        }
        match self.start {
            StartRule::Nearest => {
                let i = self.nearest(x0);
                Start::Node(i)
            }
            StartRule::Split => {
                let u: f64 = rng.random();
                let k = self.nodes.partition_point(|&p| p <= x0);
                if k == 0 {
                    if !absorbing_lower {
                        return Start::Node(0);
                    }
                    let p = (x0 - self.left) / (self.nodes[0] - self.left);
                    if u < p {
                        Start::Node(0)
                    } else {
                        Start::AbsorbedLower
                    }
                } else if k == n {
                    if !absorbing_upper || x0 == self.nodes[n - 1] {
                        return Start::Node(n - 1);
                    }
                    let p = (x0 - self.nodes[n - 1]) / (self.right - self.nodes[n - 1]);
                    if u < p {
                        Start::AbsorbedUpper
                    } else {
                        Start::Node(n - 1)
                    }
                } else {
                    let (a, b) = (self.nodes[k - 1], self.nodes[k]);
                    if u < (x0 - a) / (b - a) {
                        Start::Node(k)
                    } else {
                        Start::Node(k - 1)
                    }
                }
            }
        }
    }
}
