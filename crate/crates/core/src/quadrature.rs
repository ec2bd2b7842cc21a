//! Adaptive Gauss–Kronrod quadrature and the panel-series convergence test
//! used for every improper integral near a boundary.
//!
//! Improper integrals are split into geometric panels shrinking toward the
//! endpoint by a factor 2 (or growing by 2 toward +∞). The sequence of
//! panel integrals is then classified as convergent, divergent or
//! undecided; see [`PanelSeries`].

/// Relative tolerance for each panel.
pub const PANEL_REL_TOL: f64 = 1e-8;
/// Panels examined before giving up on a verdict.
pub const MAX_PANELS: usize = 60;
/// A running sum above this value is declared divergent.
pub const DIVERGENCE_SUM: f64 = 1e12;

// 15-point Kronrod nodes on [0, 1] (symmetric), with 7-point Gauss weights
// on the even-indexed nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One GK15 application: (kronrod estimate, |kronrod - gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Adaptive GK15 on a finite interval, bisecting the worst subinterval
/// until `error <= max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> QuadResult {
    const MAX_INTERVALS: usize = 2000;
    if a == b {
        return QuadResult {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
    }
    let (v, e) = gk15(&f, a, b);
    let mut parts: Vec<(f64, f64, f64, f64)> = vec![(a, b, v, e)];
    let mut value = v;
    let mut error = e;
    loop {
        let tol = abs_tol.max(rel_tol * value.abs());
        if error <= tol || !value.is_finite() {
            break;
        }
        if parts.len() >= MAX_INTERVALS {
            return QuadResult {
                value,
                error,
                converged: false,
            };
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (lo, hi, pv, pe) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval exhausted at machine precision
            parts.push((lo, hi, pv, 0.0));
            error -= pe;
            continue;
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        value += v1 + v2 - pv;
        error += e1 + e2 - pe;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    // resum to shed accumulated cancellation
    let value: f64 = parts.iter().map(|p| p.2).sum();
    let error: f64 = parts.iter().map(|p| p.3).sum();
    QuadResult {
        value,
        error,
        converged: value.is_finite(),
    }
}

/// Panel integral with the standard tolerance.
pub fn panel<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> QuadResult {
    integrate(f, a, b, PANEL_REL_TOL, 1e-300)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convergence {
    /// Finite value, including an extrapolated tail.
    Converged { value: f64, tail: f64 },
    Diverged { partial: f64 },
    Inconclusive { partial: f64 },
}

impl Convergence {
    pub fn value(&self) -> Option<f64> {
        match self {
            Convergence::Converged { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn partial(&self) -> f64 {
        match self {
            Convergence::Converged { value, .. } => *value,
            Convergence::Diverged { partial } | Convergence::Inconclusive { partial } => *partial,
        }
    }
}

/// Streaming classifier for a series of nonnegative panel integrals.
///
/// * divergent: running sum above [`DIVERGENCE_SUM`], a non-finite panel,
///   or panels that stop decreasing over 8 consecutive steps;
/// * convergent: geometric decay (ratio ≤ 0.9) with extrapolated tail below
///   `tol · sum`, or, once [`MAX_PANELS`] are in, a fitted power-law decay
///   in the panel index with exponent ≥ 2;
/// * inconclusive otherwise (e.g. harmonic-like decay from iterated
///   logarithms).
#[derive(Debug, Clone)]
pub struct PanelSeries {
    panels: Vec<f64>,
    sum: f64,
    tol: f64,
    verdict: Option<Convergence>,
}

impl Default for PanelSeries {
    fn default() -> Self {
        Self::new(PANEL_REL_TOL)
    }
}

impl PanelSeries {
    pub fn new(tol: f64) -> Self {
        PanelSeries {
            panels: Vec::with_capacity(MAX_PANELS),
            sum: 0.0,
            tol,
            verdict: None,
        }
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn verdict(&self) -> Option<Convergence> {
        self.verdict
    }

    /// Adds a panel; returns a verdict once one is reached.
    pub fn push(&mut self, p: f64) -> Option<Convergence> {
        if self.verdict.is_some() {
            return self.verdict;
        }
        let p = p.abs();
        self.panels.push(p);
        self.sum += p;
        let k = self.panels.len();
        if !p.is_finite() || !self.sum.is_finite() || self.sum > DIVERGENCE_SUM {
            self.verdict = Some(Convergence::Diverged { partial: self.sum });
            return self.verdict;
        }
        if k >= 8 {
            let last4 = &self.panels[k - 4..];
            if last4.iter().all(|&v| v == 0.0) {
                self.verdict = Some(Convergence::Converged {
                    value: self.sum,
                    tail: 0.0,
                });
                return self.verdict;
            }
            let prev = self.panels[k - 4];
            if prev > 0.0 && p > 0.0 {
                let r = (p / prev).powf(1.0 / 3.0);
                if r <= 0.9 {
                    let tail = p * r / (1.0 - r);
                    if tail <= self.tol * self.sum {
                        self.verdict = Some(Convergence::Converged {
                            value: self.sum + tail,
                            tail,
                        });
                        return self.verdict;
                    }
                }
            }
            if k >= 12 && p > 0.0 {
                let window = &self.panels[k - 9..];
                let non_decreasing = window.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
                if non_decreasing {
                    self.verdict = Some(Convergence::Diverged { partial: self.sum });
                    return self.verdict;
                }
            }
        }
        if k >= MAX_PANELS {
            self.verdict = Some(self.final_verdict());
        }
        self.verdict
    }

    /// Forces a verdict from the panels seen so far.
    pub fn finish(&mut self) -> Convergence {
        if let Some(v) = self.verdict {
            return v;
        }
        let v = self.final_verdict();
        self.verdict = Some(v);
        v
    }

    fn final_verdict(&self) -> Convergence {
        let k = self.panels.len();
        if k < 8 {
            return Convergence::Inconclusive { partial: self.sum };
        }
        let start = k.saturating_sub(20);
        let pts: Vec<(f64, f64)> = (start..k)
            .filter(|&i| self.panels[i] > 0.0)
            .map(|i| (((i + 1) as f64).ln(), self.panels[i].ln()))
            .collect();
        if pts.len() < 4 {
            return Convergence::Converged {
                value: self.sum,
                tail: 0.0,
            };
        }
        let s = -slope(&pts);
        if s >= 2.0 {
            let last = self.panels[k - 1];
            let tail = last * k as f64 / (s - 1.0);
            Convergence::Converged {
                value: self.sum + tail,
                tail,
            }
        } else {
            Convergence::Inconclusive { partial: self.sum }
        }
    }
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// `∫ f` over (endpoint, start], with panels halving the distance to the
/// finite `endpoint` (which may lie on either side of `start`).
pub fn improper_to_endpoint<F: Fn(f64) -> f64>(f: F, start: f64, endpoint: f64) -> Convergence {
    let mut series = PanelSeries::default();
    let d = start - endpoint;
    for k in 0..MAX_PANELS {
        let outer = endpoint + d * 0.5f64.powi(k as i32);
        let inner = endpoint + d * 0.5f64.powi(k as i32 + 1);
        let (lo, hi) = if d > 0.0 { (inner, outer) } else { (outer, inner) };
        // distances to a nonzero endpoint cannot resolve below its ulp
        if lo >= hi || (hi - lo) < 1e-13 * endpoint.abs() {
            break;
        }
        let q = panel(&f, lo, hi);
        if !q.converged && q.value.is_finite() {
            // inaccurate panel near a singularity: let the series decide
            log::debug!("panel [{lo:e}, {hi:e}] not converged (err {:e})", q.error);
        }
        if let Some(v) = series.push(q.value) {
            return v;
        }
    }
    series.finish()
}

/// `∫ f` over [start, +∞) with doubling panels; `start` must be positive.
pub fn improper_to_infinity<F: Fn(f64) -> f64>(f: F, start: f64) -> Convergence {
    debug_assert!(start > 0.0);
    let mut series = PanelSeries::default();
    for k in 0..MAX_PANELS {
        let lo = start * 2f64.powi(k as i32);
        let hi = 2.0 * lo;
        let q = panel(&f, lo, hi);
        if let Some(v) = series.push(q.value) {
            return v;
        }
    }
    series.finish()
}
