use std::cell::Cell;
use std::fmt::Write as _;

use super::{Density, Interval, SpeedMeasure};
use crate::error::{Error, Result};
use crate::expr::{Expr, ExprError};
use crate::quadrature::{self, Convergence, PanelSeries, MAX_PANELS};

const REL_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy)]
pub struct ScaleOptions {
    /// Number of geometric knots.
    pub knots: usize,
    /// Knots span `2^-octaves .. 2^octaves` times the reference distance.
    pub octaves: f64,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        ScaleOptions {
            knots: 512,
            octaves: 30.0,
        }
    }
}

/// Scale function stored on knots with a monotone cubic Hermite
/// interpolant; `s(lower) = 0`.
#[derive(Debug, Clone)]
pub struct ScaleFunction {
    lower: f64,
    y: Vec<f64>,
    s: Vec<f64>,
    /// Exact `s'` at the knots.
    ds: Vec<f64>,
    /// Hermite tangents after the monotonicity limiter.
    tangent: Vec<f64>,
    /// `J(y) = ∫_c^y 2μ/σ²` at the knots.
    j: Vec<f64>,
}

fn signed_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a < b {
        quadrature::integrate(f, a, b, REL_TOL, 1e-300).value
    } else {
        -quadrature::integrate(f, b, a, REL_TOL, 1e-300).value
    }
}

impl ScaleFunction {
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.y.iter().copied().zip(self.s.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    fn locate(v: &[f64], t: f64) -> usize {
        v.partition_point(|&u| u <= t).clamp(1, v.len() - 1) - 1
    }

    fn hermite(&self, k: usize, t: f64) -> f64 {
        let h = self.y[k + 1] - self.y[k];
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.s[k] + h10 * h * self.tangent[k] + h01 * self.s[k + 1] + h11 * h * self.tangent[k + 1]
    }

    /// `s(y)`; linear below the first knot (toward `s(lower) = 0`) and
    /// beyond the last knot.
    pub fn eval(&self, y: f64) -> f64 {
        let n = self.y.len();
        if y <= self.y[0] {
            return self.s[0] * (y - self.lower) / (self.y[0] - self.lower);
        }
        if y >= self.y[n - 1] {
            return self.s[n - 1] + self.ds[n - 1] * (y - self.y[n - 1]);
        }
        let k = Self::locate(&self.y, y);
        self.hermite(k, (y - self.y[k]) / (self.y[k + 1] - self.y[k]))
    }

    /// `s⁻¹(x)` by bisection on the monotone interpolant.
    pub fn inverse(&self, x: f64) -> f64 {
        let n = self.y.len();
        if x <= self.s[0] {
            return self.lower + (self.y[0] - self.lower) * x / self.s[0];
        }
        if x >= self.s[n - 1] {
            return self.y[n - 1] + (x - self.s[n - 1]) / self.ds[n - 1];
        }
        let k = Self::locate(&self.s, x);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if self.hermite(k, mid) < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.y[k] + 0.5 * (lo + hi) * (self.y[k + 1] - self.y[k])
    }

    /// CSV with header `y,s` and one row per knot.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,s\n");
        for (y, s) in self.knots() {
            let _ = writeln!(out, "{y:.16e},{s:.16e}");
        }
        out
    }

    fn nearest_knot(&self, y: f64) -> usize {
        let k = Self::locate(&self.y, y);
        if k + 1 < self.y.len() && (self.y[k + 1] - y).abs() < (y - self.y[k]).abs() {
            k + 1
        } else {
            k
        }
    }

    fn limit_tangents(&mut self) {
        let n = self.y.len();
        self.tangent = self.ds.clone();
        for k in 0..n - 1 {
            let delta = (self.s[k + 1] - self.s[k]) / (self.y[k + 1] - self.y[k]);
            let a = self.tangent[k] / delta;
            let b = self.tangent[k + 1] / delta;
            let r = a * a + b * b;
            if r > 9.0 {
                let t = 3.0 / r.sqrt();
                self.tangent[k] = t * a * delta;
                self.tangent[k + 1] = t * b * delta;
            }
        }
    }
}

struct Coeffs<'a> {
    sigma: &'a Expr,
    mu: &'a Expr,
    bad: Cell<Option<(f64, f64)>>,
}

impl Coeffs<'_> {
    /// `2μ/σ²`, recording the first point where σ is not positive or the
    /// ratio is not finite.
    fn g(&self, y: f64) -> f64 {
        let s = self.sigma.eval(y);
        let v = 2.0 * self.mu.eval(y) / (s * s);
        if !(s > 0.0 && s.is_finite() && v.is_finite()) {
            if self.bad.get().is_none() {
                self.bad.set(Some((y, s)));
            }
            return 0.0;
        }
        v
    }

    fn check(&self) -> Result<()> {
        match self.bad.get() {
            None => Ok(()),
            Some((x, value)) => Err(Error::Expression(ExprError::Eval {
                expr: format!("sigma = {}, mu = {}", self.sigma, self.mu),
                x,
                value,
            })),
        }
    }
}

/// Sums `∫ exp(-J)` over a panel sequence, carrying `J` from panel to panel.
/// `toward_lower` walks downward with `J` known at the upper edge.
fn scale_series(
    co: &Coeffs,
    j_start: f64,
    edges: impl Fn(usize) -> (f64, f64),
    toward_lower: bool,
) -> Convergence {
    let mut series = PanelSeries::default();
    let mut j = j_start;
    for k in 0..MAX_PANELS {
        let (lo, hi) = edges(k);
        if !(lo < hi) {
            break;
        }
        let p = if toward_lower {
            let jh = j;
            quadrature::panel(|u| (-(jh - signed_integral(|v| co.g(v), u, hi))).exp(), lo, hi).value
        } else {
            let jl = j;
            quadrature::panel(|u| (-(jl + signed_integral(|v| co.g(v), lo, u))).exp(), lo, hi).value
        };
        let dj = signed_integral(|v| co.g(v), lo, hi);
        j = if toward_lower { j - dj } else { j + dj };
        if let Some(v) = series.push(p) {
            return v;
        }
    }
    series.finish()
}

/// Natural-scale form of `dY = σ(Y) dB + μ(Y) dt` on `domain`.
///
/// Returns the scale function `s` (anchored at `s(a) = 0`, derivative
/// `exp(-∫_c^y 2μ/σ²)`) and the speed measure of `X = s(Y)`, whose density
/// at `x = s(y)` is `2 / (s'(y)² σ(y)²)`.
pub fn scale_transform(
    sigma: &Expr,
    mu: &Expr,
    domain: Interval,
    c: f64,
    opts: &ScaleOptions,
) -> Result<(ScaleFunction, SpeedMeasure)> {
    let a = domain.left;
    if !(c >= a && c < domain.right) {
        return Err(Error::InvalidInterval(format!("anchor {c} outside {domain}")));
    }
    if opts.knots < 8 {
        return Err(Error::InvalidGrid("scale function needs at least 8 knots".into()));
    }
    let co = Coeffs {
        sigma,
        mu,
        bad: Cell::new(None),
    };
    let cs = if domain.contains_interior(c) {
        c
    } else if domain.is_bounded() {
        0.5 * (a + domain.right)
    } else {
        a + 1.0
    };
    let j_cs = if cs == c {
        0.0
    } else {
        // the panel series only sums magnitudes: split into signs
        let pos = quadrature::improper_to_endpoint(|v| co.g(v).max(0.0), cs, a);
        let neg = quadrature::improper_to_endpoint(|v| (-co.g(v)).max(0.0), cs, a);
        match (pos.value(), neg.value()) {
            // J(cs) = ∫_c^cs g with c = a
            (Some(p), Some(n)) => p - n,
            _ => {
                return Err(Error::UnsupportedDomain(format!(
                    "drift ratio 2mu/sigma^2 is not integrable at the anchor {c}"
                )))
            }
        }
    };
    co.check()?;

    let d = cs - a;
    let lower = scale_series(&co, j_cs, |k| (a + d * 0.5f64.powi(k as i32 + 1), a + d * 0.5f64.powi(k as i32)), true);
    co.check()?;
    let s_cs = match lower {
        Convergence::Converged { value, .. } => value,
        Convergence::Diverged { .. } => return Err(Error::ScaleNotNormalizable),
        Convergence::Inconclusive { partial } => {
            return Err(Error::QuadratureInconclusive(format!(
                "scale function at the lower end undecided (partial {partial:e})"
            )))
        }
    };

    let upper = if domain.is_bounded() {
        let e = domain.right - cs;
        let b = domain.right;
        scale_series(&co, j_cs, |k| (b - e * 0.5f64.powi(k as i32), b - e * 0.5f64.powi(k as i32 + 1)), false)
    } else {
        scale_series(&co, j_cs, |k| (a + d * 2f64.powi(k as i32), a + d * 2f64.powi(k as i32 + 1)), false)
    };
    co.check()?;
    match upper {
        Convergence::Converged { value, .. } => return Err(Error::UpperEndReachable(s_cs + value)),
        Convergence::Inconclusive { partial } => {
            return Err(Error::QuadratureInconclusive(format!(
                "scale function at the upper end undecided (partial {:e})",
                s_cs + partial
            )))
        }
        Convergence::Diverged { .. } => {}
    }

    // knot placement
    let n = opts.knots;
    let mut ys = Vec::with_capacity(n);
    if domain.is_bounded() {
        let w = domain.right - a;
        let half = n / 2;
        for k in 0..half {
            let t = -opts.octaves * (1.0 - k as f64 / half as f64);
            ys.push(a + 0.5 * w * 2f64.powf(t));
        }
        for k in (0..n - half).rev() {
            let t = -opts.octaves * (1.0 - k as f64 / (n - half) as f64);
            ys.push(domain.right - 0.5 * w * 2f64.powf(t));
        }
        ys.dedup();
    } else {
        for k in 0..n {
            let t = -opts.octaves + 2.0 * opts.octaves * k as f64 / (n - 1) as f64;
            ys.push(a + d * 2f64.powf(t));
        }
    }

    // J on the knots, marched outward from the anchor
    let p = ys.partition_point(|&y| y <= cs);
    let mut js = vec![f64::NAN; ys.len()];
    let mut j0 = j_cs;
    let mut y0 = cs;
    for k in p..ys.len() {
        j0 += signed_integral(|v| co.g(v), y0, ys[k]);
        y0 = ys[k];
        js[k] = j0;
    }
    let (mut j0, mut y0) = (j_cs, cs);
    for k in (0..p).rev() {
        j0 += signed_integral(|v| co.g(v), y0, ys[k]);
        y0 = ys[k];
        js[k] = j0;
    }
    co.check()?;
    let usable = |y: f64, j: f64, s: f64| -> bool {
        let ds = (-j).exp();
        let sg = sigma.eval(y);
        let dens = 2.0 / (ds * ds * sg * sg);
        s.is_finite() && s > 0.0 && s < 1e300 && ds.is_finite() && ds > 0.0 && dens.is_finite() && dens > 0.0
    };
    // first knot whose s' is representable
    let first = match (0..ys.len()).find(|&k| js[k].is_finite() && (-js[k]).exp() > 0.0 && (-js[k]).exp().is_finite()) {
        Some(k) => k,
        None => return Err(Error::InvalidGrid("scale derivative not representable on the knots".into())),
    };
    // s at the first knot directly as an improper integral, then upward
    // accumulation without cancellation
    let d0 = ys[first] - a;
    let s_first = match scale_series(&co, js[first], |k| (a + d0 * 0.5f64.powi(k as i32 + 1), a + d0 * 0.5f64.powi(k as i32)), true) {
        Convergence::Converged { value, .. } => value,
        _ => s_cs * 0.0,
    };
    let mut knots: Vec<(f64, f64, f64)> = Vec::new();
    if usable(ys[first], js[first], s_first) {
        knots.push((ys[first], js[first], s_first));
    }
    let (mut y0, mut j0, mut s0) = (ys[first], js[first], s_first);
    for k in first + 1..ys.len() {
        let jl = j0;
        let ds = signed_integral(|u| (-(jl + signed_integral(|v| co.g(v), y0, u))).exp(), y0, ys[k]);
        let s1 = s0 + ds;
        if !usable(ys[k], js[k], s1) || s1 <= s0 {
            if knots.is_empty() {
                (y0, j0, s0) = (ys[k], js[k], s1);
                continue;
            }
            break;
        }
        knots.push((ys[k], js[k], s1));
        (y0, j0, s0) = (ys[k], js[k], s1);
    }
    co.check()?;
    if knots.len() < 4 {
        return Err(Error::InvalidGrid("scale function knot grid collapsed".into()));
    }

    let mut sf = ScaleFunction {
        lower: a,
        y: knots.iter().map(|k| k.0).collect(),
        s: knots.iter().map(|k| k.2).collect(),
        ds: knots.iter().map(|k| (-k.1).exp()).collect(),
        tangent: Vec::new(),
        j: knots.iter().map(|k| k.1).collect(),
    };
    sf.limit_tangents();

    let table = sf.clone();
    let (sig, drift) = (sigma.clone(), mu.clone());
    let density = Density::from_fn(format!("scale pushforward of sigma = {sigma}, mu = {mu}"), move |x| {
        let y = table.inverse(x);
        let k = table.nearest_knot(y);
        let g = |v: f64| {
            let s = sig.eval(v);
            2.0 * drift.eval(v) / (s * s)
        };
        let j = table.j[k] + signed_integral(g, table.y[k], y);
        let ds = (-j).exp();
        let s = sig.eval(y);
        2.0 / (ds * ds * s * s)
    });
    let m = SpeedMeasure::new(Interval::half_line(0.0), density, vec![])?;
    Ok((sf, m))
}
