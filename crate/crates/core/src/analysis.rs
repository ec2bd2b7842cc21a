//! Total-variation distances, exponential-rate fits, and Monte Carlo
//! cross-checks of the `1/x` duality and of reversibility.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{classify_boundary, dual_measure, End, Interval, SpeedMeasure};
use crate::simulator::{
    conditional_series, martingale_expectation_probe, run_paths, sample_path, survival_curve, ChainSpec,
    McOptions, PathModel, ProbeOptions, SurvivalCurve,
};
use crate::solver::{build_grid_with, DiscreteMeasure, Grid, GridOptions, Partition};

fn same_partition(p: &DiscreteMeasure, q: &DiscreteMeasure) -> bool {
    Arc::ptr_eq(p.partition(), q.partition()) || p.partition() == q.partition()
}

/// `½ Σ |p_i - q_i|`.
pub fn tv_distance(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    if !same_partition(p, q) {
        return Err(Error::GridMismatch);
    }
    Ok(0.5 * p.weights().iter().zip(q.weights()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Least-squares fit of `ln v = intercept - rate · t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Fits the decay rate of `values` over the points with `t` in `window`.
pub fn fit_exponential_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::InvalidArgument("times and values differ in length".into()));
    }
    let mut pts = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveValues { time: t, value: v });
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < 3 {
        return Err(Error::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RateFit {
        rate: -slope,
        intercept,
        r_squared,
        window,
        n_points: pts.len(),
    })
}

/// `λ₀` as the decay rate of `p̂(t)` over `window`.
pub fn lambda0_from_survival(curve: &SurvivalCurve, window: (f64, f64)) -> Result<RateFit> {
    fit_exponential_rate(&curve.times, &curve.estimate(), window)
}

/// TV distance to a reference law over time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvSeries {
    pub times: Vec<f64>,
    pub tv: Vec<f64>,
    pub survivors: Vec<u64>,
    /// Width of the widest bin.
    pub bin_width: f64,
}

impl TvSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,tv\n");
        for (t, v) in self.times.iter().zip(&self.tv) {
            let _ = writeln!(s, "{t:.16e},{v:.16e}");
        }
        s
    }

    pub fn fit(&self, window: (f64, f64)) -> Result<RateFit> {
        fit_exponential_rate(&self.times, &self.tv, window)
    }
}

/// `TV(P_x0(X_t ∈ · | t < τ), reference)` at each time, both binned on the
/// reference's partition.
pub fn tv_decay_series(
    model: &PathModel,
    x0: f64,
    times: &[f64],
    reference: &DiscreteMeasure,
    opts: &McOptions,
) -> Result<TvSeries> {
    let bins = reference.partition().clone();
    let stats = conditional_series(model, x0, times, &bins, opts)?;
    let mut tv = Vec::with_capacity(stats.len());
    for s in &stats {
        tv.push(tv_distance(&s.distribution, reference)?);
    }
    let bin_width = bins.edges().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(TvSeries {
        times: times.to_vec(),
        tv,
        survivors: stats.iter().map(|s| s.n_survived).collect(),
        bin_width,
    })
}

fn z_score(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let s = (sa * sa + sb * sb).sqrt();
    let d = a - b;
    if s > 0.0 {
        d / s
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityRow {
    pub x: f64,
    /// `P̂_x(t < τ) / x` under `m`.
    pub lhs: f64,
    pub lhs_se: f64,
    /// `Ê_{1/x}(Z_t)` under the dual measure.
    pub rhs: f64,
    pub rhs_se: f64,
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub t: f64,
    pub paths: usize,
    pub rows: Vec<DualityRow>,
}

impl DualityReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z_score.abs()).fold(0.0, f64::max)
    }
}

/// Grids used by [`duality_crosscheck`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityOptions {
    pub x_cells: usize,
    /// Reflecting truncation for `X`; defaults to `4 max x + 10 √t`.
    pub x_truncation: Option<f64>,
    pub probe: ProbeOptions,
}

impl Default for DualityOptions {
    fn default() -> Self {
        DualityOptions {
            x_cells: 400,
            x_truncation: None,
            probe: ProbeOptions::default(),
        }
    }
}

/// Compares `P_x(t < τ)/x` under `m` with `E_{1/x}(Z_t)` under the dual.
pub fn duality_crosscheck(
    m: &SpeedMeasure,
    x_list: &[f64],
    t: f64,
    opts: &McOptions,
    dopts: &DualityOptions,
) -> Result<DualityReport> {
    let dual = dual_measure(m)?;
    if !classify_boundary(m, End::Lower)?.kind.is_accessible() {
        return Err(Error::UnsupportedDomain("the lower end of m must be accessible".into()));
    }
    if x_list.is_empty() || x_list.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument("starting points must be positive".into()));
    }
    let x_max = x_list.iter().cloned().fold(0.0, f64::max);
    let r = dopts.x_truncation.unwrap_or(4.0 * x_max + 10.0 * t.sqrt());
    let grid = build_grid_with(
        m,
        dopts.x_cells,
        Some(r),
        &GridOptions {
            allow_non_entrance: true,
            ..Default::default()
        },
    )?;
    let model = PathModel::chain(ChainSpec::from_grid(&grid)?);
    let z_list: Vec<f64> = x_list.iter().map(|x| 1.0 / x).collect();
    let rhs = martingale_expectation_probe(&dual, &z_list, t, &opts.with_offset(opts.stream_offset + (1u64 << 40)), &dopts.probe)?;
    let mut rows = Vec::with_capacity(x_list.len());
    for (j, (&x, q)) in x_list.iter().zip(&rhs).enumerate() {
        let o = opts.with_offset(opts.stream_offset + (j * opts.paths) as u64);
        let c = survival_curve(&model, x, &[t], &o)?;
        let (p, se) = (c.estimate()[0], c.stderr()[0]);
        rows.push(DualityRow {
            x,
            lhs: p / x,
            lhs_se: se / x,
            rhs: q.mean,
            rhs_se: q.se,
            z_score: z_score(p / x, se / x, q.mean, q.se),
        });
    }
    Ok(DualityReport {
        t,
        paths: opts.paths,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReversibilityReport {
    /// `∫ 1_F(x) P_x(X_t ∈ G, t < τ) m(dx)`.
    pub lhs: f64,
    pub lhs_se: f64,
    /// The same with `F` and `G` swapped.
    pub rhs: f64,
    pub rhs_se: f64,
    pub z_score: f64,
    pub t: f64,
}

/// Chain grid used by [`reversibility_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReversibilityOptions {
    pub cells: usize,
    /// Truncation for half-line supports.
    pub truncation: Option<f64>,
}

impl Default for ReversibilityOptions {
    fn default() -> Self {
        ReversibilityOptions {
            cells: 100,
            truncation: None,
        }
    }
}

/// Nodes of `grid` inside the closed interval `s`.
fn nodes_in(grid: &Grid, s: Interval) -> Vec<usize> {
    let x = grid.nodes();
    (0..x.len()).filter(|&i| x[i] >= s.left && x[i] <= s.right).collect()
}

/// `Σ_{i∈F} m_i P̂_{x_i}(X_t ∈ G)`: paths split evenly over the nodes of `F`.
fn weighted_transition(
    grid: &Grid,
    model: &PathModel,
    from: &[usize],
    to: Interval,
    t: f64,
    opts: &McOptions,
) -> Result<(f64, f64)> {
    let per = (opts.paths / from.len()).max(1);
    let (mut v, mut var) = (0.0, 0.0);
    for (k, &i) in from.iter().enumerate() {
        let o = McOptions {
            paths: per,
            stream_offset: opts.stream_offset + (k * per) as u64,
            ..*opts
        };
        let hits = run_paths(
            &o,
            || 0u64,
            |acc, idx| {
                let r = sample_path(model, grid.nodes()[i], &[t], o.seed, idx)?;
                if let Some(Some(x)) = r.snapshots.first() {
                    *acc += (to.left <= *x && *x <= to.right) as u64;
                }
                Ok(())
            },
            |a, b| *a += b,
        )?;
        let p = hits as f64 / per as f64;
        let w = grid.cell_mass()[i];
        v += w * p;
        var += w * w * p * (1.0 - p) / per as f64;
    }
    Ok((v, var.sqrt()))
}

/// Monte Carlo check of `∫ f P_t g dm = ∫ g P_t f dm` for indicators of
/// compact intervals, on the chain of an `m`-grid (nodes in each set carry
/// their cell masses).
pub fn reversibility_check(
    m: &SpeedMeasure,
    f_support: Interval,
    g_support: Interval,
    t: f64,
    opts: &McOptions,
    ropts: &ReversibilityOptions,
) -> Result<ReversibilityReport> {
    let s = m.support();
    for (name, iv) in [("f", f_support), ("g", g_support)] {
        if !(iv.is_bounded() && iv.left > s.left && (iv.right < s.right)) {
            return Err(Error::InvalidArgument(format!(
                "{name} support {iv} must be a compact subinterval of {s}"
            )));
        }
    }
    let gopts = GridOptions {
        allow_non_entrance: true,
        ..Default::default()
    };
    let grid = build_grid_with(m, ropts.cells, ropts.truncation, &gopts)?;
    let model = PathModel::chain(ChainSpec::from_grid(&grid)?.with_start_rule(crate::simulator::StartRule::Nearest));
    let f_nodes = nodes_in(&grid, f_support);
    let g_nodes = nodes_in(&grid, g_support);
    if f_nodes.is_empty() || g_nodes.is_empty() {
        return Err(Error::InvalidArgument("a support contains no grid node; refine the grid".into()));
    }
    let (lhs, lhs_se) = weighted_transition(&grid, &model, &f_nodes, g_support, t, opts)?;
    let (rhs, rhs_se) = weighted_transition(
        &grid,
        &model,
        &g_nodes,
        f_support,
        t,
        &opts.with_offset(opts.stream_offset + (1u64 << 40)),
    )?;
    Ok(ReversibilityReport {
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        z_score: z_score(lhs, lhs_se, rhs, rhs_se),
        t,
    })
}

/// Partition of `[lo, hi]` into `bins` equal bins.
pub fn uniform_bins(lo: f64, hi: f64, bins: usize) -> Result<Arc<Partition>> {
    Ok(Arc::new(Partition::uniform(lo, hi, bins)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(a: f64, b: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(Arc::new(Partition::uniform(0.0, 1.0, 2).unwrap()), vec![a, b]).unwrap()
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&two(0.5, 0.5), &two(0.5, 0.5)).unwrap(), 0.0);
        assert_eq!(tv_distance(&two(1.0, 0.0), &two(0.0, 1.0)).unwrap(), 1.0);
        assert!((tv_distance(&two(0.6, 0.4), &two(0.5, 0.5)).unwrap() - 0.1).abs() < 1e-15);
        let other = DiscreteMeasure::new(Arc::new(Partition::uniform(0.0, 2.0, 2).unwrap()), vec![0.5, 0.5]).unwrap();
        assert!(matches!(tv_distance(&two(0.5, 0.5), &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn rate_fit_examples() {
        let t = [1.0f64, 2.0, 3.0];
        let v: Vec<f64> = t.iter().map(|t| (-2.0 * *t as f64).exp()).collect();
        let f = fit_exponential_rate(&t, &v, (0.0, 10.0)).unwrap();
        assert!((f.rate - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let f = fit_exponential_rate(&t, &[3.0; 3], (0.0, 10.0)).unwrap();
        assert_eq!(f.rate, 0.0);
        assert!(matches!(
            fit_exponential_rate(&t, &[1.0, 0.0, 1.0], (0.0, 10.0)),
            Err(Error::NonPositiveValues { .. })
        ));
        assert!(matches!(fit_exponential_rate(&t, &v, (1.5, 10.0)), Err(Error::TooFewPoints(2))));
    }

    #[test]
    fn rate_fit_shift_and_scale_invariance() {
        let t = [0.3, 0.4, 0.5, 0.6];
        let v = [0.9, 0.5, 0.31, 0.2];
        let a = fit_exponential_rate(&t, &v, (0.0, 1.0)).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| 7.0 * x).collect();
        let b = fit_exponential_rate(&t, &scaled, (0.0, 1.0)).unwrap();
        assert!((a.rate - b.rate).abs() < 1e-12);
        assert!((b.intercept - a.intercept - 7f64.ln()).abs() < 1e-12);
        let shifted: Vec<f64> = t.iter().map(|x| x + 5.0).collect();
        let c = fit_exponential_rate(&shifted, &v, (5.0, 6.0)).unwrap();
        assert!((a.rate - c.rate).abs() < 1e-12);
    }

    #[test]
    fn reversibility_rejects_unbounded_supports() {
        let m = SpeedMeasure::lebesgue(Interval::new(0.0, 1.0).unwrap(), vec![]).unwrap();
        let r = reversibility_check(
            &m,
            Interval::new(0.0, 0.5).unwrap(),
            Interval::new(0.6, 0.8).unwrap(),
            0.5,
            &McOptions::new(10, 1),
            &ReversibilityOptions::default(),
        );
        assert!(r.is_err());
    }
}
