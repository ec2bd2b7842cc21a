use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{sample_path, ChainSpec, PathModel, PathRecord};
use crate::error::{Error, Result};
use crate::measure::{classify_boundary, End, SpeedMeasure};
use crate::solver::{build_grid_with, DiscreteMeasure, GridOptions, Partition, Spacing};

/// Paths per work unit; blocks are reduced in index order.
const BLOCK: usize = 4096;

/// Sample size, master seed and worker count of a Monte Carlo run.
/// Results depend on `(paths, seed, stream_offset)` only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McOptions {
    pub paths: usize,
    pub seed: u64,
    /// 0 uses the global rayon pool.
    pub workers: usize,
    /// Index of the first path stream.
    pub stream_offset: u64,
}

impl McOptions {
    pub fn new(paths: usize, seed: u64) -> McOptions {
        McOptions {
            paths,
            seed,
            workers: 0,
            stream_offset: 0,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> McOptions {
        self.workers = workers;
        self
    }

    pub fn with_offset(mut self, offset: u64) -> McOptions {
        self.stream_offset = offset;
        self
    }
}

/// Runs `per_path` on every path index, each block of paths folding into
/// its own accumulator, then merges the blocks in order.
pub fn run_paths<A, I, F, M>(opts: &McOptions, init: I, per_path: F, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, u64) -> Result<()> + Sync,
    M: Fn(&mut A, A),
{
    let n = opts.paths;
    let blocks = n.div_ceil(BLOCK);
    let work = || {
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = init();
                for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                    per_path(&mut acc, opts.stream_offset + i as u64)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<A>>>()
    };
    let parts = if opts.workers == 0 {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {} workers: {e}", opts.workers)))?
            .install(work)?
    };
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    Ok(total)
}

/// Step counts of a run; `step_too_coarse` when σ changed by more than 50%
/// within a step on more than 1% of the Euler steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SimDiagnostics {
    pub steps: u64,
    pub coarse_steps: u64,
    pub jumps: u64,
    pub step_too_coarse: bool,
}

impl SimDiagnostics {
    fn add(&mut self, r: &PathRecord) {
        self.steps += r.steps;
        self.coarse_steps += r.coarse_steps;
        self.jumps += r.jumps;
    }

    fn merge(&mut self, o: SimDiagnostics) {
        self.steps += o.steps;
        self.coarse_steps += o.coarse_steps;
        self.jumps += o.jumps;
    }

    fn finish(mut self) -> SimDiagnostics {
        self.step_too_coarse = self.coarse_steps as f64 > 0.01 * self.steps as f64;
        if self.step_too_coarse {
            log::warn!(
                "StepTooCoarse: sigma varied by more than 50% on {} of {} steps",
                self.coarse_steps,
                self.steps
            );
        }
        self
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("no observation times".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("times must be finite, nonnegative and increasing".into()));
    }
    Ok(())
}

/// Survivor counts at increasing times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub survived: Vec<u64>,
    pub total: u64,
    pub diagnostics: SimDiagnostics,
}

impl SurvivalCurve {
    pub fn estimate(&self) -> Vec<f64> {
        self.survived.iter().map(|&s| s as f64 / self.total as f64).collect()
    }

    /// `sqrt(p̂(1 - p̂)/N)` per time.
    pub fn stderr(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.estimate().iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,survived,total,p,se\n");
        for (((t, k), p), e) in self.times.iter().zip(&self.survived).zip(self.estimate()).zip(self.stderr()) {
            let _ = writeln!(s, "{t:.16e},{k},{},{p:.16e},{e:.16e}", self.total);
        }
        s
    }
}

/// Estimates `P_x0(t < τ)` at each of `times`.
pub fn survival_curve(model: &PathModel, x0: f64, times: &[f64], opts: &McOptions) -> Result<SurvivalCurve> {
    check_times(times)?;
    let k = times.len();
    let (counts, diag) = run_paths(
        opts,
        || (vec![0u64; k], SimDiagnostics::default()),
        |acc, idx| {
            let r = sample_path(model, x0, times, opts.seed, idx)?;
            for (j, t) in times.iter().enumerate() {
                if !r.end.absorbed || r.end.time > *t {
                    acc.0[j] += 1;
                }
            }
            acc.1.add(&r);
            Ok(())
        },
        |a, b| {
            for (x, y) in a.0.iter_mut().zip(b.0) {
                *x += y;
            }
            a.1.merge(b.1);
        },
    )?;
    Ok(SurvivalCurve {
        times: times.to_vec(),
        survived: counts,
        total: opts.paths as u64,
        diagnostics: diag.finish(),
    })
}

/// Binned law of the surviving paths at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStats {
    pub t: f64,
    /// Normalized bin weights (all zero when nothing survived).
    pub distribution: DiscreteMeasure,
    pub counts: Vec<u64>,
    pub n_total: u64,
    pub n_survived: u64,
    /// Mean position of the survivors.
    pub mean_position: f64,
    /// Set when fewer than 100 paths survived.
    pub too_few_survivors: bool,
    pub diagnostics: SimDiagnostics,
}

impl PathStats {
    pub fn stderr(&self) -> Vec<f64> {
        let n = self.n_survived.max(1) as f64;
        self.distribution.weights().iter().map(|w| (w * (1.0 - w) / n).sqrt()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left,bin_right,weight,se\n");
        let e = self.distribution.partition().edges();
        for (i, (w, se)) in self.distribution.weights().iter().zip(self.stderr()).enumerate() {
            let _ = writeln!(s, "{:.16e},{:.16e},{w:.16e},{se:.16e}", e[i], e[i + 1]);
        }
        s
    }
}

/// Conditional laws `P_x0(X_t ∈ · | t < τ)` at each of `times`, binned on
/// `bins` (positions outside the bins go to the outer bins).
pub fn conditional_series(
    model: &PathModel,
    x0: f64,
    times: &[f64],
    bins: &Arc<Partition>,
    opts: &McOptions,
) -> Result<Vec<PathStats>> {
    check_times(times)?;
    let (k, b) = (times.len(), bins.len());
    let (counts, sums, diag) = run_paths(
        opts,
        || (vec![vec![0u64; b]; k], vec![0.0f64; k], SimDiagnostics::default()),
        |acc, idx| {
            let r = sample_path(model, x0, times, opts.seed, idx)?;
            for (j, s) in r.snapshots.iter().enumerate() {
                if let Some(x) = s {
                    acc.0[j][bins.locate(*x)] += 1;
                    acc.1[j] += x;
                }
            }
            acc.2.add(&r);
            Ok(())
        },
        |a, o| {
            for (row, orow) in a.0.iter_mut().zip(o.0) {
                for (x, y) in row.iter_mut().zip(orow) {
                    *x += y;
                }
            }
            for (x, y) in a.1.iter_mut().zip(o.1) {
                *x += y;
            }
            a.2.merge(o.2);
        },
    )?;
    let diag = diag.finish();
    let mut out = Vec::with_capacity(k);
    for (j, row) in counts.into_iter().enumerate() {
        let ns: u64 = row.iter().sum();
        let w: Vec<f64> = row.iter().map(|&c| if ns > 0 { c as f64 / ns as f64 } else { 0.0 }).collect();
        let distribution = DiscreteMeasure::new(bins.clone(), w)?;
        if ns < 100 {
            log::warn!("TooFewSurvivors: {ns} of {} paths survive to t = {}", opts.paths, times[j]);
        }
        out.push(PathStats {
            t: times[j],
            distribution,
            counts: row,
            n_total: opts.paths as u64,
            n_survived: ns,
            mean_position: if ns > 0 { sums[j] / ns as f64 } else { f64::NAN },
            too_few_survivors: ns < 100,
            diagnostics: diag,
        });
    }
    Ok(out)
}

pub fn conditional_distribution(
    model: &PathModel,
    x0: f64,
    t: f64,
    bins: &Arc<Partition>,
    opts: &McOptions,
) -> Result<PathStats> {
    Ok(conditional_series(model, x0, &[t], bins, opts)?.remove(0))
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: u64,
    /// Paths still alive at the time cap (counted at the cap).
    pub censored: u64,
}

impl MeanEstimate {
    fn from_sums(s1: f64, s2: f64, n: u64, censored: u64) -> MeanEstimate {
        let nf = n as f64;
        let mean = s1 / nf;
        let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
        MeanEstimate {
            mean,
            se: (var / nf).sqrt(),
            n,
            censored,
        }
    }
}

/// Mean of `τ ∧ t_cap`.
pub fn mean_absorption_time(model: &PathModel, x0: f64, t_cap: f64, opts: &McOptions) -> Result<MeanEstimate> {
    let (s1, s2, c) = run_paths(
        opts,
        || (0.0f64, 0.0f64, 0u64),
        |acc, idx| {
            let r = sample_path(model, x0, &[t_cap], opts.seed, idx)?;
            let t = r.end.time;
            acc.0 += t;
            acc.1 += t * t;
            acc.2 += (!r.end.absorbed) as u64;
            Ok(())
        },
        |a, b| {
            a.0 += b.0;
            a.1 += b.1;
            a.2 += b.2;
        },
    )?;
    Ok(MeanEstimate::from_sums(s1, s2, opts.paths as u64, c))
}

/// Which end absorbed each path by `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitStats {
    pub lower: u64,
    pub upper: u64,
    pub survived: u64,
    pub total: u64,
    /// Mean of `X_{t_end ∧ τ}` (absorbed paths at their end point).
    pub stopped_mean: MeanEstimate,
}

impl ExitStats {
    /// Fraction absorbed at the lower end and its standard error.
    pub fn p_lower(&self) -> (f64, f64) {
        let n = self.total as f64;
        let p = self.lower as f64 / n;
        (p, (p * (1.0 - p) / n).sqrt())
    }
}

pub fn exit_statistics(model: &PathModel, x0: f64, t_end: f64, opts: &McOptions) -> Result<ExitStats> {
    let (counts, s1, s2) = run_paths(
        opts,
        || ([0u64; 3], 0.0f64, 0.0f64),
        |acc, idx| {
            let r = sample_path(model, x0, &[t_end], opts.seed, idx)?;
            match r.end.exit {
                Some(End::Lower) => acc.0[0] += 1,
                Some(End::Upper) => acc.0[1] += 1,
                None => acc.0[2] += 1,
            }
            acc.1 += r.end.position;
            acc.2 += r.end.position * r.end.position;
            Ok(())
        },
        |a, b| {
            for j in 0..3 {
                a.0[j] += b.0[j];
            }
            a.1 += b.1;
            a.2 += b.2;
        },
    )?;
    Ok(ExitStats {
        lower: counts[0],
        upper: counts[1],
        survived: counts[2],
        total: opts.paths as u64,
        stopped_mean: MeanEstimate::from_sums(s1, s2, opts.paths as u64, counts[2]),
    })
}

/// Grid used to simulate `Z` in [`martingale_expectation_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeOptions {
    pub cells: usize,
    /// Reflecting upper end; defaults to `8 max z`.
    pub truncation: Option<f64>,
    /// Reflecting lower cutoff used when `0` is inaccessible; defaults to
    /// `10^-3 min z`.
    pub cutoff: Option<f64>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            cells: 256,
            truncation: None,
            cutoff: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbePoint {
    pub z: f64,
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

/// Chain for the diffusion `Z` with speed measure `m̃` on `(0, ∞)`.
pub fn probe_chain(m_tilde: &SpeedMeasure, z_max: f64, z_min: f64, probe: &ProbeOptions) -> Result<ChainSpec> {
    let r = probe.truncation.unwrap_or(8.0 * z_max);
    let accessible = classify_boundary(m_tilde, End::Lower).map(|c| c.kind.is_accessible()).unwrap_or(false);
    let reflect_below = if accessible {
        None
    } else {
        Some(probe.cutoff.unwrap_or(1e-3 * z_min))
    };
    let opts = GridOptions {
        spacing: Spacing::Stretched {
            min_cell: r * 1e-12,
            max_cell: None,
        },
        allow_non_entrance: true,
        reflect_below,
    };
    let grid = build_grid_with(m_tilde, probe.cells, Some(r), &opts)?;
    if z_max >= r {
        return Err(Error::TruncationTooSmall {
            tail: grid.tail_bound(),
            bulk: grid.bulk(),
        });
    }
    ChainSpec::from_grid(&grid)
}

/// Monte Carlo `E_z(Z_t)` for the natural-scale diffusion with speed
/// measure `m̃`; paths absorbed at 0 contribute 0.
pub fn martingale_expectation_probe(
    m_tilde: &SpeedMeasure,
    z_list: &[f64],
    t: f64,
    opts: &McOptions,
    probe: &ProbeOptions,
) -> Result<Vec<ProbePoint>> {
    if z_list.is_empty() || z_list.iter().any(|z| !(*z > 0.0 && z.is_finite())) {
        return Err(Error::InvalidArgument("starting points must be positive".into()));
    }
    let s = m_tilde.support();
    if s.left != 0.0 || s.is_bounded() {
        return Err(Error::UnsupportedDomain(format!("the probe needs (0, inf), got {s}")));
    }
    let z_max = z_list.iter().cloned().fold(0.0, f64::max);
    if let Some(r) = probe.truncation {
        if z_max >= r {
            return Err(Error::TruncationTooSmall { tail: z_max, bulk: r });
        }
    }
    let z_min = z_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let chain = probe_chain(m_tilde, z_max, z_min, probe)?;
    let model = PathModel::chain(chain);
    let mut out = Vec::with_capacity(z_list.len());
    for (j, &z) in z_list.iter().enumerate() {
        let o = opts.with_offset(opts.stream_offset + (j * opts.paths) as u64);
        let e = exit_statistics(&model, z, t, &o)?;
        // paths absorbed at 0 end at position 0
        let mean = e.stopped_mean;
        out.push(ProbePoint {
            z,
            mean: mean.mean,
            se: mean.se,
            n: mean.n,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Interval;
    use crate::simulator::{ChainSpec, SdeSpec};
    use crate::solver::build_grid;

    fn bm01(n: usize) -> PathModel {
        let m = SpeedMeasure::lebesgue(Interval::new(0.0, 1.0).unwrap(), vec![]).unwrap();
        PathModel::chain(ChainSpec::from_grid(&build_grid(&m, n, None).unwrap()).unwrap())
    }

    #[test]
    fn survival_is_reproducible_and_worker_independent() {
        let model = bm01(40);
        let times = [0.05, 0.1, 0.2];
        let a = survival_curve(&model, 0.3, &times, &McOptions::new(10_000, 42).with_workers(1)).unwrap();
        let b = survival_curve(&model, 0.3, &times, &McOptions::new(10_000, 42).with_workers(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.survived.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.to_csv().starts_with("t,survived,total,p,se\n"));
    }

    #[test]
    fn natural_scale_exit_probabilities() {
        let model = bm01(50);
        let e = exit_statistics(&model, 0.3, 1e9, &McOptions::new(40_000, 5)).unwrap();
        let (p, se) = e.p_lower();
        assert_eq!(e.survived, 0);
        assert!((p - 0.7).abs() < 3.0 * se, "{p} ± {se}");
    }

    #[test]
    fn conditional_at_time_zero_is_a_point_mass() {
        let model = bm01(40);
        let bins = Arc::new(Partition::uniform(0.0, 1.0, 10).unwrap());
        let s = conditional_distribution(&model, 0.37, 0.0, &bins, &McOptions::new(500, 1)).unwrap();
        assert_eq!(s.counts[3], s.n_survived);
        assert!(s.n_survived > 0);
    }

    #[test]
    fn too_few_survivors_flag() {
        let model = bm01(40);
        let bins = Arc::new(Partition::uniform(0.0, 1.0, 4).unwrap());
        let s = conditional_distribution(&model, 0.5, 2.0, &bins, &McOptions::new(2000, 1)).unwrap();
        assert!(s.too_few_survivors);
    }

    #[test]
    fn sde_brownian_survival() {
        // P_1(τ > 1) = 2Φ(1) - 1
        let s = SdeSpec::parse("1", Interval::half_line(0.0), 1e-2).unwrap();
        let c = survival_curve(&PathModel::sde(s), 1.0, &[1.0], &McOptions::new(40_000, 8)).unwrap();
        let p = c.estimate()[0];
        let se = c.stderr()[0];
        assert!((p - 0.682_689_492_137_085_9).abs() < 3.0 * se, "{p} ± {se}");
        assert!(!c.diagnostics.step_too_coarse);
    }

    #[test]
    fn sde_unit_interval_survival() {
        // first Fourier mode; the next one is below e^-44
        let exact = 4.0 / std::f64::consts::PI * (-std::f64::consts::PI.powi(2) / 2.0).exp();
        for (dt, offset) in [(1e-2, 0), (2.5e-3, 1u64 << 40)] {
            let s = SdeSpec::parse("1", Interval::new(0.0, 1.0).unwrap(), dt).unwrap();
            let opts = McOptions::new(1_000_000, 21).with_offset(offset);
            let c = survival_curve(&PathModel::sde(s), 0.5, &[1.0], &opts).unwrap();
            let (p, se) = (c.estimate()[0], c.stderr()[0]);
            // constant σ makes the bridge test exact, so no dt bias is visible
            assert!((p - exact).abs() < 3.0 * se, "dt {dt}: {p} ± {se} vs {exact}");
        }
    }

    #[test]
    fn coarse_steps_are_flagged() {
        let s = SdeSpec::parse("x^2", Interval::half_line(0.0), 0.5).unwrap();
        let c = survival_curve(&PathModel::sde(s), 1.0, &[2.0], &McOptions::new(2000, 8)).unwrap();
        assert!(c.diagnostics.step_too_coarse);
    }

    #[test]
    fn probe_rejects_start_beyond_truncation() {
        let m = SpeedMeasure::from_expr(Interval::half_line(0.0), "x^-4", vec![]).unwrap();
        let p = ProbeOptions {
            truncation: Some(50.0),
            ..Default::default()
        };
        let r = martingale_expectation_probe(&m, &[1.0, 100.0], 1.0, &McOptions::new(10, 1), &p);
        assert!(matches!(r, Err(Error::TruncationTooSmall { .. })));
    }
}
