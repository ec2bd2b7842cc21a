//! Monte Carlo paths of diffusions given by speed measures: a birth–death
//! chain on a solver grid, an Euler scheme with Brownian-bridge absorption,
//! the `+1` jump extension, and the drivers built on them.

mod chain;
mod mc;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expr, ExprError};
use crate::measure::{End, Interval};

pub use chain::{BoundaryPolicy, ChainSpec, StartRule};
pub use mc::{
    conditional_distribution, conditional_series, exit_statistics, martingale_expectation_probe,
    mean_absorption_time, probe_chain, run_paths, survival_curve, ExitStats, McOptions, MeanEstimate, PathStats,
    ProbeOptions, ProbePoint, SimDiagnostics, SurvivalCurve,
};

use chain::Start;

/// Main random stream of path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(2 * index);
    r
}

/// Stream of the Poisson clock of path `index`, independent of the main one.
pub fn clock_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(2 * index + 1);
    r
}

/// Euler scheme on natural scale, `dX = σ(X) dB`, absorbed at the ends
/// of `domain`.
#[derive(Debug, Clone)]
pub struct SdeSpec {
    sigma: Expr,
    domain: Interval,
    dt: f64,
}

impl SdeSpec {
    pub fn new(sigma: Expr, domain: Interval, dt: f64) -> Result<SdeSpec> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidGrid(format!("time step must be positive, got {dt}")));
        }
        let spec = SdeSpec {
            sigma: sigma.fold(),
            domain,
            dt,
        };
        for (x, _) in domain.sample_points() {
            spec.sigma_at(x)?;
        }
        Ok(spec)
    }

    pub fn parse(sigma: &str, domain: Interval, dt: f64) -> Result<SdeSpec> {
        SdeSpec::new(Expr::parse(sigma)?, domain, dt)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn with_dt(&self, dt: f64) -> Result<SdeSpec> {
        SdeSpec::new(self.sigma.clone(), self.domain, dt)
    }

    fn sigma_at(&self, x: f64) -> Result<f64> {
        let v = self.sigma.eval(x);
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(ExprError::Eval {
                expr: self.sigma.to_string(),
                x,
                value: v,
            }
            .into())
        }
    }
}

/// Poisson clock adding `+1` whenever the path sits at or above 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpSpec {
    pub rate: f64,
}

impl JumpSpec {
    pub const THRESHOLD: f64 = 1.0;
    pub const SIZE: f64 = 1.0;
}

#[derive(Debug, Clone)]
pub enum Dynamics {
    Chain(Arc<ChainSpec>),
    Sde(Arc<SdeSpec>),
}

/// A path law: base dynamics plus an optional jump clock.
#[derive(Debug, Clone)]
pub struct PathModel {
    pub dynamics: Dynamics,
    pub jump: Option<JumpSpec>,
}

impl PathModel {
    pub fn chain(spec: ChainSpec) -> PathModel {
        PathModel {
            dynamics: Dynamics::Chain(Arc::new(spec)),
            jump: None,
        }
    }

    pub fn sde(spec: SdeSpec) -> PathModel {
        PathModel {
            dynamics: Dynamics::Sde(Arc::new(spec)),
            jump: None,
        }
    }

    pub fn with_jumps(mut self, rate: f64) -> PathModel {
        self.jump = Some(JumpSpec { rate });
        self
    }

    /// Lower end and upper absorbing end (`+∞` when there is none).
    pub fn absorbing_ends(&self) -> (f64, f64) {
        match &self.dynamics {
            Dynamics::Chain(c) => (c.left(), c.right()),
            Dynamics::Sde(s) => (s.domain.left, s.domain.right),
        }
    }
}

/// Outcome of one path up to `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathEnd {
    pub absorbed: bool,
    /// Absorption time, or `t_end` for survivors.
    pub time: f64,
    /// Position at `t_end`; the absorbing end for absorbed paths.
    pub position: f64,
    pub exit: Option<End>,
}

/// Full record of one path: its end plus positions at requested times
/// (`None` once absorbed).
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub end: PathEnd,
    pub snapshots: Vec<Option<f64>>,
    pub steps: u64,
    pub coarse_steps: u64,
    pub jumps: u64,
}

/// Simulates path `index` of `model` from `x0`, recording its position at
/// each of the increasing `times`; runs until the last time.
pub fn sample_path(model: &PathModel, x0: f64, times: &[f64], seed: u64, index: u64) -> Result<PathRecord> {
    let mut rng = path_rng(seed, index);
    let mut clock = clock_rng(seed, index);
    let jump = model.jump.filter(|j| j.rate > 0.0);
    match &model.dynamics {
        Dynamics::Chain(c) => Ok(chain_path(c, jump, x0, times, &mut rng, &mut clock)),
        Dynamics::Sde(s) => sde_path(s, jump, x0, times, &mut rng, &mut clock),
    }
}

/// One chain path to `t_end`.
pub fn sample_chain_path<R: Rng>(spec: &ChainSpec, x0: f64, t_end: f64, rng: &mut R) -> PathEnd {
    let mut idle = ChaCha8Rng::seed_from_u64(0);
    chain_path(spec, None, x0, &[t_end], rng, &mut idle).end
}

/// One Euler path to `t_end`.
pub fn sample_sde_path<R: Rng>(spec: &SdeSpec, x0: f64, t_end: f64, rng: &mut R) -> Result<PathEnd> {
    let mut idle = ChaCha8Rng::seed_from_u64(0);
    Ok(sde_path(spec, None, x0, &[t_end], rng, &mut idle)?.end)
}

/// One path of the base dynamics with the jump clock driven by `clock`.
pub fn sample_jump_path<R: Rng, C: Rng>(
    base: &Dynamics,
    jump_rate: f64,
    x0: f64,
    t_end: f64,
    rng: &mut R,
    clock: &mut C,
) -> Result<PathEnd> {
    let jump = Some(JumpSpec { rate: jump_rate }).filter(|j| j.rate > 0.0);
    match base {
        Dynamics::Chain(c) => Ok(chain_path(c, jump, x0, &[t_end], rng, clock).end),
        Dynamics::Sde(s) => Ok(sde_path(s, jump, x0, &[t_end], rng, clock)?.end),
    }
}

fn next_ring<C: Rng>(jump: Option<JumpSpec>, now: f64, clock: &mut C) -> f64 {
    match jump {
        Some(j) => {
            let e: f64 = clock.sample(Exp1);
            now + e / j.rate
        }
        None => f64::INFINITY,
    }
}

fn chain_path<R: Rng, C: Rng>(
    c: &ChainSpec,
    jump: Option<JumpSpec>,
    x0: f64,
    times: &[f64],
    rng: &mut R,
    clock: &mut C,
) -> PathRecord {
    let t_end = times.last().copied().unwrap_or(0.0);
    let mut snap = vec![None; times.len()];
    let mut k = 0;
    let x = c.nodes();
    let n = x.len();
    let hold = c.holding_means();
    let p_right = c.p_right();
    let start = c.start(x0, rng);
    let mut i = match start {
        Start::Node(i) => i,
        Start::AbsorbedLower => return finish_absorbed(c.left(), End::Lower, 0.0, snap, 0, 0),
        Start::AbsorbedUpper => return finish_absorbed(c.right(), End::Upper, 0.0, snap, 0, 0),
    };
    while k < times.len() && times[k] <= 0.0 {
        snap[k] = Some(x0);
        k += 1;
    }
    let mut t = 0.0;
    let mut ring = next_ring(jump, 0.0, clock);
    let (mut steps, mut jumps) = (0u64, 0u64);
    loop {
        let e: f64 = rng.sample(Exp1);
        let t_next = t + hold[i] * e;
        if ring < t_next && ring <= t_end {
            while k < times.len() && times[k] < ring {
                snap[k] = Some(x[i]);
                k += 1;
            }
            t = ring;
            if x[i] >= JumpSpec::THRESHOLD {
                i = c.nearest(x[i] + JumpSpec::SIZE);
                jumps += 1;
            }
            ring = next_ring(jump, t, clock);
            continue;
        }
        while k < times.len() && times[k] < t_next {
            snap[k] = Some(x[i]);
            k += 1;
        }
        if t_next > t_end {
            return PathRecord {
                end: PathEnd {
                    absorbed: false,
                    time: t_end,
                    position: x[i],
                    exit: None,
                },
                snapshots: snap,
                steps,
                coarse_steps: 0,
                jumps,
            };
        }
        t = t_next;
        steps += 1;
        let u: f64 = rng.random();
        if u < p_right[i] {
            if i + 1 == n {
                return finish_absorbed(c.right(), End::Upper, t, snap, steps, jumps);
            }
            i += 1;
        } else {
            if i == 0 {
                return finish_absorbed(c.left(), End::Lower, t, snap, steps, jumps);
            }
            i -= 1;
        }
    }
}

fn finish_absorbed(at_x: f64, end: End, t: f64, snapshots: Vec<Option<f64>>, steps: u64, jumps: u64) -> PathRecord {
    PathRecord {
        end: PathEnd {
            absorbed: true,
            time: t,
            position: at_x,
            exit: Some(end),
        },
        snapshots,
        steps,
        coarse_steps: 0,
        jumps,
    }
}

fn sde_path<R: Rng, C: Rng>(
    s: &SdeSpec,
    jump: Option<JumpSpec>,
    x0: f64,
    times: &[f64],
    rng: &mut R,
    clock: &mut C,
) -> Result<PathRecord> {
    let (l, r) = (s.domain.left, s.domain.right);
    let t_end = times.last().copied().unwrap_or(0.0);
    let mut snap = vec![None; times.len()];
    if x0 <= l {
        return Ok(finish_absorbed(l, End::Lower, 0.0, snap, 0, 0));
    }
    if x0 >= r {
        return Ok(finish_absorbed(r, End::Upper, 0.0, snap, 0, 0));
    }
    let mut k = 0;
    while k < times.len() && times[k] <= 0.0 {
        snap[k] = Some(x0);
        k += 1;
    }
    let mut x = x0;
    let mut t = 0.0;
    let mut ring = next_ring(jump, 0.0, clock);
    let (mut steps, mut coarse, mut jumps) = (0u64, 0u64, 0u64);
    let mut sig = s.sigma_at(x)?;
    while t < t_end {
        let mut target = (t + s.dt).min(t_end);
        if k < times.len() {
            target = target.min(times[k]);
        }
        target = target.min(ring);
        let h = target - t;
        let xi: f64 = rng.sample(StandardNormal);
        let y = x + sig * h.sqrt() * xi;
        steps += 1;
        let var = sig * sig * h;
        let (u1, u2): (f64, f64) = (rng.random(), rng.random());
        let mut hit = None;
        if y <= l {
            hit = Some(End::Lower);
        } else if y >= r {
            hit = Some(End::Upper);
        } else if var > 0.0 {
            let pl = (-2.0 * (x - l) * (y - l) / var).exp();
            let pr = if r.is_finite() {
                (-2.0 * (r - x) * (r - y) / var).exp()
            } else {
                0.0
            };
            if u1 < pl {
                hit = Some(End::Lower);
            } else if u1 < pl + pr {
                hit = Some(End::Upper);
            }
        }
        if let Some(end) = hit {
            let at = t + h * u2;
            while k < times.len() && times[k] < at {
                snap[k] = Some(x);
                k += 1;
            }
            let mut rec = finish_absorbed(if end == End::Lower { l } else { r }, end, at, snap, steps, jumps);
            rec.coarse_steps = coarse;
            return Ok(rec);
        }
        let sig_y = s.sigma_at(y)?;
        if (sig_y - sig).abs() > 0.5 * sig {
            coarse += 1;
        }
        x = y;
        sig = sig_y;
        t = target;
        if t >= ring {
            if x >= JumpSpec::THRESHOLD {
                x += JumpSpec::SIZE;
                sig = s.sigma_at(x)?;
                jumps += 1;
            }
            ring = next_ring(jump, t, clock);
        }
        while k < times.len() && times[k] <= t {
            snap[k] = Some(x);
            k += 1;
        }
    }
    Ok(PathRecord {
        end: PathEnd {
            absorbed: false,
            time: t_end,
            position: x,
            exit: None,
        },
        snapshots: snap,
        steps,
        coarse_steps: coarse,
        jumps,
    })
}
