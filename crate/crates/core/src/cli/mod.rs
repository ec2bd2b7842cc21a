//! Command-line front end: `qsdlab <subcommand> [flags]`.
//!
//! Exit status is 0 on success, 2 when a criterion is inconclusive and 1 on
//! errors or failed criteria. Errors are reported as one JSON object on
//! stderr.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::analysis::{
    duality_crosscheck, lambda0_from_survival, reversibility_check, tv_decay_series, DualityOptions,
    ReversibilityOptions,
};
use crate::criteria::{check_condition_b, ConditionReport, Verdict};
use crate::error::{Error, Result};
use crate::measure::{
    classify_boundary, dual_measure, measure_from_qsd, suite, BoundaryClass, End, Interval, QsdInput, SpeedMeasure,
};
use crate::quadrature::Convergence;
use crate::simulator::{
    conditional_distribution, martingale_expectation_probe, run_paths, sample_path, survival_curve, ChainSpec,
    McOptions, PathModel, PathRecord, ProbeOptions, SdeSpec,
};
use crate::solver::{
    absorption_moments, build_grid, build_grid_with, markov_bound, qsd_power_iteration, sticky_oracle, Grid,
    GridOptions, Partition, QsdSolution, StickyOracle,
};

pub use config::{parse_config, serialize_config, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "qsdlab", version, about = "Quasi-stationary distributions of absorbed diffusions")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Named measure from the built-in suite (replaces `measure`).
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Output directory; writes `<subcommand>.csv` and `<subcommand>.json`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `sim.seed`
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `sim.workers`; 0 uses every core
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// What to print on stdout.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Starting point.
    #[arg(long, default_value_t = 0.5)]
    pub x0: f64,
    /// Rate of the jump clock (jumps of +1 from states >= 1).
    #[arg(long)]
    pub jump_rate: Option<f64>,
    /// Simulate `dX = sigma(X) dB` by Euler steps of `sim.dt` instead of the
    /// birth–death chain.
    #[arg(long)]
    pub sigma: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct BinArgs {
    /// Number of equal bins over the (truncated) support.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Boundary classification of both ends.
    Classify,
    /// The 1/x dual measure.
    Dual {
        /// Sample points for the density table.
        #[arg(long, default_value_t = 64)]
        points: usize,
    },
    /// Condition (B) with its component criteria.
    CheckB,
    /// QSD, absorption rate and eta on a grid.
    Solve,
    /// Speed measure recovered from the solved QSD.
    Invert,
    /// Absorption-time moments M_0..M_k.
    Moments {
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Also report min_k M_k / t^k at this time.
        #[arg(long)]
        t: Option<f64>,
    },
    /// Individual paths at the snapshot times.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Number of paths to record (defaults to sim.N).
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Survival curve P_x0(t < tau).
    Survival {
        #[command(flatten)]
        sim: SimArgs,
        /// Equal steps up to t_end when sim.times is empty.
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Fit the decay rate over this window, `a,b`.
        #[arg(long, value_parser = parse_pair)]
        window: Option<(f64, f64)>,
    },
    /// Conditional law at t_end.
    Conditional {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        bins: BinArgs,
    },
    /// TV distance between the conditional law and the solved QSD.
    TvDecay {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        bins: BinArgs,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, value_parser = parse_pair)]
        window: Option<(f64, f64)>,
    },
    /// E_z(Z_t) at t_end for the diffusion with the configured speed measure.
    MgProbe {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 10.0, 100.0, 1000.0])]
        z: Vec<f64>,
        #[arg(long, default_value_t = 256)]
        cells: usize,
    },
    /// P_x(t < tau)/x against E_{1/x}(Z_t) under the dual measure.
    DualityCheck {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0, 10.0])]
        x: Vec<f64>,
        #[arg(long, default_value_t = 400)]
        cells: usize,
        #[arg(long, default_value_t = 256)]
        probe_cells: usize,
    },
    /// Int f P_t g dm against int g P_t f dm for interval indicators.
    ReversibilityCheck {
        #[arg(long, value_parser = parse_pair)]
        f: (f64, f64),
        #[arg(long, value_parser = parse_pair)]
        g: (f64, f64),
    },
    /// Closed-form QSD of sticky Brownian motion on (-1, 1).
    StickyOracle {
        #[arg(long, default_value_t = 2001)]
        grid: usize,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Dual { .. } => "dual",
            Command::CheckB => "check-b",
            Command::Solve => "solve",
            Command::Invert => "invert",
            Command::Moments { .. } => "moments",
            Command::Simulate { .. } => "simulate",
            Command::Survival { .. } => "survival",
            Command::Conditional { .. } => "conditional",
            Command::TvDecay { .. } => "tv-decay",
            Command::MgProbe { .. } => "mg-probe",
            Command::DualityCheck { .. } => "duality-check",
            Command::ReversibilityCheck { .. } => "reversibility-check",
            Command::StickyOracle { .. } => "sticky-oracle",
        }
    }
}

/// Result of one subcommand.
#[derive(Debug, Clone)]
pub struct Output {
    pub csv: Option<String>,
    pub json: Value,
    pub status: i32,
}

impl Output {
    fn ok(csv: String, json: Value) -> Output {
        Output {
            csv: Some(csv),
            json,
            status: 0,
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    measure: Option<SpeedMeasure>,
    model_truncation: Option<f64>,
    seed: Option<u64>,
    workers: usize,
}

impl Ctx {
    fn measure(&self) -> Result<&SpeedMeasure> {
        self.measure.as_ref().ok_or_else(|| Error::Schema {
            key: "measure".into(),
            message: "no measure: give one in the config or use --model".into(),
        })
    }

    fn truncation(&self) -> Option<f64> {
        self.cfg.grid.truncation.or(self.model_truncation)
    }

    fn mc(&self, paths: usize) -> Result<McOptions> {
        let seed = self.seed.ok_or_else(|| Error::Schema {
            key: "sim.seed".into(),
            message: "stochastic subcommands need a seed (config or --seed)".into(),
        })?;
        Ok(McOptions::new(paths, seed).with_workers(self.workers))
    }

    fn grid(&self) -> Result<Grid> {
        build_grid(self.measure()?, self.cfg.grid.n, self.truncation())
    }

    fn sim_grid(&self) -> Result<Grid> {
        let opts = GridOptions {
            allow_non_entrance: true,
            ..Default::default()
        };
        build_grid_with(self.measure()?, self.cfg.grid.n, self.truncation(), &opts)
    }

    fn path_model(&self, sim: &SimArgs) -> Result<PathModel> {
        let base = match &sim.sigma {
            Some(sigma) => {
                let dt = self.cfg.sim.dt.ok_or_else(|| Error::Schema {
                    key: "sim.dt".into(),
                    message: "SDE simulation needs a time step".into(),
                })?;
                let domain = match &self.measure {
                    Some(m) => m.support(),
                    None => Interval::half_line(0.0),
                };
                PathModel::sde(SdeSpec::parse(sigma, domain, dt)?)
            }
            None => PathModel::chain(ChainSpec::from_grid(&self.sim_grid()?)?),
        };
        Ok(match sim.jump_rate {
            Some(r) if r < 0.0 || !r.is_finite() => {
                return Err(Error::InvalidArgument(format!("jump rate {r} must be nonnegative")))
            }
            Some(r) => base.with_jumps(r),
            None => base,
        })
    }

    /// Equal bins over the support, up to the truncation on half-lines.
    fn bins(&self, count: usize) -> Result<Arc<Partition>> {
        let s = self.measure()?.support();
        let hi = if s.is_bounded() {
            s.right
        } else {
            self.truncation().ok_or_else(|| Error::Schema {
                key: "grid.truncation".into(),
                message: "bins on a half-line need a truncation".into(),
            })?
        };
        Ok(Arc::new(Partition::uniform(s.left, hi, count)?))
    }
}

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

/// Finite numbers as JSON numbers, others as strings (`"inf"`, `"NaN"`).
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn convergence_json(c: &Convergence) -> Value {
    match c {
        Convergence::Converged { value, tail } => json!({"status": "converged", "value": num(*value), "tail": num(*tail)}),
        Convergence::Diverged { partial } => json!({"status": "diverged", "partial": num(*partial)}),
        Convergence::Inconclusive { partial } => json!({"status": "inconclusive", "partial": num(*partial)}),
    }
}

fn class_json(c: &BoundaryClass) -> Value {
    json!({
        "kind": format!("{:?}", c.kind),
        "moment_integral": convergence_json(&c.moment_integral),
        "mass_integral": convergence_json(&c.mass_integral),
    })
}

fn measure_json(m: &SpeedMeasure) -> Value {
    let s = m.support();
    json!({
        "support": [num(s.left), num(s.right)],
        "density": m.density().label(),
        "atoms": m.atoms().len(),
    })
}

fn classify(ctx: &Ctx) -> Result<Output> {
    let m = ctx.measure()?;
    let mut csv = String::from("end,kind,moment_integral,mass_integral\n");
    let mut j = serde_json::Map::new();
    for (name, end) in [("lower", End::Lower), ("upper", End::Upper)] {
        let c = classify_boundary(m, end)?;
        let _ = writeln!(
            csv,
            "{name},{:?},{},{}",
            c.kind,
            f(c.moment_integral.partial()),
            f(c.mass_integral.partial())
        );
        j.insert(name.into(), class_json(&c));
    }
    j.insert("measure".into(), measure_json(m));
    Ok(Output::ok(csv, Value::Object(j)))
}

fn dual(ctx: &Ctx, points: usize) -> Result<Output> {
    let m = ctx.measure()?;
    let d = dual_measure(m)?;
    let mut csv = String::from("z,density\n");
    for k in 0..points.max(1) {
        let z = 2f64.powf(-10.0 + 20.0 * (k as f64 + 0.5) / points.max(1) as f64);
        let _ = writeln!(csv, "{},{}", f(z), f(d.density_at(z)));
    }
    let lower = classify_boundary(m, End::Lower)?;
    let upper_dual = classify_boundary(&d, End::Upper)?;
    let atoms: Vec<Value> = d.atoms().iter().map(|a| json!([a.location, a.mass])).collect();
    let j = json!({
        "dual": measure_json(&d),
        "dual_atoms": atoms,
        "lower_accessible": lower.kind.is_accessible(),
        "dual_upper_entrance": upper_dual.kind == crate::measure::BoundaryKind::Entrance,
    });
    Ok(Output::ok(csv, j))
}

fn verdict_status(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 2,
    }
}

fn check_b(ctx: &Ctx) -> Result<Output> {
    let r = check_condition_b(ctx.measure()?)?;
    let mut csv = String::from("criterion,verdict\n");
    fn rows(r: &ConditionReport, csv: &mut String) {
        let _ = writeln!(csv, "{:?},{:?}", r.criterion, r.verdict);
        for c in &r.components {
            rows(c, csv);
        }
    }
    rows(&r, &mut csv);
    let mut j = serde_json::to_value(&r).expect("reports serialize");
    if let Some(failed) = r.components.iter().find(|c| c.verdict == Verdict::Fail) {
        j["failed"] = json!(format!("{:?}", failed.criterion));
    }
    Ok(Output {
        csv: Some(csv),
        json: j,
        status: verdict_status(r.verdict),
    })
}

fn solution_json(s: &QsdSolution, grid: &Grid) -> Value {
    let h = s.header();
    json!({
        "lambda0": num(h.lambda0),
        "iterations": h.iterations,
        "residual": num(h.residual),
        "tail_bound": num(h.tail_bound),
        "n": grid.len(),
    })
}

fn solve(ctx: &Ctx) -> Result<Output> {
    let grid = ctx.grid()?;
    let s = qsd_power_iteration(&grid, ctx.cfg.solver.tol, ctx.cfg.solver.max_iter)?;
    let mk = absorption_moments(&grid, 1);
    Ok(Output::ok(s.to_csv(&mk), solution_json(&s, &grid)))
}

fn invert(ctx: &Ctx) -> Result<Output> {
    let grid = ctx.grid()?;
    let s = qsd_power_iteration(&grid, ctx.cfg.solver.tol, ctx.cfg.solver.max_iter)?;
    let back = measure_from_qsd(
        QsdInput::Discrete {
            grid: &grid,
            alpha: &s.alpha,
        },
        s.lambda0,
    )?;
    let mut csv = String::from("x,cell_mass,recovered,rel_err\n");
    let mut max_rel = 0.0f64;
    for (i, (x, w)) in grid.nodes().iter().zip(grid.cell_mass()).enumerate() {
        let r = back.atoms().get(i).map(|a| a.mass).unwrap_or(0.0);
        let rel = (r - w).abs() / w;
        max_rel = max_rel.max(rel);
        let _ = writeln!(csv, "{},{},{},{}", f(*x), f(*w), f(r), f(rel));
    }
    Ok(Output::ok(
        csv,
        json!({"lambda0": num(s.lambda0), "max_rel_err": num(max_rel), "n": grid.len()}),
    ))
}

fn moments(ctx: &Ctx, k: usize, t: Option<f64>) -> Result<Output> {
    let grid = ctx.grid()?;
    let mk = absorption_moments(&grid, k);
    let mut csv = String::from("x");
    for j in 0..=k {
        let _ = write!(csv, ",M_{j}");
    }
    if t.is_some() {
        csv.push_str(",markov_bound");
    }
    csv.push('\n');
    for (i, x) in grid.nodes().iter().enumerate() {
        csv.push_str(&f(*x));
        for m in &mk {
            let _ = write!(csv, ",{}", f(m[i]));
        }
        if let Some(t) = t {
            let _ = write!(csv, ",{}", f(markov_bound(&mk, i, t)));
        }
        csv.push('\n');
    }
    Ok(Output::ok(csv, json!({"k": k, "n": grid.len(), "t": t})))
}

fn simulate(ctx: &Ctx, sim: &SimArgs, paths: Option<usize>) -> Result<Output> {
    let model = ctx.path_model(sim)?;
    let times = ctx.cfg.times_or(10);
    let opts = ctx.mc(paths.unwrap_or(ctx.cfg.sim.paths))?;
    let records = run_paths(
        &opts,
        Vec::new,
        |acc: &mut Vec<(u64, PathRecord)>, idx| {
            acc.push((idx, sample_path(&model, sim.x0, &times, opts.seed, idx)?));
            Ok(())
        },
        |a, b| a.extend(b),
    )?;
    let mut csv = String::from("path,t,x\n");
    let mut ends = String::from("path,absorbed,time,position,exit,jumps\n");
    let mut absorbed = 0u64;
    for (idx, r) in &records {
        for (t, x) in times.iter().zip(&r.snapshots) {
            let _ = writeln!(csv, "{idx},{},{}", f(*t), x.map(f).unwrap_or_default());
        }
        absorbed += r.end.absorbed as u64;
        let exit = match r.end.exit {
            Some(End::Lower) => "lower",
            Some(End::Upper) => "upper",
            None => "",
        };
        let _ = writeln!(
            ends,
            "{idx},{},{},{},{exit},{}",
            r.end.absorbed as u8,
            f(r.end.time),
            f(r.end.position),
            r.jumps
        );
    }
    Ok(Output {
        csv: Some(csv),
        json: json!({"paths": records.len(), "absorbed": absorbed, "x0": sim.x0, "ends_csv": ends}),
        status: 0,
    })
}

fn survival(ctx: &Ctx, sim: &SimArgs, steps: usize, window: Option<(f64, f64)>) -> Result<Output> {
    let model = ctx.path_model(sim)?;
    let times = ctx.cfg.times_or(steps);
    let c = survival_curve(&model, sim.x0, &times, &ctx.mc(ctx.cfg.sim.paths)?)?;
    let mut j = json!({
        "x0": sim.x0,
        "total": c.total,
        "steps": c.diagnostics.steps,
        "step_too_coarse": c.diagnostics.step_too_coarse,
        "jumps": c.diagnostics.jumps,
    });
    if let Some(w) = window {
        j["fit"] = serde_json::to_value(lambda0_from_survival(&c, w)?).expect("fit serializes");
    }
    Ok(Output::ok(c.to_csv(), j))
}

fn conditional(ctx: &Ctx, sim: &SimArgs, bins: &BinArgs) -> Result<Output> {
    let model = ctx.path_model(sim)?;
    let part = ctx.bins(bins.bins)?;
    let s = conditional_distribution(&model, sim.x0, ctx.cfg.sim.t_end, &part, &ctx.mc(ctx.cfg.sim.paths)?)?;
    let j = json!({
        "t": s.t,
        "survived": s.n_survived,
        "total": s.n_total,
        "mean_position": num(s.mean_position),
        "too_few_survivors": s.too_few_survivors,
    });
    Ok(Output::ok(s.to_csv(), j))
}

fn tv_decay(ctx: &Ctx, sim: &SimArgs, bins: &BinArgs, steps: usize, window: Option<(f64, f64)>) -> Result<Output> {
    let model = ctx.path_model(sim)?;
    let part = ctx.bins(bins.bins)?;
    let grid = ctx.grid()?;
    let alpha = qsd_power_iteration(&grid, ctx.cfg.solver.tol, ctx.cfg.solver.max_iter)?.alpha;
    let reference = alpha.rebin(&part);
    let times = ctx.cfg.times_or(steps);
    let s = tv_decay_series(&model, sim.x0, &times, &reference, &ctx.mc(ctx.cfg.sim.paths)?)?;
    let mut j = json!({"bin_width": s.bin_width, "survivors": s.survivors});
    if let Some(w) = window {
        j["fit"] = serde_json::to_value(s.fit(w)?).expect("fit serializes");
    }
    Ok(Output::ok(s.to_csv(), j))
}

fn mg_probe(ctx: &Ctx, z: &[f64], cells: usize) -> Result<Output> {
    let probe = ProbeOptions {
        cells,
        ..Default::default()
    };
    let pts = martingale_expectation_probe(ctx.measure()?, z, ctx.cfg.sim.t_end, &ctx.mc(ctx.cfg.sim.paths)?, &probe)?;
    let mut csv = String::from("z,mean,se,n\n");
    for p in &pts {
        let _ = writeln!(csv, "{},{},{},{}", f(p.z), f(p.mean), f(p.se), p.n);
    }
    let sup = pts.iter().map(|p| p.mean).fold(0.0, f64::max);
    Ok(Output::ok(csv, json!({"t": ctx.cfg.sim.t_end, "max_mean": num(sup)})))
}

fn duality_check(ctx: &Ctx, x: &[f64], cells: usize, probe_cells: usize) -> Result<Output> {
    let d = DualityOptions {
        x_cells: cells,
        x_truncation: ctx.cfg.grid.truncation,
        probe: ProbeOptions {
            cells: probe_cells,
            ..Default::default()
        },
    };
    let r = duality_crosscheck(ctx.measure()?, x, ctx.cfg.sim.t_end, &ctx.mc(ctx.cfg.sim.paths)?, &d)?;
    let mut csv = String::from("x,lhs,lhs_se,rhs,rhs_se,z\n");
    for row in &r.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            f(row.x),
            f(row.lhs),
            f(row.lhs_se),
            f(row.rhs),
            f(row.rhs_se),
            f(row.z_score)
        );
    }
    Ok(Output::ok(csv, json!({"t": r.t, "paths": r.paths, "max_abs_z": num(r.max_abs_z())})))
}

fn reversibility(ctx: &Ctx, fs: (f64, f64), gs: (f64, f64)) -> Result<Output> {
    let r = reversibility_check(
        ctx.measure()?,
        Interval::new(fs.0, fs.1)?,
        Interval::new(gs.0, gs.1)?,
        ctx.cfg.sim.t_end,
        &ctx.mc(ctx.cfg.sim.paths)?,
        &ReversibilityOptions {
            cells: ctx.cfg.grid.n,
            truncation: ctx.truncation(),
        },
    )?;
    let csv = format!(
        "lhs,lhs_se,rhs,rhs_se,z\n{},{},{},{},{}\n",
        f(r.lhs),
        f(r.lhs_se),
        f(r.rhs),
        f(r.rhs_se),
        f(r.z_score)
    );
    Ok(Output::ok(csv, serde_json::to_value(r).expect("report serializes")))
}

fn sticky(n: usize) -> Result<Output> {
    let o = sticky_oracle();
    let grid = build_grid(&StickyOracle::measure(), n, None)?;
    let s = o.on_grid(&grid)?;
    let atom = grid.partition().nearest(0.0);
    let mut csv = String::from("x,alpha_weight,atom\n");
    for (i, (x, w)) in s.alpha.points().iter().zip(s.alpha.weights()).enumerate() {
        let _ = writeln!(csv, "{},{},{}", f(*x), f(*w), (i == atom) as u8);
    }
    Ok(Output::ok(csv, serde_json::to_value(o).expect("oracle serializes")))
}

fn load(cli: &Cli) -> Result<Ctx> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(&std::fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    let (measure, model_truncation) = match &cli.model {
        Some(name) => {
            let m = suite::named(name)?;
            (Some(m), suite::model(name).and_then(|m| m.truncation))
        }
        None => (cfg.measure.as_ref().map(|m| m.build()).transpose()?, None),
    };
    if cli.seed.is_some() {
        cfg.sim.seed = cli.seed;
    }
    if let Some(w) = cli.workers {
        cfg.sim.workers = w;
    }
    Ok(Ctx {
        seed: cfg.sim.seed,
        workers: cfg.sim.workers,
        cfg,
        measure,
        model_truncation,
    })
}

/// Runs one parsed invocation and returns its output without printing.
pub fn run(cli: &Cli) -> Result<Output> {
    dispatch(&load(cli)?, &cli.command)
}

fn dispatch(ctx: &Ctx, command: &Command) -> Result<Output> {
    match command {
        Command::Classify => classify(&ctx),
        Command::Dual { points } => dual(&ctx, *points),
        Command::CheckB => check_b(&ctx),
        Command::Solve => solve(&ctx),
        Command::Invert => invert(&ctx),
        Command::Moments { k, t } => moments(&ctx, *k, *t),
        Command::Simulate { sim, paths } => simulate(&ctx, sim, *paths),
        Command::Survival { sim, steps, window } => survival(&ctx, sim, *steps, *window),
        Command::Conditional { sim, bins } => conditional(&ctx, sim, bins),
        Command::TvDecay {
            sim,
            bins,
            steps,
            window,
        } => tv_decay(&ctx, sim, bins, *steps, *window),
        Command::MgProbe { z, cells } => mg_probe(&ctx, z, *cells),
        Command::DualityCheck { x, cells, probe_cells } => duality_check(&ctx, x, *cells, *probe_cells),
        Command::ReversibilityCheck { f, g } => reversibility(&ctx, *f, *g),
        Command::StickyOracle { grid } => sticky(*grid),
    }
}

fn write_outputs(dir: &Path, name: &str, out: &Output) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if let Some(csv) = &out.csv {
        std::fs::write(dir.join(format!("{name}.csv")), csv)?;
    }
    let mut j = serde_json::to_string_pretty(&out.json).expect("json serializes");
    j.push('\n');
    std::fs::write(dir.join(format!("{name}.json")), j)?;
    Ok(())
}

fn error_json(kind: &str, message: &str) -> String {
    json!({"error": kind, "message": message}).to_string()
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("QSDLAB_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Entry point used by the binary; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_json("UsageError", e.to_string().trim()));
            return 1;
        }
    };
    let name = cli.command.name();
    let result = load(&cli).and_then(|ctx| {
        let out = dispatch(&ctx, &cli.command)?;
        let dir = cli.out.clone().or_else(|| ctx.cfg.out.as_ref().map(PathBuf::from));
        if let Some(dir) = dir {
            write_outputs(&dir, name, &out)?;
        }
        let text = match (cli.format, &out.csv) {
            (Format::Csv, Some(csv)) => csv.clone(),
            _ => serde_json::to_string_pretty(&out.json).expect("json serializes") + "\n",
        };
        // a closed pipe (`| head`) is not an error
        let _ = std::io::stdout().lock().write_all(text.as_bytes());
        Ok(out.status)
    });
    match result {
        Ok(status) => status,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            1
        }
    }
}
