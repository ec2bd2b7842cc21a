//! JSON run configuration.
//!
//! ```json
//! {
//!   "measure": {"support": [0, "inf"], "density": "x^-1.5", "atoms": [[0.5, 1]]},
//!   "grid": {"n": 1000, "truncation": 50},
//!   "solver": {"tol": 1e-10, "max_iter": 100000},
//!   "sim": {"N": 10000, "dt": 1e-4, "t_end": 1, "times": [0.5, 1], "seed": 7, "workers": 0},
//!   "out": "results"
//! }
//! ```
//!
//! Every section except `measure` may be omitted. Defaults: `grid.n = 1000`,
//! no truncation, `solver.tol = 1e-10`, `solver.max_iter = 100000`,
//! `sim.N = 10000`, `sim.t_end = 1`, no `dt`, `times` or `seed`,
//! `sim.workers = 0` (all cores). Stochastic subcommands need a seed, from
//! the config or `--seed`.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::measure::{Atom, Interval, SpeedMeasure};

/// Right end of a support, written as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint(pub f64);

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Endpoint, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Endpoint;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Endpoint, E> {
                match v {
                    "inf" | "+inf" | "infinity" => Ok(Endpoint(f64::INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub support: (f64, Endpoint),
    #[serde(default = "default_density")]
    pub density: String,
    /// `[location, mass]` pairs.
    #[serde(default)]
    pub atoms: Vec<(f64, f64)>,
}

fn default_density() -> String {
    "1".into()
}

impl MeasureConfig {
    pub fn build(&self) -> Result<SpeedMeasure> {
        let support = Interval::new(self.support.0, self.support.1 .0).map_err(|e| schema("measure.support", e))?;
        let atoms = self.atoms.iter().map(|&(x, w)| Atom::new(x, w)).collect();
        SpeedMeasure::from_expr(support, &self.density, atoms).map_err(|e| match e {
            Error::Expression(_) => schema("measure.density", e),
            other => other,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
}

fn default_n() -> usize {
    1000
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: default_n(),
            truncation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    100_000
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "N", default = "default_paths")]
    pub paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: usize,
}

fn default_paths() -> usize {
    10_000
}

fn default_t_end() -> f64 {
    1.0
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            paths: default_paths(),
            dt: None,
            t_end: default_t_end(),
            times: Vec::new(),
            seed: None,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional only when the measure comes from `--model`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

fn schema(key: &str, message: impl fmt::Display) -> Error {
    Error::Schema {
        key: key.into(),
        message: message.to_string(),
    }
}

/// Name in the first backtick pair of a serde message (`unknown field `x``).
fn quoted(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

fn join(path: &str, field: &str) -> String {
    if path.is_empty() || path == "." {
        field.to_string()
    } else if path == field || path.ends_with(&format!(".{field}")) {
        path.to_string()
    } else {
        format!("{path}.{field}")
    }
}

/// Strict parse with defaults; see the module docs for the schema.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = match serde_path_to_error::deserialize(de) {
        Ok(c) => c,
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let line = inner.line();
            let column = inner.column();
            if inner.classify() != serde_json::error::Category::Data {
                return Err(Error::Parse {
                    line,
                    column,
                    message: inner.to_string(),
                });
            }
            let msg = inner.to_string();
            let key = if msg.starts_with("unknown field") || msg.starts_with("missing field") {
                quoted(&msg).map(|f| join(&path, f)).unwrap_or(path)
            } else {
                path
            };
            return Err(schema(&key, msg));
        }
    };
    // trailing content after the document is rejected by serde_json above
    cfg.validate()?;
    Ok(cfg)
}

/// Pretty JSON that [`parse_config`] reads back to an equal value.
pub fn serialize_config(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(m) = &self.measure {
            let (l, r) = (m.support.0, m.support.1 .0);
            if !(l.is_finite() && (r.is_finite() || r == f64::INFINITY) && l < r) {
                return Err(schema("measure.support", format!("need finite left < right, got [{l}, {r}]")));
            }
            for (k, &(x, w)) in m.atoms.iter().enumerate() {
                if !(x > l && x < r) || !(w > 0.0 && w.is_finite()) {
                    return Err(schema(
                        &format!("measure.atoms[{k}]"),
                        format!("atom ({x}, {w}) needs an interior location and positive finite mass"),
                    ));
                }
            }
            if m.density.trim().is_empty() {
                return Err(schema("measure.density", "empty expression"));
            }
        }
        if !(2..=10_000_000).contains(&self.grid.n) {
            return Err(schema("grid.n", format!("{} not in [2, 1e7]", self.grid.n)));
        }
        if let Some(t) = self.grid.truncation {
            if !(t > 0.0 && t.is_finite()) {
                return Err(schema("grid.truncation", format!("{t} must be positive and finite")));
            }
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(schema("solver.tol", format!("{} not in (0, 1)", self.solver.tol)));
        }
        if self.solver.max_iter == 0 {
            return Err(schema("solver.max_iter", "must be at least 1"));
        }
        let s = &self.sim;
        if s.paths == 0 {
            return Err(schema("sim.N", "must be at least 1"));
        }
        if let Some(dt) = s.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(schema("sim.dt", format!("{dt} must be positive")));
            }
        }
        if !(s.t_end > 0.0 && s.t_end.is_finite()) {
            return Err(schema("sim.t_end", format!("{} must be positive", s.t_end)));
        }
        if s.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(schema("sim.times", "times must be finite and nonnegative"));
        }
        if s.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(schema("sim.times", "times must be strictly increasing"));
        }
        Ok(())
    }

    /// Snapshot times: `sim.times`, or `count` equal steps up to `t_end`.
    pub fn times_or(&self, count: usize) -> Vec<f64> {
        if !self.sim.times.is_empty() {
            return self.sim.times.clone();
        }
        (1..=count).map(|k| self.sim.t_end * k as f64 / count as f64).collect()
    }
}
