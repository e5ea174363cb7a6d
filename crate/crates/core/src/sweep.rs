//! Parameter sweeps over steady-state observables, figure presets and the
//! trajectory run description used by the command-line tool.
//!
//! A sweep is a rectangular grid over one or more [`SystemParams`] fields.
//! Other fields may be tied to swept ones by linear rules
//! (`target = factor * source`), resolved in dependency order at every point.
//! Points are solved independently on a rayon pool and collected by index,
//! so output does not depend on the number of threads.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{self, fmt_f64, Entry};
use crate::error::{Error, Result};
use crate::mcwf;
use crate::model::{self, SystemParams, PARAM_NAMES};
use crate::steady::{self, Observables, SteadyOptions};

/// Truncation used by the figure presets.
pub const PRESET_N_MAX: usize = 10;
/// Truncation of the convergence re-check in the presets.
pub const PRESET_CHECK_N_MAX: usize = 15;
/// Relative agreement required between the two truncations.
pub const DEFAULT_CHECK_TOL: f64 = 1e-6;

/// Version string of the build, from `git describe` when available.
pub fn build_version() -> &'static str {
    option_env!("CQED_GIT_DESCRIBE").unwrap_or(env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    MeanPhoton,
    G2,
    G3,
}

impl ObservableKind {
    pub const ALL: [ObservableKind; 3] = [Self::MeanPhoton, Self::G2, Self::G3];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MeanPhoton => "mean_photon",
            Self::G2 => "g2",
            Self::G3 => "g3",
        }
    }

    /// Value at a point; `None` if undefined.
    pub fn of(&self, o: &Observables) -> Option<f64> {
        match self {
            Self::MeanPhoton => Some(o.mean_photon),
            Self::G2 => o.g2,
            Self::G3 => o.g3,
        }
    }
}

impl FromStr for ObservableKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidSweep(format!("unknown observable `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisScale {
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: AxisScale,
}

impl Axis {
    pub fn linear(name: &str, min: f64, max: f64, count: usize) -> Self {
        Self {
            name: name.to_string(),
            min,
            max,
            count,
            scale: AxisScale::Linear,
        }
    }

    /// `min + i (max - min)/(count - 1)`; the last value is exactly `max`.
    pub fn values(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.max } else { self.min + i as f64 * step })
            .collect()
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }
}

/// `target = factor * source`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedRule {
    pub target: String,
    pub factor: f64,
    pub source: String,
}

impl DerivedRule {
    pub fn new(target: &str, factor: f64, source: &str) -> Self {
        Self {
            target: target.to_string(),
            factor,
            source: source.to_string(),
        }
    }
}

fn default_observables() -> Vec<ObservableKind> {
    ObservableKind::ALL.to_vec()
}

fn default_check_tol() -> f64 {
    DEFAULT_CHECK_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub name: String,
    /// Fixed parameters; swept and derived fields are overwritten per point.
    pub params: SystemParams,
    /// Outermost first. An empty list is a single-point sweep.
    #[serde(default)]
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub derive: Vec<DerivedRule>,
    #[serde(default = "default_observables")]
    pub observables: Vec<ObservableKind>,
    #[serde(default)]
    pub output: Option<String>,
    /// Truncation of the convergence re-check; `None` disables it.
    #[serde(default)]
    pub check_n_max: Option<usize>,
    #[serde(default = "default_check_tol")]
    pub check_tol: f64,
}

const INTEGER_PARAMS: [&str; 2] = ["n_max", "cavity_dissipator_count"];

impl SweepSpec {
    pub fn new(name: &str, params: SystemParams) -> Self {
        Self {
            name: name.to_string(),
            params,
            axes: Vec::new(),
            derive: Vec::new(),
            observables: default_observables(),
            output: None,
            check_n_max: None,
            check_tol: DEFAULT_CHECK_TOL,
        }
    }

    pub fn axis(mut self, name: &str, min: f64, max: f64, count: usize) -> Self {
        self.axes.push(Axis::linear(name, min, max, count));
        self
    }

    pub fn derive(mut self, target: &str, factor: f64, source: &str) -> Self {
        self.derive.push(DerivedRule::new(target, factor, source));
        self
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    /// Checks axes, rule references and acyclicity, the observable list and
    /// the base parameters. Returns the rules in evaluation order.
    pub fn validate(&self) -> Result<Vec<DerivedRule>> {
        let float_param = |name: &str, what: &str| -> Result<()> {
            if !PARAM_NAMES.contains(&name) {
                return Err(Error::InvalidSweep(format!("{what} `{name}` is not a parameter")));
            }
            if INTEGER_PARAMS.contains(&name) {
                return Err(Error::InvalidSweep(format!("{what} `{name}` cannot be swept or derived")));
            }
            Ok(())
        };
        let mut axis_names = HashSet::new();
        for a in &self.axes {
            float_param(&a.name, "axis")?;
            if !axis_names.insert(a.name.as_str()) {
                return Err(Error::InvalidSweep(format!("axis `{}` appears twice", a.name)));
            }
            if a.count < 2 {
                return Err(Error::InvalidSweep(format!(
                    "axis `{}` needs at least 2 points, got {}",
                    a.name, a.count
                )));
            }
            if !a.min.is_finite() || !a.max.is_finite() || a.min >= a.max {
                return Err(Error::InvalidSweep(format!(
                    "axis `{}` needs finite min < max, got [{}, {}]",
                    a.name, a.min, a.max
                )));
            }
        }
        let mut targets = HashSet::new();
        for r in &self.derive {
            float_param(&r.target, "derived target")?;
            float_param(&r.source, "derived source")?;
            if !r.factor.is_finite() {
                return Err(Error::InvalidSweep(format!("factor for `{}` is not finite", r.target)));
            }
            if axis_names.contains(r.target.as_str()) {
                return Err(Error::InvalidSweep(format!("`{}` is both an axis and derived", r.target)));
            }
            if !targets.insert(r.target.as_str()) {
                return Err(Error::InvalidSweep(format!("`{}` is derived twice", r.target)));
            }
        }
        // Kahn ordering: a rule is ready once its source is not a pending target
        let mut pending: Vec<&DerivedRule> = self.derive.iter().collect();
        let mut ordered = Vec::with_capacity(pending.len());
        while !pending.is_empty() {
            let waiting: HashSet<&str> = pending.iter().map(|r| r.target.as_str()).collect();
            let (ready, rest): (Vec<_>, Vec<_>) =
                pending.into_iter().partition(|r| !waiting.contains(r.source.as_str()));
            if ready.is_empty() {
                let names: Vec<&str> = rest.iter().map(|r| r.target.as_str()).collect();
                return Err(Error::InvalidSweep(format!(
                    "derived rules form a cycle through {}",
                    names.join(", ")
                )));
            }
            ordered.extend(ready.into_iter().cloned());
            pending = rest;
        }
        if self.observables.is_empty() {
            return Err(Error::InvalidSweep("observable list is empty".into()));
        }
        let mut seen = HashSet::new();
        for o in &self.observables {
            if !seen.insert(*o) {
                return Err(Error::InvalidSweep(format!("observable `{}` listed twice", o.as_str())));
            }
        }
        if !(self.check_tol > 0.0) {
            return Err(Error::InvalidSweep(format!("check_tol must be > 0, got {}", self.check_tol)));
        }
        if let Some(c) = self.check_n_max {
            model::SystemParams { n_max: c, ..self.params.clone() }.space()?;
        }
        self.params.validate()?;
        Ok(ordered)
    }

    /// Axis indices of flat point `k` (last axis fastest).
    pub fn unravel(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (d, a) in self.axes.iter().enumerate().rev() {
            idx[d] = k % a.count;
            k /= a.count;
        }
        idx
    }

    fn resolve(&self, coords: &[f64], rules: &[DerivedRule]) -> Result<SystemParams> {
        let mut p = self.params.clone();
        for (a, &x) in self.axes.iter().zip(coords) {
            p.set(&a.name, x)?;
        }
        for r in rules {
            let v = r.factor * p.get(&r.source)?;
            p.set(&r.target, v)?;
        }
        Ok(p)
    }

    /// Parameters at every grid point, row-major.
    pub fn points(&self) -> Result<Vec<(Vec<f64>, SystemParams)>> {
        let rules = self.validate()?;
        let values: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        (0..self.n_points())
            .map(|k| {
                let coords: Vec<f64> =
                    self.unravel(k).iter().enumerate().map(|(d, &i)| values[d][i]).collect();
                let p = self.resolve(&coords, &rules)?;
                Ok((coords, p))
            })
            .collect()
    }

    /// Replaces the base truncation; drops the re-check if it would not be
    /// larger.
    pub fn override_n_max(&mut self, n_max: usize) {
        self.params.n_max = n_max;
        if self.check_n_max.is_some_and(|c| c <= n_max) {
            self.check_n_max = None;
        }
    }

    /// Parses the `key = value` form. Recognized keys besides parameter
    /// names: `name`, `axis` (repeatable, `NAME MIN MAX COUNT [linear]`),
    /// `derive.TARGET` (`FACTOR * SOURCE` or `SOURCE`), `observables`,
    /// `output`, `check_n_max` (`none` disables), `check_tol`.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut spec = Self::new("", SystemParams::default_paper());
        let mut seen = HashSet::new();
        for e in config::parse_entries(text)? {
            if e.key != "axis" && !seen.insert(e.key.clone()) {
                return Err(Error::Config {
                    line: e.line,
                    msg: format!("duplicate key `{}`", e.key),
                });
            }
            if spec.params.apply_entry(&e)? {
                continue;
            }
            match e.key.as_str() {
                "name" => spec.name = e.value.clone(),
                "axis" => spec.axes.push(parse_axis(&e)?),
                "observables" => {
                    spec.observables = e
                        .value
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|s| !s.is_empty())
                        .map(ObservableKind::from_str)
                        .collect::<Result<_>>()?;
                }
                "output" => spec.output = Some(e.value.clone()),
                "check_n_max" => {
                    spec.check_n_max = if e.value == "none" { None } else { Some(config::parse_usize(&e)?) };
                }
                "check_tol" => spec.check_tol = config::parse_f64(&e)?,
                k if k.starts_with("derive.") => spec.derive.push(parse_rule(&e)?),
                _ => return Err(Error::UnknownKey(e.key)),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        if !self.name.is_empty() {
            writeln!(s, "name = {}", self.name).unwrap();
        }
        self.params.write_kv(&mut s);
        for a in &self.axes {
            writeln!(s, "axis = {} {} {} {} linear", a.name, fmt_f64(a.min), fmt_f64(a.max), a.count).unwrap();
        }
        for r in &self.derive {
            writeln!(s, "derive.{} = {} * {}", r.target, fmt_f64(r.factor), r.source).unwrap();
        }
        let obs: Vec<&str> = self.observables.iter().map(|o| o.as_str()).collect();
        writeln!(s, "observables = {}", obs.join(" ")).unwrap();
        if let Some(o) = &self.output {
            writeln!(s, "output = {o}").unwrap();
        }
        match self.check_n_max {
            Some(c) => writeln!(s, "check_n_max = {c}").unwrap(),
            None => writeln!(s, "check_n_max = none").unwrap(),
        }
        writeln!(s, "check_tol = {}", fmt_f64(self.check_tol)).unwrap();
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep spec serializes")
    }

    /// Reads either form, chosen by a `.json` extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if is_json(path) {
            Self::from_json_str(&text)
        } else {
            Self::from_kv_str(&text)
        }
    }
}

pub(crate) fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn parse_axis(e: &Entry) -> Result<Axis> {
    let bad = |msg: String| Error::Config { line: e.line, msg };
    let tok: Vec<&str> = e.value.split_whitespace().collect();
    if !(4..=5).contains(&tok.len()) {
        return Err(bad(format!("axis needs `NAME MIN MAX COUNT [linear]`, got `{}`", e.value)));
    }
    let num = |s: &str| config::parse_number(s).ok_or_else(|| bad(format!("`{s}` is not a number")));
    let count = tok[3]
        .parse()
        .map_err(|_| bad(format!("`{}` is not a point count", tok[3])))?;
    if tok.len() == 5 && tok[4] != "linear" {
        return Err(bad(format!("unsupported axis scale `{}`", tok[4])));
    }
    Ok(Axis::linear(tok[0], num(tok[1])?, num(tok[2])?, count))
}

fn parse_rule(e: &Entry) -> Result<DerivedRule> {
    let target = &e.key["derive.".len()..];
    let (factor, source) = match e.value.split_once('*') {
        Some((f, s)) => {
            let f = config::parse_number(f).ok_or_else(|| Error::Config {
                line: e.line,
                msg: format!("`{}` is not a number", f.trim()),
            })?;
            (f, s.trim())
        }
        None => (1.0, e.value.trim()),
    };
    if source.is_empty() || source.contains(char::is_whitespace) {
        return Err(Error::Config {
            line: e.line,
            msg: format!("expected `FACTOR * SOURCE`, got `{}`", e.value),
        });
    }
    Ok(DerivedRule::new(target, factor, source))
}

/// Per-point conditions worth a second look.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFlag {
    /// Steady-state solve failed; observables are missing.
    SolverFailure,
    /// The two truncations disagree; the larger one is reported.
    Truncation,
    /// The re-check at the larger truncation failed.
    CheckFailure,
    /// ⟨a†a⟩ is below the floor; g2 and g3 are undefined.
    Undefined,
}

impl PointFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SolverFailure => "solver_failure",
            Self::Truncation => "truncation",
            Self::CheckFailure => "check_failure",
            Self::Undefined => "undefined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub coords: Vec<f64>,
    pub params: SystemParams,
    pub observables: Option<Observables>,
    pub residual: Option<f64>,
    pub iterations: usize,
    /// Truncation the reported observables come from.
    pub n_max_used: usize,
    /// Largest relative difference between the two truncations.
    pub truncation_deviation: Option<f64>,
    pub flags: Vec<PointFlag>,
    pub error: Option<String>,
    /// Wall time of this point in seconds.
    #[serde(skip)]
    pub seconds: f64,
}

impl PointResult {
    pub fn ok(&self) -> bool {
        self.observables.is_some()
    }

    pub fn value(&self, kind: ObservableKind) -> Option<f64> {
        self.observables.as_ref().and_then(|o| kind.of(o))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Row-major over the axes, one entry per grid point.
    pub points: Vec<PointResult>,
    pub wall_seconds: f64,
    pub threads: usize,
}

/// Relative difference with an absolute floor, so values near zero compare
/// on the scale of the floor.
fn rel_diff(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() / a.abs().max(b.abs()).max(steady::G2_FLOOR),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    }
}

fn observables_deviation(a: &Observables, b: &Observables) -> f64 {
    ObservableKind::ALL
        .iter()
        .map(|k| rel_diff(k.of(a), k.of(b)))
        .fold(0.0, f64::max)
}

/// Steady-state observables of one parameter set.
pub fn solve_point(p: &SystemParams) -> Result<(Observables, f64, usize)> {
    let l = model::liouvillian(p)?;
    let sol = steady::solve_steady(&l, &SteadyOptions::default())?;
    let obs = steady::observables(&sol.rho, p.space()?)?;
    Ok((obs, sol.residual, sol.iterations))
}

fn run_point(coords: Vec<f64>, p: SystemParams, check: Option<(usize, f64)>) -> PointResult {
    let start = Instant::now();
    let mut out = PointResult {
        coords,
        params: p.clone(),
        observables: None,
        residual: None,
        iterations: 0,
        n_max_used: p.n_max,
        truncation_deviation: None,
        flags: Vec::new(),
        error: None,
        seconds: 0.0,
    };
    match solve_point(&p) {
        Ok((obs, res, it)) => {
            out.observables = Some(obs);
            out.residual = Some(res);
            out.iterations = it;
            if let Some((n_check, tol)) = check {
                match solve_point(&p.clone().with_n_max(n_check)) {
                    Ok((obs2, res2, it2)) => {
                        let dev = observables_deviation(&obs, &obs2);
                        out.truncation_deviation = Some(dev);
                        if dev > tol {
                            out.flags.push(PointFlag::Truncation);
                            out.observables = Some(obs2);
                            out.residual = Some(res2);
                            out.iterations = it2;
                            out.n_max_used = n_check;
                        }
                    }
                    Err(e) => {
                        out.flags.push(PointFlag::CheckFailure);
                        out.error = Some(e.to_string());
                    }
                }
            }
            if out.observables.as_ref().is_some_and(|o| o.g2.is_none()) {
                out.flags.push(PointFlag::Undefined);
            }
        }
        Err(e) => {
            out.flags.push(PointFlag::SolverFailure);
            out.error = Some(e.to_string());
        }
    }
    out.seconds = start.elapsed().as_secs_f64();
    out
}

/// Solves every grid point on the current rayon pool.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    let points = spec.points()?;
    let check = spec
        .check_n_max
        .filter(|&c| c != spec.params.n_max)
        .map(|c| (c, spec.check_tol));
    let start = Instant::now();
    let results: Vec<PointResult> = points
        .into_par_iter()
        .map(|(coords, p)| run_point(coords, p, check))
        .collect();
    Ok(SweepResult {
        spec: spec.clone(),
        points: results,
        wall_seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    })
}

/// [`run_sweep`] on a dedicated pool of `threads` workers.
pub fn run_sweep_with_threads(spec: &SweepSpec, threads: usize) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_sweep(spec))
}

/// Sweep-level summary written next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub spec: SweepSpec,
    pub version: String,
    pub threads: usize,
    pub wall_seconds: f64,
    pub n_points: usize,
    pub n_failed: usize,
    pub n_truncation_flagged: usize,
    pub max_residual: f64,
    pub residuals: Vec<Option<f64>>,
    pub point_seconds: Vec<f64>,
    pub flags: BTreeMap<String, usize>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_else(|| "NaN".into())
}

impl SweepResult {
    pub fn shape(&self) -> Vec<usize> {
        self.spec.shape()
    }

    pub fn failed(&self) -> usize {
        self.points.iter().filter(|p| !p.ok()).count()
    }

    /// Column names of [`SweepResult::write_csv`].
    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = self.spec.axes.iter().map(|a| a.name.clone()).collect();
        h.extend(self.spec.derive.iter().map(|r| r.target.clone()));
        h.extend(self.spec.observables.iter().map(|o| o.as_str().to_string()));
        h.extend(
            ["residual", "iterations", "n_max", "truncation_deviation", "flags"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    /// One row per point in grid order. Undefined or missing values are
    /// written as `NaN`; floats use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        for p in &self.points {
            let mut row: Vec<String> = p.coords.iter().map(|&x| fmt_f64(x)).collect();
            for r in &self.spec.derive {
                row.push(fmt_f64(p.params.get(&r.target)?));
            }
            for o in &self.spec.observables {
                row.push(fmt_opt(p.value(*o)));
            }
            row.push(fmt_opt(p.residual));
            row.push(p.iterations.to_string());
            row.push(p.n_max_used.to_string());
            row.push(fmt_opt(p.truncation_deviation));
            let flags: Vec<&str> = p.flags.iter().map(|f| f.as_str()).collect();
            row.push(if flags.is_empty() { "ok".into() } else { flags.join(";") });
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    pub fn metadata(&self) -> SweepMetadata {
        let mut flags = BTreeMap::new();
        for p in &self.points {
            for f in &p.flags {
                *flags.entry(f.as_str().to_string()).or_insert(0) += 1;
            }
        }
        SweepMetadata {
            spec: self.spec.clone(),
            version: build_version().to_string(),
            threads: self.threads,
            wall_seconds: self.wall_seconds,
            n_points: self.points.len(),
            n_failed: self.failed(),
            n_truncation_flagged: self.points.iter().filter(|p| p.flags.contains(&PointFlag::Truncation)).count(),
            max_residual: self.points.iter().filter_map(|p| p.residual).fold(0.0, f64::max),
            residuals: self.points.iter().map(|p| p.residual).collect(),
            point_seconds: self.points.iter().map(|p| p.seconds).collect(),
            flags,
        }
    }

    /// Points as JSON (deterministic; no timings).
    pub fn points_json(&self) -> String {
        serde_json::to_string_pretty(&self.points).expect("points serialize")
    }

    /// Writes the data file and a `.meta.json` sidecar; returns the sidecar
    /// path.
    pub fn write_files(&self, data_path: &Path, json: bool) -> Result<std::path::PathBuf> {
        if json {
            std::fs::write(data_path, self.points_json() + "\n")?;
        } else {
            let f = std::fs::File::create(data_path)?;
            self.write_csv(std::io::BufWriter::new(f))?;
        }
        let meta_path = data_path.with_extension("meta.json");
        std::fs::write(&meta_path, serde_json::to_string_pretty(&self.metadata())? + "\n")?;
        Ok(meta_path)
    }

    fn axis_index(&self, name: &str) -> Result<usize> {
        self.spec
            .axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::InvalidSweep(format!("no axis named `{name}`")))
    }

    /// Sub-sweep with axis `name` held at grid index `index`.
    pub fn slice(&self, name: &str, index: usize) -> Result<SweepResult> {
        let d = self.axis_index(name)?;
        let count = self.spec.axes[d].count;
        if index >= count {
            return Err(Error::InvalidSweep(format!(
                "index {index} out of range for axis `{name}` with {count} points"
            )));
        }
        let mut spec = self.spec.clone();
        let fixed = spec.axes.remove(d);
        spec.params.set(&fixed.name, fixed.values()[index])?;
        let points = self
            .points
            .iter()
            .enumerate()
            .filter(|(k, _)| self.spec.unravel(*k)[d] == index)
            .map(|(_, p)| {
                let mut p = p.clone();
                p.coords.remove(d);
                p
            })
            .collect();
        Ok(SweepResult {
            spec,
            points,
            wall_seconds: self.wall_seconds,
            threads: self.threads,
        })
    }

    /// `(coordinate, value)` along the only axis.
    pub fn series(&self, kind: ObservableKind) -> Result<Vec<(f64, Option<f64>)>> {
        if self.spec.axes.len() != 1 {
            return Err(Error::NotOneDimensional(self.spec.axes.len()));
        }
        Ok(self.points.iter().map(|p| (p.coords[0], p.value(kind))).collect())
    }
}

/// Local maxima of a 1-D sweep; see [`find_peaks_in`].
pub fn find_peaks(result: &SweepResult, kind: ObservableKind) -> Result<Vec<(f64, f64)>> {
    let series = result.series(kind)?;
    let xs: Vec<f64> = series.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = series.iter().map(|s| s.1.unwrap_or(f64::NAN)).collect();
    Ok(find_peaks_in(&xs, &ys))
}

/// Interior local maxima: a run of equal values is a peak when both
/// neighbours of the run are strictly lower, reported at its leftmost index.
/// Runs touching an end and runs next to `NaN` are not peaks.
pub fn find_peaks_in(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let n = ys.len().min(xs.len());
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        let mut j = i;
        while j + 1 < n && ys[j + 1] == ys[i] {
            j += 1;
        }
        if j + 1 < n && ys[i - 1] < ys[i] && ys[j + 1] < ys[i] {
            peaks.push((xs[i], ys[i]));
        }
        i = j + 1;
    }
    peaks
}

/// Files emitted for a preset name: `(file stem, content)`.
pub enum PresetFile {
    Sweep(SweepSpec),
    Trajectories(TrajectorySpec),
}

impl PresetFile {
    pub fn stem(&self) -> &str {
        match self {
            Self::Sweep(s) => &s.name,
            Self::Trajectories(t) => &t.name,
        }
    }

    pub fn to_kv_string(&self) -> String {
        match self {
            Self::Sweep(s) => s.to_kv_string(),
            Self::Trajectories(t) => t.to_kv_string(),
        }
    }

    pub fn to_json_string(&self) -> String {
        match self {
            Self::Sweep(s) => s.to_json_string(),
            Self::Trajectories(t) => t.to_json_string(),
        }
    }
}

pub const PRESET_NAMES: [&str; 5] = ["fig2", "fig3cd", "fig4", "fig5ab", "fig5cd"];

fn preset_params() -> SystemParams {
    SystemParams::default_paper().with_n_max(PRESET_N_MAX)
}

fn preset_sweep(name: &str) -> SweepSpec {
    let mut s = SweepSpec::new(name, preset_params());
    s.output = Some(format!("{name}.csv"));
    s.check_n_max = Some(PRESET_CHECK_N_MAX);
    s
}

/// Cavity excitation versus Δ_A ∈ [-6, 3] g₀ in steps of 0.01 g₀, for
/// U = 0 and U = 8 g₀.
pub fn fig2() -> SweepSpec {
    let g0 = preset_params().g0;
    preset_sweep("fig2")
        .axis("u_vdw", 0.0, 8.0 * g0, 2)
        .axis("delta_a", -6.0 * g0, 3.0 * g0, 901)
        .derive("delta_cav", 1.0, "delta_a")
}

/// g₀ × U grid at the magic detuning Δ_A = -U/3 (U up to 10 g₀ at the
/// largest g₀).
pub fn fig4() -> SweepSpec {
    preset_sweep("fig4")
        .axis("g0", 1.0, 20.0, 20)
        .axis("u_vdw", 0.0, 200.0, 41)
        .derive("delta_a", -1.0 / 3.0, "u_vdw")
        .derive("delta_cav", 1.0, "delta_a")
}

/// The overlap line U = 3√2 g₀ at the magic detuning, versus g₀.
pub fn fig4_overlap() -> SweepSpec {
    let mut s = preset_sweep("fig4_overlap")
        .axis("g0", 1.0, 20.0, 20)
        .derive("u_vdw", 3.0 * std::f64::consts::SQRT_2, "g0")
        .derive("delta_a", -1.0 / 3.0, "u_vdw")
        .derive("delta_cav", 1.0, "delta_a");
    s.output = Some("fig4_overlap.csv".into());
    s
}

/// g₀ × η grid at the antiblockade detuning Δ_A = -U/2 with U = 8 g₀; the
/// grid contains (g₀, η) = (15, 1.5) MHz exactly.
pub fn fig5ab() -> SweepSpec {
    preset_sweep("fig5ab")
        .axis("g0", 1.0, 20.0, 20)
        .axis("eta", 0.25, 2.5, 10)
        .derive("u_vdw", 8.0, "g0")
        .derive("delta_a", -0.5, "u_vdw")
        .derive("delta_cav", 1.0, "delta_a")
}

/// Configuration files for a preset name.
pub fn preset(name: &str) -> Result<Vec<PresetFile>> {
    let g0 = preset_params().g0;
    Ok(match name {
        "fig2" => vec![PresetFile::Sweep(fig2())],
        "fig4" => vec![PresetFile::Sweep(fig4()), PresetFile::Sweep(fig4_overlap())],
        "fig5ab" => vec![PresetFile::Sweep(fig5ab())],
        "fig3cd" => {
            let ela = preset_params().with_detuning(std::f64::consts::SQRT_2 * g0);
            let mut magic = preset_params();
            magic.u_vdw = 8.0 * g0;
            let magic = magic.clone().with_detuning(-magic.u_vdw / 3.0);
            vec![
                PresetFile::Trajectories(TrajectorySpec::new("fig3c", ela)),
                PresetFile::Trajectories(TrajectorySpec::new("fig3d", magic)),
            ]
        }
        "fig5cd" => [("fig5c", 5.0), ("fig5d", 15.0)]
            .into_iter()
            .map(|(stem, g)| {
                let mut p = preset_params();
                p.g0 = g;
                p.eta = 1.5;
                p.u_vdw = 8.0 * g;
                let p = p.clone().with_detuning(-p.u_vdw / 2.0);
                PresetFile::Trajectories(TrajectorySpec::new(stem, p))
            })
            .collect(),
        other => {
            return Err(Error::InvalidSweep(format!(
                "unknown preset `{other}`; expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}

/// Cavity truncation of trajectory files that do not set `n_max`. The
/// trajectories stay near the vacuum, so a few levels suffice.
pub const TRAJ_N_MAX: usize = 6;

fn default_trajectories() -> usize {
    10
}

fn default_t_max() -> f64 {
    100.0
}

/// Description of a trajectory ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    #[serde(default)]
    pub name: String,
    pub params: SystemParams,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    /// Duration of each trajectory (µs).
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Step (µs); [`mcwf::default_dt`] when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Burst window (µs); [`mcwf::default_window`] when absent.
    #[serde(default)]
    pub window: Option<f64>,
}

impl Default for TrajectorySpec {
    /// Default parameters at [`TRAJ_N_MAX`], 10 trajectories of 100 µs.
    fn default() -> Self {
        Self::new("traj", SystemParams::default_paper().with_n_max(TRAJ_N_MAX))
    }
}

impl TrajectorySpec {
    pub fn new(name: &str, params: SystemParams) -> Self {
        Self {
            name: name.to_string(),
            params,
            trajectories: default_trajectories(),
            t_max: default_t_max(),
            dt: None,
            seed: 0,
            window: None,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| mcwf::default_dt(&self.params))
    }

    pub fn window(&self) -> f64 {
        self.window.unwrap_or_else(|| mcwf::default_window(&self.params))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.trajectories == 0 {
            return Err(Error::InvalidParams("trajectories must be >= 1".into()));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::InvalidParams(format!("t_max must be > 0, got {}", self.t_max)));
        }
        if !(self.window() > 0.0) {
            return Err(Error::InvalidParams(format!("window must be > 0, got {}", self.window())));
        }
        let product = self.dt() * self.params.max_rate();
        if !(self.dt() > 0.0) || product >= mcwf::STEP_BOUND {
            return Err(Error::Stability {
                dt: self.dt(),
                scale: self.params.max_rate(),
                product,
                bound: mcwf::STEP_BOUND,
            });
        }
        Ok(())
    }

    /// Keys: parameter names, `name`, `trajectories`, `t_max`, `dt`, `seed`,
    /// `window` (`dt` and `window` accept `default`). Unset parameters take
    /// the [`Default`] values.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        spec.name.clear();
        let mut seen = HashSet::new();
        for e in config::parse_entries(text)? {
            if !seen.insert(e.key.clone()) {
                return Err(Error::Config {
                    line: e.line,
                    msg: format!("duplicate key `{}`", e.key),
                });
            }
            if spec.params.apply_entry(&e)? {
                continue;
            }
            let opt = |e: &Entry| -> Result<Option<f64>> {
                if e.value == "default" {
                    Ok(None)
                } else {
                    config::parse_f64(e).map(Some)
                }
            };
            match e.key.as_str() {
                "name" => spec.name = e.value.clone(),
                "trajectories" => spec.trajectories = config::parse_usize(&e)?,
                "t_max" => spec.t_max = config::parse_f64(&e)?,
                "seed" => {
                    spec.seed = e.value.parse().map_err(|_| Error::Config {
                        line: e.line,
                        msg: format!("`{}` is not a seed", e.value),
                    })?
                }
                "dt" => spec.dt = opt(&e)?,
                "window" => spec.window = opt(&e)?,
                _ => return Err(Error::UnknownKey(e.key)),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        if !self.name.is_empty() {
            writeln!(s, "name = {}", self.name).unwrap();
        }
        self.params.write_kv(&mut s);
        writeln!(s, "trajectories = {}", self.trajectories).unwrap();
        writeln!(s, "t_max = {}", fmt_f64(self.t_max)).unwrap();
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_else(|| "default".into());
        writeln!(s, "dt = {}", opt(self.dt)).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "window = {}", opt(self.window)).unwrap();
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory spec serializes")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if is_json(path) {
            Self::from_json_str(&text)
        } else {
            Self::from_kv_str(&text)
        }
    }
}
