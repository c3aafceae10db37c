//! Experiment driver: parameter sets, flat key=value configuration,
//! seed derivation, single runs, replicated sweeps, and the threshold
//! overlay curves.
//!
//! Everything is deterministic in (parameters, master seed). A run
//! derives its map, device, and mobility seeds from its own master via
//! tagged mixing; a sweep derives one master per (cell, rep) the same
//! way, so no stream is ever shared across cells unless the shared-map
//! protocol deliberately reuses map seeds per rep.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::Error;
use crate::infection::{Dynamics, Model};
use crate::metrics::{census_at, CellSummary, RunResult, TauTracker};
use crate::mobility::SpeedSpec;
use crate::placement::{OriginMode, PlacementResult};
use crate::rng::{mix, rng_from, tag};
use crate::streets::StreetSystem;
use crate::Result;

/// The full simulation parameter set, in config units (seconds for
/// times, km and km/h for space; the engine converts to hours
/// internally).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParameterSet {
    /// Step size, s. Must stay below `rho_s`.
    pub dt_s: f64,
    /// Infection threshold, s.
    pub rho_s: f64,
    /// Communication radius, km.
    pub r_km: f64,
    /// Street-system seed intensity, km^-2.
    pub lambda: f64,
    /// Device intensity per street length, km^-1.
    pub theta: f64,
    /// Agent speed, km/h: fixed or uniform on an interval.
    pub speed: SpeedSpec,
    /// Window side, km.
    pub h_km: f64,
    /// Metric ball radius, km.
    pub u_km: f64,
    /// Step horizon; `None` defaults to 24 simulated hours.
    pub k_max: Option<u64>,
    /// Master seed.
    pub seed: u64,
    /// Replications per sweep cell.
    pub reps: u32,
    pub origin: OriginMode,
}

impl Default for ParameterSet {
    /// The default experimental configuration: lambda = 50, theta = 3,
    /// v = 5, H = 10, u = 3.5, r = 0.2, rho = 20 s, dt = 0.9 rho, 20
    /// replications.
    fn default() -> Self {
        ParameterSet {
            dt_s: 18.0,
            rho_s: 20.0,
            r_km: 0.2,
            lambda: 50.0,
            theta: 3.0,
            speed: SpeedSpec::Fixed(5.0),
            h_km: 10.0,
            u_km: 3.5,
            k_max: None,
            seed: 0,
            reps: 20,
            origin: OriginMode::NearestStreet,
        }
    }
}

impl ParameterSet {
    pub fn dt_h(&self) -> f64 {
        self.dt_s / crate::SECS_PER_HOUR
    }

    pub fn rho_h(&self) -> f64 {
        self.rho_s / crate::SECS_PER_HOUR
    }

    /// The effective step horizon: ceil(24 h / dt) unless pinned.
    pub fn k_max(&self) -> u64 {
        self.k_max.unwrap_or_else(|| (24.0 * crate::SECS_PER_HOUR / self.dt_s).ceil() as u64)
    }

    /// Representative scalar speed for reporting: the fixed value, or
    /// the interval midpoint.
    pub fn v_report(&self) -> f64 {
        match self.speed {
            SpeedSpec::Fixed(v) => v,
            SpeedSpec::Uniform(lo, hi) => 0.5 * (lo + hi),
        }
    }

    /// Hard validation plus soft warnings (returned, not fatal).
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.dt_s >= self.rho_s {
            return Err(Error::DiscretizationContract { dt_s: self.dt_s, rho_s: self.rho_s });
        }
        let positives = [
            ("dt_s", self.dt_s),
            ("rho_s", self.rho_s),
            ("r_km", self.r_km),
            ("lambda", self.lambda),
            ("h_km", self.h_km),
            ("u_km", self.u_km),
        ];
        for (name, v) in positives {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if !self.theta.is_finite() || self.theta < 0.0 {
            return Err(Error::InvalidParameter(format!("theta = {} must be >= 0", self.theta)));
        }
        match self.speed {
            SpeedSpec::Fixed(v) if v > 0.0 && v.is_finite() => {}
            SpeedSpec::Uniform(lo, hi) if lo > 0.0 && hi >= lo && hi.is_finite() => {}
            s => return Err(Error::InvalidParameter(format!("speed {s:?} must be positive"))),
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be >= 1".into()));
        }
        if self.k_max() == 0 {
            return Err(Error::InvalidParameter("k_max must be >= 1".into()));
        }
        let mut warnings = Vec::new();
        if self.u_km > 0.45 * self.h_km {
            warnings.push(format!(
                "u = {} km exceeds 0.45 H = {} km; the metric ball is not insulated from the window border",
                self.u_km,
                0.45 * self.h_km
            ));
        }
        Ok(warnings)
    }

    /// Applies one `key=value` override.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| {
            Error::ConfigParse(format!("key {key}: cannot parse {value:?} as {what}"))
        };
        let f = |what: &str| value.trim().parse::<f64>().map_err(|_| bad(what));
        match key {
            "dt_s" => self.dt_s = f("seconds")?,
            "rho_s" => self.rho_s = f("seconds")?,
            "r_km" => self.r_km = f("km")?,
            "lambda" => self.lambda = f("km^-2")?,
            "theta" => self.theta = f("km^-1")?,
            "v_kmh" => self.speed = parse_speed(value)?,
            "h_km" => self.h_km = f("km")?,
            "u_km" => self.u_km = f("km")?,
            "k_max" => {
                self.k_max = Some(value.trim().parse::<u64>().map_err(|_| bad("steps"))?)
            }
            "seed" => self.seed = value.trim().parse::<u64>().map_err(|_| bad("u64"))?,
            "reps" => self.reps = value.trim().parse::<u32>().map_err(|_| bad("u32"))?,
            "origin" => {
                self.origin = match value.trim() {
                    "nearest-street" => OriginMode::NearestStreet,
                    "nearest-device" => OriginMode::NearestDevice,
                    other => {
                        return Err(Error::ConfigParse(format!(
                            "origin must be nearest-street or nearest-device, got {other:?}"
                        )))
                    }
                }
            }
            other => return Err(Error::ConfigParse(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a flat key=value config (one pair per line, `#` comments,
    /// blank lines ignored) on top of the defaults. Keys may not repeat.
    pub fn parse_config(text: &str) -> Result<ParameterSet> {
        let mut p = ParameterSet::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::ConfigParse(format!(
                    "line {}: expected key=value, got {raw:?}",
                    lineno + 1
                )));
            };
            let key = key.trim();
            if seen.iter().any(|k| k == key) {
                return Err(Error::ConfigParse(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
            seen.push(key.to_string());
            p.apply_kv(key, value)?;
        }
        Ok(p)
    }

    /// Serialises back to the config format; parsing the output
    /// reproduces the set exactly.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "dt_s = {}", self.dt_s).unwrap();
        writeln!(s, "rho_s = {}", self.rho_s).unwrap();
        writeln!(s, "r_km = {}", self.r_km).unwrap();
        writeln!(s, "lambda = {}", self.lambda).unwrap();
        writeln!(s, "theta = {}", self.theta).unwrap();
        match self.speed {
            SpeedSpec::Fixed(v) => writeln!(s, "v_kmh = {v}").unwrap(),
            SpeedSpec::Uniform(lo, hi) => writeln!(s, "v_kmh = {lo}:{hi}").unwrap(),
        }
        writeln!(s, "h_km = {}", self.h_km).unwrap();
        writeln!(s, "u_km = {}", self.u_km).unwrap();
        writeln!(s, "k_max = {}", self.k_max()).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "reps = {}", self.reps).unwrap();
        let origin = match self.origin {
            OriginMode::NearestStreet => "nearest-street",
            OriginMode::NearestDevice => "nearest-device",
        };
        writeln!(s, "origin = {origin}").unwrap();
        s
    }
}

/// Speed syntax: a number, or `lo:hi` for a uniform interval.
fn parse_speed(value: &str) -> Result<SpeedSpec> {
    let value = value.trim();
    if let Some((lo, hi)) = value.split_once(':') {
        let lo: f64 = lo
            .trim()
            .parse()
            .map_err(|_| Error::ConfigParse(format!("speed interval start {lo:?}")))?;
        let hi: f64 = hi
            .trim()
            .parse()
            .map_err(|_| Error::ConfigParse(format!("speed interval end {hi:?}")))?;
        Ok(SpeedSpec::Uniform(lo, hi))
    } else {
        Ok(SpeedSpec::Fixed(value.parse().map_err(|_| {
            Error::ConfigParse(format!("speed {value:?} is neither a number nor lo:hi"))
        })?))
    }
}

/// Map seed for a standalone run.
pub fn map_seed(run_master: u64) -> u64 {
    mix(run_master, &[tag::MAP])
}

/// Map seed under the shared-map protocol: depends on the sweep master
/// and the rep index only, so every cell sees the same maps.
pub fn shared_map_seed(sweep_master: u64, rep: u32) -> u64 {
    mix(sweep_master, &[tag::MAP, rep as u64])
}

/// Run master for one sweep cell replication.
pub fn cell_run_seed(sweep_master: u64, cell: u64, rep: u32) -> u64 {
    mix(sweep_master, &[tag::SWEEP_CELL, cell, rep as u64])
}

/// A finished run plus the live model (for debugging dumps and
/// post-hoc inspection).
pub struct RunArtifacts {
    pub result: RunResult,
    pub model: Model,
}

/// Generates the map for `seed` and runs on it.
pub fn run_simulation(p: &ParameterSet, seed: u64) -> Result<RunResult> {
    Ok(run_simulation_full(p, seed)?.result)
}

pub fn run_simulation_full(p: &ParameterSet, seed: u64) -> Result<RunArtifacts> {
    p.validate()?;
    let map = StreetSystem::generate(p.lambda, p.h_km, map_seed(seed))?;
    run_on_map_full(map, p, seed)
}

/// Runs on a pre-built map (the shared-map path). The map must match
/// `p.lambda` and `p.h_km`; device and mobility randomness still come
/// from `seed`.
pub fn run_on_map(map: Arc<StreetSystem>, p: &ParameterSet, seed: u64) -> Result<RunResult> {
    Ok(run_on_map_full(map, p, seed)?.result)
}

fn run_on_map_full(map: Arc<StreetSystem>, p: &ParameterSet, seed: u64) -> Result<RunArtifacts> {
    p.validate()?;
    debug_assert_eq!(map.window(), p.h_km, "map window does not match the parameter set");

    let mut device_rng = rng_from(mix(seed, &[tag::DEVICES]));
    let placement = PlacementResult::generate(&map, p.theta, p.origin, &mut device_rng)?;
    let dynamics = Dynamics {
        dt: p.dt_h(),
        rho: p.rho_h(),
        radius: p.r_km,
        speed: p.speed,
        mobility_seed: mix(seed, &[tag::MOBILITY]),
    };
    let mut model = Model::new(map, &placement, dynamics)?;
    let mut tracker = TauTracker::new(model.origin_start().coords, p.u_km)?;

    let k_max = p.k_max();
    loop {
        for id in model.drain_newly_settled() {
            // Propagation means transmission: the origin dragging its own
            // infection across the ball boundary is not spread, so only
            // agents infected by someone else are watched for the
            // crossing. Without this a fast walker alone would register
            // a propagation speed close to its own walking speed.
            if id == model.origin() {
                continue;
            }
            let t = model.infection_time(id);
            tracker.watch(id, t);
        }
        tracker.observe(&model);
        // Early exit: nothing after tau_u affects the metrics.
        if tracker.is_final() || model.step_count() >= k_max {
            break;
        }
        model.step()?;
    }

    let tau = tracker.tau();
    let census = census_at(&model, p.u_km, tau.unwrap_or(model.time()))?;
    let result = RunResult {
        seed,
        u: p.u_km,
        tau,
        infected_at_tau: census.infected,
        in_ball_at_tau: census.in_ball,
        infected_outside_at_tau: census.infected_outside,
        n_agents: model.n_agents(),
        final_time: model.time(),
        events: model.events(),
    };
    Ok(RunArtifacts { result, model })
}

/// A sweepable parameter. Lambda interacts with the scaling rule and
/// the shared-map protocol; the rest simply overwrite the base set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Lambda,
    Theta,
    V,
    R,
    Rho,
}

impl Axis {
    pub fn key(&self) -> &'static str {
        match self {
            Axis::Lambda => "lambda",
            Axis::Theta => "theta",
            Axis::V => "v_kmh",
            Axis::R => "r_km",
            Axis::Rho => "rho_s",
        }
    }

    fn apply(&self, p: &mut ParameterSet, value: f64) {
        match self {
            Axis::Lambda => p.lambda = value,
            Axis::Theta => p.theta = value,
            Axis::V => p.speed = SpeedSpec::Fixed(value),
            Axis::R => p.r_km = value,
            Axis::Rho => p.rho_s = value,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Axis> {
        Ok(match s {
            "lambda" => Axis::Lambda,
            "theta" => Axis::Theta,
            "v" | "v_kmh" => Axis::V,
            "r" | "r_km" => Axis::R,
            "rho" | "rho_s" => Axis::Rho,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown sweep axis {other:?} (lambda, theta, v, r, rho)"
                )))
            }
        })
    }
}

/// Window scaling across a lambda sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaling {
    /// Keep the base H and u.
    FixedH,
    /// Per-cell H = 20 lambda^{-1/4} and u = 0.45 H, keeping the mean
    /// street count per window roughly constant.
    LambdaScaled,
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub axis1: (Axis, Vec<f64>),
    pub axis2: (Axis, Vec<f64>),
    pub scaling: Scaling,
    /// Reuse the same per-rep maps in every cell. Requires lambda (and
    /// under FixedH the window) to be cell-independent.
    pub shared_maps: bool,
    /// Stop after this many cells this invocation (resource cap);
    /// `None` means run everything.
    pub max_cells: Option<u64>,
    /// First cell to run (a previous invocation's resume token).
    pub start_cell: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axis1.0 == self.axis2.0 {
            return Err(Error::InvalidParameter(format!(
                "sweep axes must name distinct parameters, both are {}",
                self.axis1.0.key()
            )));
        }
        if self.axis1.1.is_empty() || self.axis2.1.is_empty() {
            return Err(Error::InvalidParameter("sweep axes need at least one value".into()));
        }
        if self.shared_maps && (self.axis1.0 == Axis::Lambda || self.axis2.0 == Axis::Lambda) {
            return Err(Error::InvalidParameter(
                "shared maps require a fixed lambda (drop the lambda axis or the flag)".into(),
            ));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> u64 {
        (self.axis1.1.len() * self.axis2.1.len()) as u64
    }
}

/// The parameter set for one sweep cell: axes applied, then the scaling
/// rule.
pub fn cell_params(base: &ParameterSet, spec: &SweepSpec, cell: u64) -> ParameterSet {
    let n2 = spec.axis2.1.len() as u64;
    let (i1, i2) = ((cell / n2) as usize, (cell % n2) as usize);
    let mut p = *base;
    spec.axis1.0.apply(&mut p, spec.axis1.1[i1]);
    spec.axis2.0.apply(&mut p, spec.axis2.1[i2]);
    if spec.scaling == Scaling::LambdaScaled {
        p.h_km = 20.0 * p.lambda.powf(-0.25);
        p.u_km = 0.45 * p.h_km;
    }
    p
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub rows: Vec<CellSummary>,
    /// `Some("cell=K")` when the cell budget ran out; pass K as
    /// `start_cell` to continue.
    pub resume: Option<String>,
}

/// Runs the grid cell by cell, `base.reps` replications each, and
/// aggregates one row per cell. Replications of a cell run in parallel;
/// results are ordered by (cell, rep), so the output is deterministic.
pub fn run_sweep(base: &ParameterSet, spec: &SweepSpec) -> Result<SweepOutcome> {
    base.validate()?;
    spec.validate()?;

    let mut shared: HashMap<u32, Arc<StreetSystem>> = HashMap::new();
    if spec.shared_maps {
        // All cells agree on lambda and H; build the per-rep maps once.
        let p0 = cell_params(base, spec, 0);
        for rep in 0..base.reps {
            let map =
                StreetSystem::generate(p0.lambda, p0.h_km, shared_map_seed(base.seed, rep))?;
            shared.insert(rep, map);
        }
    }

    let mut rows = Vec::new();
    let mut resume = None;
    let mut done = 0u64;
    for cell in spec.start_cell..spec.n_cells() {
        if let Some(budget) = spec.max_cells {
            if done >= budget {
                resume = Some(format!("cell={cell}"));
                break;
            }
        }
        let p = cell_params(base, spec, cell);
        let results: Vec<RunResult> = (0..base.reps)
            .into_par_iter()
            .map(|rep| {
                let seed = cell_run_seed(base.seed, cell, rep);
                match shared.get(&rep) {
                    Some(map) => run_on_map(map.clone(), &p, seed),
                    None => run_simulation(&p, seed),
                }
            })
            .collect::<Result<_>>()?;
        rows.push(CellSummary::from_results(
            p.lambda,
            p.theta,
            p.v_report(),
            p.rho_s,
            p.r_km,
            p.u_km,
            p.h_km,
            &results,
        )?);
        done += 1;
    }
    Ok(SweepOutcome { rows, resume })
}

/// One threshold curve `v(lambda) = c/(rho sqrt(lambda))`.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlayCurve {
    pub c: f64,
    /// (lambda, v km/h) along the sweep's lambda axis.
    pub points: Vec<(f64, f64)>,
}

/// The critical-speed overlays for a lambda x v sweep. `rho_s` is in
/// seconds; the curves come out in km/h.
pub fn threshold_overlay(spec: &SweepSpec, cs: &[f64], rho_s: f64) -> Result<Vec<OverlayCurve>> {
    let lambdas = if spec.axis1.0 == Axis::Lambda {
        &spec.axis1.1
    } else if spec.axis2.0 == Axis::Lambda {
        &spec.axis2.1
    } else {
        return Err(Error::InvalidParameter("threshold overlay needs a lambda axis".into()));
    };
    if spec.axis1.0 != Axis::V && spec.axis2.0 != Axis::V {
        return Err(Error::InvalidParameter("threshold overlay needs a v axis".into()));
    }
    let rho_h = rho_s / crate::SECS_PER_HOUR;
    Ok(cs
        .iter()
        .map(|&c| OverlayCurve {
            c,
            points: lambdas.iter().map(|&l| (l, c / (rho_h * l.sqrt()))).collect(),
        })
        .collect())
}

pub const OVERLAY_CSV_HEADER: &str = "c,lambda,v_kmh";

pub fn write_overlay_csv(path: &Path, curves: &[OverlayCurve]) -> Result<()> {
    let mut out = String::from(OVERLAY_CSV_HEADER);
    out.push('\n');
    for curve in curves {
        for (lambda, v) in &curve.points {
            writeln!(out, "{},{lambda},{v}", curve.c).expect("string write");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
