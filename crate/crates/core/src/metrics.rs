//! Evaluation indicators: the reach time `tau_u`, the propagation speed
//! `V_u`, and the infection rate `R_u`.
//!
//! `tau_u` is the first time any infected agent is at Euclidean distance
//! `>= u` from the origin agent's starting position. The tracker resolves
//! it exactly: agents move with constant velocity within each itinerary
//! record, so the first boundary crossing inside a record is a quadratic
//! root, not a step-grid observation. Infection times land ahead of the
//! step clock (see the engine notes), so once the clock passes the best
//! crossing candidate no later infection can undercut it and the value is
//! final.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Error;
use crate::geometry::{first_exit_time, Point};
use crate::infection::{InfectionEvent, Model};
use crate::Result;

/// Resolves `tau_u` incrementally while a [`Model`] is stepped.
///
/// Call [`TauTracker::watch`] for every agent whose infection time has
/// settled (the model reports them via `drain_newly_settled`), then
/// [`TauTracker::observe`] once per step, watches first.
///
/// The tracker follows exactly the agents the caller registers. The
/// experiment driver registers transmission-infected agents only and never
/// the origin: propagation means the infection was handed to somebody else,
/// so a lone origin wandering past the ball boundary does not stop the
/// clock.
pub struct TauTracker {
    origin: Point,
    u: f64,
    watches: Vec<Watch>,
    best: f64,
    best_agent: u32,
    finalized: bool,
}

struct Watch {
    agent: u32,
    /// Scan watermark, hours: records before it are already inspected.
    /// The live back record may still grow, so the watermark is a time,
    /// not a record index.
    from: f64,
}

impl TauTracker {
    /// `origin` is X_{I0}(0), the infection origin's starting coordinates.
    pub fn new(origin: Point, u: f64) -> Result<TauTracker> {
        if !u.is_finite() || u <= 0.0 {
            return Err(Error::InvalidParameter(format!("u = {u} km must be positive")));
        }
        Ok(TauTracker {
            origin,
            u,
            watches: Vec::new(),
            best: f64::INFINITY,
            best_agent: u32::MAX,
            finalized: false,
        })
    }

    /// Starts following an agent from its (settled) infection time.
    pub fn watch(&mut self, agent: u32, t_inf: f64) {
        if !self.finalized {
            self.watches.push(Watch { agent, from: t_inf });
        }
    }

    /// Scans every watched agent's newly materialised trajectory for
    /// boundary crossings, then finalises once the model clock has
    /// caught up with the best candidate. Returns `tau_u` (hours) when
    /// final.
    pub fn observe(&mut self, model: &Model) -> Option<f64> {
        if self.finalized {
            return Some(self.best);
        }
        let streets = model.streets();
        for w in &mut self.watches {
            let agent = model.agent(w.agent);
            let limit = agent.covered_to();
            if w.from >= limit {
                continue;
            }
            for rec in agent.records_from(w.from) {
                if rec.t_in >= self.best {
                    break;
                }
                let lo = rec.t_in.max(w.from);
                let hi = rec.t_out;
                if hi <= lo {
                    continue;
                }
                let edge = streets.edge(rec.edge);
                let len = edge.length;
                let start = streets.point_on_edge(rec.edge, rec.offset_at(lo).clamp(0.0, len));
                let vel = streets.edge_direction(rec.edge) * rec.nu;
                if let Some(t) = first_exit_time(start, vel, lo, hi, self.origin, self.u) {
                    if t < self.best {
                        self.best = t;
                        self.best_agent = w.agent;
                    }
                    break;
                }
            }
            w.from = limit;
        }
        if self.best <= model.time() {
            self.finalized = true;
            Some(self.best)
        } else {
            None
        }
    }

    pub fn is_final(&self) -> bool {
        self.finalized
    }

    /// The settled reach time, hours.
    pub fn tau(&self) -> Option<f64> {
        self.finalized.then_some(self.best)
    }

    /// The agent that first carried the infection to distance `u`.
    pub fn crossing_agent(&self) -> Option<u32> {
        self.finalized.then_some(self.best_agent)
    }
}

/// Counts at a fixed instant: infected agents, agents strictly inside the
/// open ball `B(X_{I0}(0), u)`, and infected agents outside that ball.
pub fn census_at(model: &Model, u: f64, t: f64) -> Result<Census> {
    let x0 = model.agent(model.origin()).base().coords;
    let mut census = Census { infected: 0, in_ball: 0, infected_outside: 0 };
    for (i, agent) in model.agents().iter().enumerate() {
        let pos = agent.state_at(t, model.streets())?.position.coords;
        let infected = model.infection_times()[i] <= t;
        let inside = pos.dist(x0) < u;
        if infected {
            census.infected += 1;
            if !inside {
                census.infected_outside += 1;
            }
        }
        if inside {
            census.in_ball += 1;
        }
    }
    Ok(census)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Census {
    pub infected: usize,
    pub in_ball: usize,
    pub infected_outside: usize,
}

/// Everything a single simulation run yields. Times are hours; the CSV
/// writers convert to seconds at the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    /// Ball radius the run was evaluated at, km.
    pub u: f64,
    /// Reach time, hours; `None` when the infection never made it to
    /// distance `u` within the horizon.
    pub tau: Option<f64>,
    pub infected_at_tau: usize,
    pub in_ball_at_tau: usize,
    pub infected_outside_at_tau: usize,
    pub n_agents: usize,
    /// Simulated time the run actually covered, hours.
    pub final_time: f64,
    pub events: Vec<InfectionEvent>,
}

impl RunResult {
    /// Definition 2's ratio: all infected agents at `tau_u` over the
    /// agents strictly inside the open ball at that instant. The
    /// numerator counts infected agents wherever they are, so the raw
    /// ratio can exceed 1 (the crossing agent itself sits on the closed
    /// boundary, outside the open ball). Returns the ratio and a
    /// no-propagation flag; not-reached runs report (0, true).
    pub fn infection_rate(&self) -> (f64, bool) {
        match self.tau {
            None => (0.0, true),
            Some(_) => {
                // The ball is never empty in practice; the guard keeps a
                // desk-scale degenerate census finite.
                let denom = self.in_ball_at_tau.max(1) as f64;
                (self.infected_at_tau as f64 / denom, false)
            }
        }
    }

    /// The in-ball variant, clamped to [0, 1].
    pub fn infection_rate_clamped(&self) -> f64 {
        self.infection_rate().0.min(1.0)
    }
}

/// Definition 1's finite-u speed estimator: `u * mean(1/tau_u)` in km/h,
/// with not-reached runs contributing zero speed. Also returns how many
/// runs never reached distance `u`.
pub fn propagation_speed(results: &[RunResult], u: f64) -> Result<(f64, usize)> {
    if results.is_empty() {
        return Err(Error::InvalidParameter("propagation speed over zero runs".into()));
    }
    let mut inv_sum = 0.0;
    let mut not_reached = 0;
    for r in results {
        debug_assert_eq!(r.u, u, "mixed-u aggregation");
        match r.tau {
            Some(tau) => inv_sum += 1.0 / tau,
            None => not_reached += 1,
        }
    }
    Ok((u * inv_sum / results.len() as f64, not_reached))
}

/// Mean raw infection rate over runs (not-reached runs count as 0).
pub fn mean_infection_rate(results: &[RunResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidParameter("infection rate over zero runs".into()));
    }
    Ok(results.iter().map(|r| r.infection_rate().0).sum::<f64>() / results.len() as f64)
}

/// One aggregated sweep-cell row of the metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub lambda: f64,
    pub theta: f64,
    pub v: f64,
    pub rho_s: f64,
    pub r: f64,
    pub u: f64,
    pub h: f64,
    pub seed_count: usize,
    pub v_u_kmh: f64,
    pub r_u: f64,
    pub not_reached: usize,
}

impl CellSummary {
    #[allow(clippy::too_many_arguments)]
    pub fn from_results(
        lambda: f64,
        theta: f64,
        v: f64,
        rho_s: f64,
        r: f64,
        u: f64,
        h: f64,
        results: &[RunResult],
    ) -> Result<CellSummary> {
        let (v_u_kmh, not_reached) = propagation_speed(results, u)?;
        Ok(CellSummary {
            lambda,
            theta,
            v,
            rho_s,
            r,
            u,
            h,
            seed_count: results.len(),
            v_u_kmh,
            r_u: mean_infection_rate(results)?,
            not_reached,
        })
    }
}

pub const METRICS_CSV_HEADER: &str = "lambda,theta,v,rho,r,u,H,seed_count,V_u_kmh,R_u,not_reached_count";

/// Writes the aggregated metrics table. Floats use shortest round-trip
/// formatting, so equal inputs produce byte-identical files.
pub fn write_metrics_csv(path: &Path, rows: &[CellSummary]) -> Result<()> {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for c in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.lambda, c.theta, c.v, c.rho_s, c.r, c.u, c.h, c.seed_count, c.v_u_kmh, c.r_u, c.not_reached
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub const EVENTS_CSV_HEADER: &str = "agent_id,t_infected_s,infector_id,edge_id";

/// Writes the per-run infection event log; times in seconds.
pub fn write_events_csv(path: &Path, events: &[InfectionEvent]) -> Result<()> {
    let mut out = String::from(EVENTS_CSV_HEADER);
    out.push('\n');
    for e in events {
        writeln!(out, "{},{},{},{}", e.agent, e.t * crate::SECS_PER_HOUR, e.infector, e.edge.0)
            .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
