//! Street-adapted random-waypoint mobility.
//!
//! Each agent repeats forever: draw a planar Gaussian waypoint centred on
//! its base, project it onto the streets, walk the shortest street path
//! there and walk the same path back (anchored movement), pausing zero
//! time at either end.
//!
//! An agent's trajectory is materialised lazily as *itinerary records*,
//! maximal spans of constant signed velocity on one edge. Records carry
//! exact entry/exit times, never snapped to step boundaries, because the
//! connection-interval arithmetic consumes them directly. Every agent
//! owns a private rng stream, so its continuous-time trajectory depends
//! only on (mobility seed, agent id, base, speed) and in particular not
//! on the epidemic step size or on other agents.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Error;
use crate::geometry::Point;
use crate::rng::stream_rng;
use crate::streets::{EdgeId, PathFinder, StreetPath, StreetPoint, StreetSystem};
use crate::Result;

/// Waypoint spread is sigma_X = (15 min) * speed; 15 min in hours.
pub const WAYPOINT_SIGMA_H: f64 = 0.25;

/// Draws allowed before a destination sample is declared unreachable.
pub const ISOLATION_RETRY_CAP: u32 = 100;

/// Stationary span (hours) recorded when an agent cannot make progress,
/// comparable to one typical waypoint cycle.
const IDLE_SPAN_H: f64 = 0.25;

/// A cycle advancing time by less than this (hours) counts as stalled;
/// enough consecutive stalls also park the agent for [`IDLE_SPAN_H`].
const MIN_CYCLE_H: f64 = 1e-9;
const STALLED_CYCLE_CAP: u32 = 100;

/// Agent speed policy: one shared speed, or a per-agent draw from an
/// interval (taken once, from the agent's own stream).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpeedSpec {
    Fixed(f64),
    Uniform(f64, f64),
}

impl SpeedSpec {
    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            SpeedSpec::Fixed(v) => v,
            SpeedSpec::Uniform(lo, hi) => rng.gen_range(lo..=hi),
        }
    }
}

/// One maximal span of constant signed velocity on a single edge: the
/// agent's offset moves linearly from `d_in` at `t_in` to `d_out` at
/// `t_out` (half-open in time, `[t_in, t_out)`). `nu` is the signed
/// speed along the edge's canonical direction, km/h; zero means parked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItineraryRecord {
    pub edge: EdgeId,
    pub t_in: f64,
    pub t_out: f64,
    pub d_in: f64,
    pub d_out: f64,
    pub nu: f64,
}

impl ItineraryRecord {
    /// Offset at time `t`, valid for `t` within the record's span.
    pub fn offset_at(&self, t: f64) -> f64 {
        self.d_in + self.nu * (t - self.t_in)
    }

    pub fn duration(&self) -> f64 {
        self.t_out - self.t_in
    }

    pub fn contains(&self, t: f64) -> bool {
        self.t_in <= t && t < self.t_out
    }
}

/// Instantaneous kinematics of an agent.
#[derive(Clone, Copy, Debug)]
pub struct KinematicState {
    pub position: StreetPoint,
    /// Signed on-edge velocity, km/h.
    pub nu: f64,
    /// The agent's absolute speed, km/h.
    pub speed: f64,
}

/// A mobile device. See the module docs for the trajectory model.
#[derive(Clone, Debug)]
pub struct Agent {
    id: u32,
    base: StreetPoint,
    speed: f64,
    rng: ChaCha8Rng,
    itinerary: VecDeque<ItineraryRecord>,
    /// Records cover `[pruned_to, t_covered)` exactly, hours.
    t_covered: f64,
    pruned_to: f64,
    isolated_events: u64,
    stalled_cycles: u32,
}

impl Agent {
    pub fn new(id: u32, base: StreetPoint, speed: SpeedSpec, mobility_seed: u64) -> Agent {
        let mut rng = stream_rng(mobility_seed, u64::from(id));
        let speed = speed.sample(&mut rng);
        Agent {
            id,
            base,
            speed,
            rng,
            itinerary: VecDeque::new(),
            t_covered: 0.0,
            pruned_to: 0.0,
            isolated_events: 0,
            stalled_cycles: 0,
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn base(&self) -> &StreetPoint {
        &self.base
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Itinerary is materialised up to this time (hours, exclusive).
    pub fn covered_to(&self) -> f64 {
        self.t_covered
    }

    /// Earliest time still covered by retained records.
    pub fn pruned_to(&self) -> f64 {
        self.pruned_to
    }

    /// Number of times the agent had to be parked because no progress
    /// was possible (unreachable waypoints or a degenerate component).
    pub fn isolated_events(&self) -> u64 {
        self.isolated_events
    }

    /// Extends the itinerary with whole waypoint cycles until it covers
    /// `t` (strictly: afterwards `covered_to() > t`).
    pub fn extend_to(&mut self, t: f64, streets: &StreetSystem, pf: &mut PathFinder) -> Result<()> {
        while self.t_covered <= t {
            self.next_cycle(streets, pf)?;
        }
        Ok(())
    }

    /// [`Agent::extend_to`] followed by [`Agent::state_at`].
    pub fn advance_to(
        &mut self,
        t: f64,
        streets: &StreetSystem,
        pf: &mut PathFinder,
    ) -> Result<KinematicState> {
        self.extend_to(t, streets, pf)?;
        self.state_at(t, streets)
    }

    /// Position and signed velocity at `t`, which must fall inside the
    /// materialised span `[pruned_to, covered_to)`.
    pub fn state_at(&self, t: f64, streets: &StreetSystem) -> Result<KinematicState> {
        let r = self.record_at(t).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "time {t} h is outside the materialised itinerary [{}, {}) of agent {}",
                self.pruned_to, self.t_covered, self.id
            ))
        })?;
        let len = streets.edge(r.edge).length;
        let offset = r.offset_at(t).clamp(0.0, len);
        Ok(KinematicState {
            position: StreetPoint {
                edge: r.edge,
                offset,
                coords: streets.point_on_edge(r.edge, offset),
            },
            nu: r.nu,
            speed: self.speed,
        })
    }

    pub fn position_at(&self, t: f64, streets: &StreetSystem) -> Result<StreetPoint> {
        Ok(self.state_at(t, streets)?.position)
    }

    /// The itinerary record whose span contains `t`, if materialised.
    pub fn record_at(&self, t: f64) -> Option<&ItineraryRecord> {
        if t < self.pruned_to || t >= self.t_covered {
            return None;
        }
        let idx = self.itinerary.partition_point(|r| r.t_out <= t);
        self.itinerary.get(idx)
    }

    /// All retained records, oldest first.
    pub fn records(&self) -> impl Iterator<Item = &ItineraryRecord> + '_ {
        self.itinerary.iter()
    }

    /// Retained records overlapping `[t, covered_to)`, oldest first.
    pub fn records_from(&self, t: f64) -> impl Iterator<Item = &ItineraryRecord> + '_ {
        let idx = self.itinerary.partition_point(|r| r.t_out <= t);
        self.itinerary.iter().skip(idx)
    }

    /// Drops records that end at or before `t`; positions before the
    /// first retained record become unobservable.
    pub fn prune_before(&mut self, t: f64) {
        while self.itinerary.front().is_some_and(|r| r.t_out <= t) {
            self.itinerary.pop_front();
        }
        self.pruned_to = self.itinerary.front().map_or(self.t_covered, |r| r.t_in);
    }

    /// One full waypoint cycle: base -> destination -> base. Cycles that
    /// cannot make progress fall back to an [`IDLE_SPAN_H`] park at the
    /// base so callers always terminate.
    fn next_cycle(&mut self, streets: &StreetSystem, pf: &mut PathFinder) -> Result<()> {
        let before = self.t_covered;
        match sample_destination(&self.base, self.speed, streets, &mut self.rng) {
            Ok(dest) => {
                let path = pf.shortest_path(streets, &self.base, &dest)?;
                self.append_path(&path, false);
                self.append_path(&path, true);
            }
            Err(Error::IsolatedAgent(_)) => {
                self.isolated_events += 1;
                self.stalled_cycles = 0;
                self.push_idle();
                return Ok(());
            }
            Err(e) => return Err(e),
        }
        if self.t_covered - before < MIN_CYCLE_H {
            self.stalled_cycles += 1;
            if self.stalled_cycles >= STALLED_CYCLE_CAP {
                self.isolated_events += 1;
                self.stalled_cycles = 0;
                self.push_idle();
            }
        } else {
            self.stalled_cycles = 0;
        }
        Ok(())
    }

    /// Converts a street path into records, walked forward or reversed.
    fn append_path(&mut self, path: &StreetPath, reversed: bool) {
        if reversed {
            for seg in path.segments.iter().rev() {
                if !seg.is_empty() {
                    self.push_record(seg.edge, seg.to, seg.from);
                }
            }
        } else {
            for seg in &path.segments {
                if !seg.is_empty() {
                    self.push_record(seg.edge, seg.from, seg.to);
                }
            }
        }
    }

    fn push_record(&mut self, edge: EdgeId, d_in: f64, d_out: f64) {
        let t_in = self.t_covered;
        let t_out = t_in + (d_out - d_in).abs() / self.speed;
        if t_out <= t_in {
            // Sub-ulp segment: no representable time passes; drop it.
            return;
        }
        let nu = if d_out > d_in { self.speed } else { -self.speed };
        // An agent passing straight through its base (or a waypoint that
        // continues a previous leg) keeps a single constant-velocity
        // record, matching the true kinematics.
        if let Some(last) = self.itinerary.back_mut() {
            if last.edge == edge && last.nu == nu && last.d_out == d_in {
                last.t_out = t_out;
                last.d_out = d_out;
                self.t_covered = t_out;
                return;
            }
        }
        self.itinerary.push_back(ItineraryRecord { edge, t_in, t_out, d_in, d_out, nu });
        self.t_covered = t_out;
    }

    fn push_idle(&mut self) {
        let t_in = self.t_covered;
        let t_out = t_in + IDLE_SPAN_H;
        let (edge, d) = (self.base.edge, self.base.offset);
        if let Some(last) = self.itinerary.back_mut() {
            if last.edge == edge && last.nu == 0.0 && last.d_out == d {
                last.t_out = t_out;
                self.t_covered = t_out;
                return;
            }
        }
        self.itinerary.push_back(ItineraryRecord { edge, t_in, t_out, d_in: d, d_out: d, nu: 0.0 });
        self.t_covered = t_out;
    }
}

/// Draws a waypoint: planar Gaussian around `from` with per-coordinate
/// std `WAYPOINT_SIGMA_H * speed`, projected to the nearest street point.
/// Candidates in street components unreachable from `from` are redrawn,
/// up to [`ISOLATION_RETRY_CAP`] times.
pub fn sample_destination(
    from: &StreetPoint,
    speed: f64,
    streets: &StreetSystem,
    rng: &mut ChaCha8Rng,
) -> Result<StreetPoint> {
    if !speed.is_finite() || speed <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "agent speed {speed} km/h must be positive and finite"
        )));
    }
    let home = streets.component_of(from.edge);
    for _ in 0..ISOLATION_RETRY_CAP {
        let p = gaussian_waypoint(from.coords, WAYPOINT_SIGMA_H * speed, rng);
        let cand = streets.nearest_street_point(p)?;
        if streets.component_of(cand.edge) == home {
            return Ok(cand);
        }
    }
    Err(Error::IsolatedAgent(format!(
        "no reachable waypoint in {ISOLATION_RETRY_CAP} draws around ({:.4}, {:.4})",
        from.coords.x, from.coords.y
    )))
}

/// The raw planar Gaussian draw (x coordinate first, then y).
fn gaussian_waypoint(center: Point, sigma: f64, rng: &mut ChaCha8Rng) -> Point {
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    Point { x: center.x + normal.sample(rng), y: center.y + normal.sample(rng) }
}
