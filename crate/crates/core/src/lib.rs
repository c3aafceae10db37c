//! Agent-based simulation of SI malware epidemics spreading over
//! device-to-device links in urban street systems.
//!
//! The crate is organised around one pipeline:
//!
//! 1. [`streets`] builds a random street system: the edge skeleton of a
//!    Poisson-Voronoi tessellation clipped to a square window, with
//!    nearest-point and shortest-path queries on top.
//! 2. [`placement`] drops devices on the streets (a Cox point process:
//!    linear Poisson along every edge) and picks the initially infected
//!    agent near the window centre.
//! 3. [`mobility`] moves each agent through street-adapted random-waypoint
//!    trips. Trajectories are continuous-time itineraries, so positions can
//!    be evaluated at any instant independent of the epidemic step size.
//! 4. [`infection`] runs the discretised SI dynamics: agents within radius
//!    `r` on a shared street infect each other after `rho` seconds of
//!    contact. Connection intervals are computed in closed form per step.
//! 5. [`metrics`] extracts the observables: first-passage time to distance
//!    `u`, propagation speed, infection rate.
//! 6. [`meanfield`] is an independent companion model on i.i.d. street
//!    lengths that yields analytic bounds on the expected passage time per
//!    street, used to sanity-check the full simulator.
//! 7. [`harness`] ties it together: parameter sets, flat-file config,
//!    single runs, parameter sweeps with shared maps, threshold overlays.
//!
//! Everything is deterministic given a master seed: identical parameters
//! and seed reproduce identical output byte for byte.
//!
//! Internally lengths are kilometres and times are hours (speeds stay in
//! km/h); seconds appear only at the I/O boundary.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod infection;
pub mod meanfield;
pub mod metrics;
pub mod mobility;
pub mod placement;
pub mod rng;
pub mod stats;
pub mod streets;

pub use error::Error;

/// Convenient alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Seconds-to-hours conversion used at the I/O boundary.
pub const SECS_PER_HOUR: f64 = 3600.0;

#[cfg(doctest)]
mod book {
    //! Every chapter of the guide in `book/` is compiled as a doctest so
    //! the examples there cannot drift out of sync with the crate.
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(streets, "../../../book/src/streets.md");
    chapter!(devices, "../../../book/src/devices.md");
    chapter!(mobility, "../../../book/src/mobility.md");
    chapter!(infection, "../../../book/src/infection.md");
    chapter!(metrics, "../../../book/src/metrics.md");
    chapter!(meanfield, "../../../book/src/meanfield.md");
    chapter!(experiments, "../../../book/src/experiments.md");
}
