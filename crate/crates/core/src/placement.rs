//! Device placement on a street system.
//!
//! Susceptible devices form a linear Poisson process of intensity `theta`
//! (devices per km) on the streets; since the street system is itself
//! random this is a Cox process in the plane. One extra device, the
//! infection origin, is placed near the window centre.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::Error;
use crate::geometry::Point;
use crate::streets::{StreetPoint, StreetSystem};
use crate::Result;

/// How the initially infected device is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OriginMode {
    /// Add a fresh device at the street point nearest the window centre;
    /// the susceptible population is left untouched.
    #[default]
    NearestStreet,
    /// Convert the sampled susceptible device nearest the window centre.
    NearestDevice,
}

/// Devices on a street system: susceptible population plus the origin.
#[derive(Clone, Debug)]
pub struct PlacementResult {
    pub susceptible: Vec<StreetPoint>,
    pub infected_origin: StreetPoint,
    /// Linear device intensity the susceptibles were sampled at, per km.
    pub theta: f64,
}

impl PlacementResult {
    /// Samples the susceptible devices and places the origin in one go.
    /// In [`OriginMode::NearestDevice`] mode the converted device is
    /// removed from the susceptible list.
    pub fn generate(
        streets: &StreetSystem,
        theta: f64,
        mode: OriginMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<PlacementResult> {
        let mut susceptible = sample_devices(streets, theta, rng)?;
        let (infected_origin, converted) = place_initial_infected(streets, &susceptible, mode)?;
        if let Some(i) = converted {
            susceptible.remove(i);
        }
        Ok(PlacementResult { susceptible, infected_origin, theta })
    }
}

/// Samples the susceptible devices: independently for each edge of length
/// `L`, a Poisson(theta * L) count of devices at i.i.d. uniform offsets.
/// Devices land on clipped boundary edges too; the offsets are emitted in
/// draw order, edge by edge in ascending id.
pub fn sample_devices(
    streets: &StreetSystem,
    theta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<StreetPoint>> {
    if !theta.is_finite() || theta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "device intensity theta = {theta} must be finite and >= 0"
        )));
    }
    let mut devices = Vec::new();
    if theta == 0.0 {
        return Ok(devices);
    }
    for (id, edge) in streets.edges() {
        let mean = theta * edge.length;
        if mean <= 0.0 {
            continue;
        }
        let count = Poisson::new(mean).expect("mean is positive").sample(rng) as u64;
        for _ in 0..count {
            let offset = rng.gen::<f64>() * edge.length;
            devices.push(StreetPoint { edge: id, offset, coords: streets.point_on_edge(id, offset) });
        }
    }
    Ok(devices)
}

/// Places the origin device per `mode`. Returns the origin street point
/// and, in [`OriginMode::NearestDevice`] mode, the index of the converted
/// device within `devices` (ties go to the lowest index).
pub fn place_initial_infected(
    streets: &StreetSystem,
    devices: &[StreetPoint],
    mode: OriginMode,
) -> Result<(StreetPoint, Option<usize>)> {
    let h = streets.window();
    let center = Point { x: 0.5 * h, y: 0.5 * h };
    match mode {
        OriginMode::NearestStreet => Ok((streets.nearest_street_point(center)?, None)),
        OriginMode::NearestDevice => {
            let best = devices
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    center.dist2(a.coords).total_cmp(&center.dist2(b.coords))
                })
                .map(|(i, _)| i)
                .ok_or(Error::EmptyPlacement)?;
            Ok((devices[best], Some(best)))
        }
    }
}
