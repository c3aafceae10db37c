//! Small planar-geometry toolkit: points, segment projection, window
//! clipping and the first-exit-time solver used by the passage-time
//! tracker. All coordinates are kilometres.

use std::ops::{Add, Mul, Sub};

/// Absolute tolerance (km) for geometric identities. One nanometre-ish;
/// far above f64 noise for window sizes up to hundreds of km.
pub const GEOM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn dist2(self, o: Point) -> f64 {
        (self - o).norm2()
    }

    /// Linear interpolation `self + t * (o - self)`.
    pub fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + t * (o.x - self.x), self.y + t * (o.y - self.y))
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Projection of `p` onto segment `[a, b]`: returns `(t, d2)` where `t` is
/// the clamped parameter in `[0, 1]` and `d2` the squared distance from `p`
/// to the projected point. Degenerate segments project onto `a`.
pub fn project_onto_segment(p: Point, a: Point, b: Point) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.norm2();
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = a.lerp(b, t);
    (t, p.dist2(q))
}

/// Clip segment `[a, b]` to the closed square `[0, h]^2` (Liang-Barsky).
///
/// Returns the clipped endpoints together with the parameter interval
/// `(t0, t1)` of the surviving piece, or `None` when the segment misses
/// the window entirely.
pub fn clip_segment_to_window(a: Point, b: Point, h: f64) -> Option<(Point, Point, f64, f64)> {
    let d = b - a;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for (p, q) in [
        (-d.x, a.x),       // x >= 0
        (d.x, h - a.x),    // x <= h
        (-d.y, a.y),       // y >= 0
        (d.y, h - a.y),    // y <= h
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None; // parallel and outside
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    // Exact endpoints when no cut happened on that side: callers rely on
    // unclipped ends being bitwise the input coordinates.
    let pa = if t0 == 0.0 { a } else { a.lerp(b, t0) };
    let pb = if t1 == 1.0 { b } else { a.lerp(b, t1) };
    Some((pa, pb, t0, t1))
}

/// First time `t` in `(t_lo, t_hi]` at which the moving point
/// `P(t) = start + vel * (t - t_lo)` reaches Euclidean distance `>= u`
/// from `origin`. Returns `t_lo` itself when the point already starts at
/// distance `>= u`. `vel` is in km/h and times in hours.
pub fn first_exit_time(
    start: Point,
    vel: Point,
    t_lo: f64,
    t_hi: f64,
    origin: Point,
    u: f64,
) -> Option<f64> {
    let a0 = start - origin;
    if a0.norm2() >= u * u {
        return Some(t_lo);
    }
    let a = vel.norm2();
    if a == 0.0 {
        return None; // stationary inside the ball
    }
    // |a0 + vel * s|^2 = u^2, upward parabola with value < 0 at s = 0,
    // so the relevant root is the larger one.
    let b = 2.0 * a0.dot(vel);
    let c = a0.norm2() - u * u;
    let disc = b * b - 4.0 * a * c;
    debug_assert!(disc >= 0.0, "c < 0 forces real roots");
    let s = (-b + disc.max(0.0).sqrt()) / (2.0 * a);
    let t = t_lo + s;
    (t <= t_hi).then_some(t)
}
