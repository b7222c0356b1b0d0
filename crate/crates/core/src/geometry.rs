//! Plan-view bistatic geometry.
//!
//! Angles of departure are measured at the transmitter, counterclockwise from
//! the TX→RX baseline direction, and wrapped to (−π, π]. World-frame angles
//! (beam centers, headings) are counterclockwise from +x.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(r: f64, angle: f64) -> Self {
        Self::new(r * angle.cos(), r * angle.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    /// World-frame angle of this vector.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Wrap an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// A transmitter/receiver pair with known positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bistatic {
    pub tx: Point2,
    pub rx: Point2,
}

impl Bistatic {
    pub fn new(tx: Point2, rx: Point2) -> Self {
        Self { tx, rx }
    }

    pub fn baseline(&self) -> f64 {
        self.tx.distance(self.rx)
    }

    /// World-frame direction of the TX→RX baseline.
    pub fn baseline_angle(&self) -> f64 {
        (self.rx - self.tx).angle()
    }

    /// Total path length TX → p → RX.
    pub fn path_length(&self, p: Point2) -> f64 {
        p.distance(self.tx) + p.distance(self.rx)
    }

    /// Path length in excess of the direct TX→RX path.
    pub fn excess_range(&self, p: Point2) -> f64 {
        self.path_length(p) - self.baseline()
    }

    /// Angle of departure of p relative to the baseline.
    pub fn aod(&self, p: Point2) -> Result<f64> {
        let d = p - self.tx;
        if d.norm() == 0.0 {
            return Err(Error::Degenerate("point coincides with the transmitter"));
        }
        Ok(wrap_angle(d.angle() - self.baseline_angle()))
    }

    /// Convert a baseline-relative angle to the world frame.
    pub fn to_world_angle(&self, aod: f64) -> f64 {
        wrap_angle(aod + self.baseline_angle())
    }

    /// Convert a world-frame angle to baseline-relative.
    pub fn to_baseline_angle(&self, world: f64) -> f64 {
        wrap_angle(world - self.baseline_angle())
    }

    /// Forward model: (excess bistatic range, AoD).
    pub fn measure(&self, p: Point2) -> Result<(f64, f64)> {
        Ok((self.excess_range(p), self.aod(p)?))
    }

    /// Invert (excess range, AoD) to a position on the bistatic ellipse.
    pub fn localize(&self, excess_range: f64, aod: f64) -> Result<Point2> {
        localize_bistatic(excess_range, aod, self.tx, self.rx)
    }
}

/// Intersect the bistatic ellipse of sum range `|tx−rx| + excess_range`
/// with the ray leaving `tx` at `aod` (baseline-relative).
///
/// Uses `d_tx = (R² − L²) / (2(R − L cos θ))`, the range from TX that puts
/// the point on the ellipse with foci at TX and RX.
pub fn localize_bistatic(excess_range: f64, aod: f64, tx: Point2, rx: Point2) -> Result<Point2> {
    if !(excess_range.is_finite() && aod.is_finite()) {
        return Err(Error::Degenerate("non-finite measurement"));
    }
    if excess_range <= 0.0 {
        return Err(Error::Degenerate(
            "zero excess range: target on the line-of-sight segment",
        ));
    }
    let pair = Bistatic::new(tx, rx);
    let baseline = pair.baseline();
    if baseline == 0.0 {
        return Err(Error::Degenerate("transmitter and receiver coincide"));
    }
    let sum_range = baseline + excess_range;
    let denom = 2.0 * (sum_range - baseline * aod.cos());
    if denom <= 1e-12 * sum_range {
        return Err(Error::Degenerate("ray does not intersect the ellipse"));
    }
    let d_tx = (sum_range * sum_range - baseline * baseline) / denom;
    Ok(tx + Point2::from_polar(d_tx, pair.to_world_angle(aod)))
}

/// Bistatic angle at `p`: angle between the directions to TX and RX.
pub fn bistatic_angle(tx: Point2, rx: Point2, p: Point2) -> Result<f64> {
    let a = tx - p;
    let b = rx - p;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("point coincides with an antenna"));
    }
    let c = (a.dot(b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(c.acos())
}
