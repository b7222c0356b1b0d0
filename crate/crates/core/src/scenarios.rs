//! Ready-made scenes used by the tests, the benchmark and the CLI.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::scene::{ArticulatedTarget, Limb, Repeat, SceneConfig, StaticScatterer, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Furniture only, no people.
    Static,
    /// One person walking an oval with swinging arms.
    Walker,
    /// Sinusoidal radial motion of the torso.
    SitStand,
    /// A straight back-and-forth walk seen by two receivers at very
    /// different bistatic angles.
    TwoGeometry,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Static,
        Preset::Walker,
        Preset::SitStand,
        Preset::TwoGeometry,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Static => "static",
            Preset::Walker => "walker",
            Preset::SitStand => "sit-stand",
            Preset::TwoGeometry => "two-geometry",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn scene(self, duration: f64, seed: u64) -> SceneConfig {
        match self {
            Preset::Static => static_room(duration, seed),
            Preset::Walker => single_walker(duration, seed),
            Preset::SitStand => sit_stand(duration, seed),
            Preset::TwoGeometry => two_geometry_walk(duration, seed),
        }
    }
}

fn deg(d: f64) -> f64 {
    d * PI / 180.0
}

fn furniture() -> Vec<StaticScatterer> {
    vec![
        StaticScatterer {
            position: Point2::new(5.0, 4.0),
            amplitude: Complex64::new(0.8, 0.0),
        },
        StaticScatterer {
            position: Point2::new(0.5, 6.0),
            amplitude: Complex64::new(0.4, 0.0),
        },
    ]
}

/// 4 m baseline room; beams from −20° to 90° in 10° steps.
fn room(duration: f64, seed: u64) -> SceneConfig {
    let mut s = SceneConfig::with_defaults(
        Point2::new(0.0, 0.0),
        vec![Point2::new(4.0, 0.0)],
        deg(-20.0),
        deg(10.0),
        duration,
        seed,
    );
    s.static_scatterers = furniture();
    s
}

pub fn static_room(duration: f64, seed: u64) -> SceneConfig {
    room(duration, seed)
}

fn arm(name: &str, side: f64, phase: f64) -> Limb {
    Limb {
        name: name.into(),
        offset: Point2::new(0.0, 0.25 * side),
        amplitude: 0.25,
        frequency: 0.9,
        phase,
        gain: Complex64::new(0.08, 0.0),
        direction: None,
    }
}

pub fn walker_body(trajectory: Trajectory) -> ArticulatedTarget {
    ArticulatedTarget {
        trajectory,
        torso_gain: Complex64::new(0.3, 0.0),
        limbs: vec![
            arm("wrist_l", 1.0, 0.0),
            arm("wrist_r", -1.0, PI),
            Limb {
                name: "head".into(),
                offset: Point2::new(0.0, 0.0),
                amplitude: 0.03,
                frequency: 1.8,
                phase: 0.0,
                gain: Complex64::new(0.1, 0.0),
                direction: None,
            },
        ],
    }
}

pub fn single_walker(duration: f64, seed: u64) -> SceneConfig {
    let mut s = room(duration, seed);
    s.targets.push(walker_body(Trajectory::Oval {
        center: Point2::new(2.0, 3.0),
        semi_axes: [1.2, 0.7],
        speed: 1.0,
        start_angle: 0.0,
        rotation: 0.0,
    }));
    s
}

pub fn sit_stand(duration: f64, seed: u64) -> SceneConfig {
    let mut s = room(duration, seed);
    s.targets.push(ArticulatedTarget::torso(
        Trajectory::Oscillate {
            center: Point2::new(2.0, 2.5),
            direction: deg(90.0),
            amplitude: 0.2,
            frequency: 0.5,
            phase: 0.0,
        },
        0.3,
    ));
    s
}

/// Walk midpoint for [`two_geometry_walk`].
pub const TWO_GEOMETRY_MIDPOINT: Point2 = Point2 { x: 0.0, y: 8.0 };

/// Receivers placed so the bistatic angle at the walk midpoint is 40° for
/// RX 0 and 140° for RX 1. The walk runs along the line that makes equal
/// angles with both bisectors, so the ratio of Doppler magnitudes is set by
/// the bistatic factor alone.
pub fn two_geometry_walk(duration: f64, seed: u64) -> SceneConfig {
    let p0 = TWO_GEOMETRY_MIDPOINT;
    let to_tx = deg(-90.0);
    let rx_near = p0 + Point2::from_polar(6.0, to_tx + deg(40.0));
    let rx_far = p0 + Point2::from_polar(6.0, to_tx + deg(140.0));
    let mut s = SceneConfig::with_defaults(
        Point2::new(0.0, 0.0),
        vec![rx_near, rx_far],
        deg(20.0),
        deg(10.0),
        duration,
        seed,
    );
    // bisectors sit at −70° and −20°; walk along their mean direction
    let heading = deg(-45.0);
    let half = Point2::from_polar(0.5, heading);
    s.targets.push(ArticulatedTarget::torso(
        Trajectory::Polyline {
            points: vec![p0 - half, p0 + half],
            speed: 1.0,
            repeat: Repeat::PingPong,
        },
        0.3,
    ));
    s
}
