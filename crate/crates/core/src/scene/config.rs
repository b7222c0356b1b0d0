use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, SPEED_OF_LIGHT};

use super::beam_gain_model;

/// Version tag expected in every scene file.
pub const SCHEMA_VERSION: u32 = 1;

/// Full description of a simulated deployment. Doubles as ground truth for
/// evaluation.
///
/// Angles are radians. Beam centers are world-frame directions at the
/// transmitter (counterclockwise from +x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub schema_version: u32,
    pub tx_position: Point2,
    pub rx_positions: Vec<Point2>,
    #[serde(default = "defaults::carrier_frequency")]
    pub carrier_frequency: f64,
    #[serde(default = "defaults::bandwidth")]
    pub bandwidth: f64,
    #[serde(default = "defaults::frame_interval")]
    pub frame_interval: f64,
    #[serde(default = "defaults::num_taps")]
    pub num_taps: usize,
    #[serde(default = "defaults::num_beams")]
    pub num_beams: usize,
    pub beam_centers: Vec<f64>,
    pub beam_width_3db: f64,
    pub duration: f64,
    #[serde(default = "defaults::los_amplitude")]
    pub los_amplitude: Complex64,
    #[serde(default)]
    pub static_scatterers: Vec<StaticScatterer>,
    #[serde(default)]
    pub targets: Vec<ArticulatedTarget>,
    pub clock_models: Vec<ClockModel>,
    #[serde(default = "defaults::noise_floor")]
    pub noise_floor: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "defaults::v_max")]
    pub v_max: f64,
}

pub(crate) mod defaults {
    use num_complex::Complex64;

    pub fn carrier_frequency() -> f64 {
        60e9
    }
    pub fn bandwidth() -> f64 {
        1.76e9
    }
    pub fn frame_interval() -> f64 {
        5e-4
    }
    pub fn num_taps() -> usize {
        128
    }
    pub fn num_beams() -> usize {
        12
    }
    pub fn los_amplitude() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }
    /// 30 dB below a unit line-of-sight gain.
    pub fn noise_floor() -> f64 {
        1e-3
    }
    pub fn v_max() -> f64 {
        2.0
    }
}

impl SceneConfig {
    /// A scene with default radio parameters, a 12-beam fan starting at
    /// `first_beam` (radians) with `spacing` between beams and a 3 dB width
    /// equal to the spacing, constant 1 kHz FO and uniform TO over 32 taps
    /// on every receiver.
    pub fn with_defaults(
        tx: Point2,
        rx_positions: Vec<Point2>,
        first_beam: f64,
        spacing: f64,
        duration: f64,
        seed: u64,
    ) -> Self {
        let num_beams = defaults::num_beams();
        let bandwidth = defaults::bandwidth();
        let clock = ClockModel {
            to: TimingOffset::UniformPerFrame {
                max_s: 32.0 / bandwidth,
            },
            fo: FrequencyOffset::Constant { hz: 1000.0 },
        };
        Self {
            schema_version: SCHEMA_VERSION,
            tx_position: tx,
            clock_models: vec![clock; rx_positions.len()],
            rx_positions,
            carrier_frequency: defaults::carrier_frequency(),
            bandwidth,
            frame_interval: defaults::frame_interval(),
            num_taps: defaults::num_taps(),
            num_beams,
            beam_centers: (0..num_beams)
                .map(|b| first_beam + spacing * b as f64)
                .collect(),
            beam_width_3db: spacing,
            duration,
            los_amplitude: defaults::los_amplitude(),
            static_scatterers: Vec::new(),
            targets: Vec::new(),
            noise_floor: defaults::noise_floor(),
            rng_seed: seed,
            v_max: defaults::v_max(),
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Path length spanned by one tap, `c / bandwidth`.
    pub fn tap_length(&self) -> f64 {
        SPEED_OF_LIGHT / self.bandwidth
    }

    /// Tap spacing in seconds.
    pub fn tap_delay(&self) -> f64 {
        1.0 / self.bandwidth
    }

    /// Number of frames per receiver, `floor(duration / T)`.
    pub fn num_frames(&self) -> usize {
        // guard against 1.0 / 5e-4 landing just below an integer
        ((self.duration / self.frame_interval) * (1.0 + 1e-12)).floor() as usize
    }

    pub fn num_receivers(&self) -> usize {
        self.rx_positions.len()
    }

    /// Mean spacing between adjacent beam centers.
    pub fn beam_spacing(&self) -> f64 {
        if self.beam_centers.len() < 2 {
            return self.beam_width_3db;
        }
        let n = self.beam_centers.len();
        (self.beam_centers[n - 1] - self.beam_centers[0]) / (n - 1) as f64
    }

    /// Line-of-sight SNR in dB, `|A_los|² / noise_floor`.
    pub fn los_snr_db(&self) -> f64 {
        10.0 * (self.los_amplitude.norm_sqr() / self.noise_floor).log10()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SceneConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("scene: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.num_beams < 1 {
            return fail("num_beams must be at least 1".into());
        }
        if self.num_taps < 2 {
            return fail("num_taps must be at least 2".into());
        }
        for (name, v) in [
            ("bandwidth", self.bandwidth),
            ("frame_interval", self.frame_interval),
            ("carrier_frequency", self.carrier_frequency),
            ("beam_width_3db", self.beam_width_3db),
            ("duration", self.duration),
            ("v_max", self.v_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.noise_floor.is_finite() && self.noise_floor >= 0.0) {
            return fail("noise_floor must be non-negative".into());
        }
        if self.num_frames() == 0 {
            return fail("duration is shorter than one frame interval".into());
        }
        if self.beam_centers.len() != self.num_beams {
            return fail(format!(
                "beam_centers has {} entries but num_beams is {}",
                self.beam_centers.len(),
                self.num_beams
            ));
        }
        if self.beam_centers.windows(2).any(|w| w[1] <= w[0]) {
            return fail("beam_centers must be strictly increasing".into());
        }
        if self.rx_positions.is_empty() {
            return fail("at least one receiver is required".into());
        }
        if self.rx_positions.contains(&self.tx_position) {
            return fail("every receiver must be away from the transmitter".into());
        }
        if self.clock_models.len() != self.rx_positions.len() {
            return fail(format!(
                "{} clock models for {} receivers",
                self.clock_models.len(),
                self.rx_positions.len()
            ));
        }
        let max_to = (self.num_taps - 1) as f64 * self.tap_delay();
        for (i, c) in self.clock_models.iter().enumerate() {
            c.validate(max_to)
                .map_err(|m| Error::Config(format!("clock_models[{i}]: {m}")))?;
        }
        if self.los_amplitude.norm() == 0.0 {
            return fail("los_amplitude must be nonzero".into());
        }
        for (i, s) in self.static_scatterers.iter().enumerate() {
            if s.amplitude.norm() == 0.0 {
                return fail(format!("static_scatterers[{i}] has zero amplitude"));
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            t.validate(self.v_max)
                .map_err(|m| Error::Config(format!("targets[{i}]: {m}")))?;
        }
        self.check_los_dominates()
    }

    /// The line of sight must be the strongest deposited path at every
    /// receiver, otherwise first-peak alignment has nothing to lock onto.
    fn check_los_dominates(&self) -> Result<()> {
        let strongest_beam = |world_angle: f64| {
            self.beam_centers
                .iter()
                .map(|&c| beam_gain_model(c, self.beam_width_3db, world_angle))
                .fold(0.0f64, f64::max)
        };
        for (r, &rx) in self.rx_positions.iter().enumerate() {
            let los = self.los_amplitude.norm() * strongest_beam((rx - self.tx_position).angle());
            for (i, s) in self.static_scatterers.iter().enumerate() {
                let deposited =
                    s.amplitude.norm() * strongest_beam((s.position - self.tx_position).angle());
                if deposited >= los {
                    return Err(Error::Config(format!(
                        "static_scatterers[{i}] ({deposited:.3}) is not weaker than the line of sight ({los:.3}) at receiver {r}"
                    )));
                }
            }
            for (i, t) in self.targets.iter().enumerate() {
                // moving parts can sit on a beam center, so bound by unit gain
                let strongest = t.max_amplitude();
                if strongest >= los {
                    return Err(Error::Config(format!(
                        "targets[{i}] amplitude {strongest:.3} is not weaker than the line of sight ({los:.3}) at receiver {r}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticScatterer {
    pub position: Point2,
    pub amplitude: Complex64,
}

/// Per-receiver local-oscillator model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockModel {
    pub to: TimingOffset,
    pub fo: FrequencyOffset,
}

impl ClockModel {
    pub fn ideal() -> Self {
        Self {
            to: TimingOffset::Zero,
            fo: FrequencyOffset::Zero,
        }
    }

    fn validate(&self, max_to: f64) -> std::result::Result<(), String> {
        match self.to {
            TimingOffset::Zero => {}
            TimingOffset::UniformPerFrame { max_s } => {
                if !(max_s > 0.0 && max_s <= max_to) {
                    return Err(format!("uniform TO bound {max_s} outside (0, {max_to}]"));
                }
            }
            TimingOffset::Drift {
                initial_s,
                rate,
                wrap_s,
            } => {
                if !(wrap_s > 0.0 && wrap_s <= max_to) {
                    return Err(format!("drift wrap {wrap_s} outside (0, {max_to}]"));
                }
                if !(initial_s.is_finite() && rate.is_finite()) {
                    return Err("drift parameters must be finite".into());
                }
            }
        }
        match self.fo {
            FrequencyOffset::Zero => {}
            FrequencyOffset::Constant { hz } => {
                if !hz.is_finite() {
                    return Err("FO must be finite".into());
                }
            }
            FrequencyOffset::RandomWalk {
                initial_hz,
                step_std_hz,
            } => {
                if !(initial_hz.is_finite() && step_std_hz.is_finite() && step_std_hz >= 0.0) {
                    return Err("random-walk FO parameters must be finite, std ≥ 0".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TimingOffset {
    Zero,
    /// Independent draw per frame, uniform in `[0, max_s)`.
    UniformPerFrame {
        max_s: f64,
    },
    /// `initial_s + rate·t`, wrapped modulo `wrap_s`.
    Drift {
        initial_s: f64,
        rate: f64,
        wrap_s: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FrequencyOffset {
    Zero,
    Constant {
        hz: f64,
    },
    /// Gaussian increments of `step_std_hz` per frame.
    RandomWalk {
        initial_hz: f64,
        step_std_hz: f64,
    },
}

/// Parametric torso trajectory. Positions in meters, times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Trajectory {
    Fixed {
        position: Point2,
    },
    /// Constant-speed traversal of a polyline.
    Polyline {
        points: Vec<Point2>,
        speed: f64,
        #[serde(default)]
        repeat: Repeat,
    },
    /// Ellipse traversed counterclockwise at angular rate `speed / max(a, b)`,
    /// so the linear speed never exceeds `speed`.
    Oval {
        center: Point2,
        semi_axes: [f64; 2],
        speed: f64,
        #[serde(default)]
        start_angle: f64,
        #[serde(default)]
        rotation: f64,
    },
    /// Sinusoidal motion along a fixed world direction.
    Oscillate {
        center: Point2,
        direction: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Repeat {
    /// Stop at the last point.
    #[default]
    Once,
    /// Walk back and forth.
    PingPong,
    /// Return to the first point and start again.
    Loop,
}

/// Instantaneous kinematics of a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Kinematics {
    pub position: Point2,
    pub velocity: Point2,
    pub acceleration: Point2,
}

impl Trajectory {
    pub fn at(&self, t: f64) -> Kinematics {
        match self {
            Trajectory::Fixed { position } => Kinematics {
                position: *position,
                ..Default::default()
            },
            Trajectory::Polyline {
                points,
                speed,
                repeat,
            } => polyline_at(points, *speed, *repeat, t),
            Trajectory::Oval {
                center,
                semi_axes: [a, b],
                speed,
                start_angle,
                rotation,
            } => {
                let w = speed / a.max(*b);
                let phi = start_angle + w * t;
                let (s, c) = phi.sin_cos();
                let local_p = Point2::new(a * c, b * s);
                let local_v = Point2::new(-a * w * s, b * w * c);
                let local_a = Point2::new(-a * w * w * c, -b * w * w * s);
                Kinematics {
                    position: *center + rotate(local_p, *rotation),
                    velocity: rotate(local_v, *rotation),
                    acceleration: rotate(local_a, *rotation),
                }
            }
            Trajectory::Oscillate {
                center,
                direction,
                amplitude,
                frequency,
                phase,
            } => {
                let w = 2.0 * PI * frequency;
                let u = Point2::from_polar(1.0, *direction);
                let arg = w * t + phase;
                Kinematics {
                    position: *center + u * (amplitude * arg.sin()),
                    velocity: u * (amplitude * w * arg.cos()),
                    acceleration: u * (-amplitude * w * w * arg.sin()),
                }
            }
        }
    }

    /// Upper bound on the linear speed.
    pub fn max_speed(&self) -> f64 {
        match self {
            Trajectory::Fixed { .. } => 0.0,
            Trajectory::Polyline { speed, .. } | Trajectory::Oval { speed, .. } => *speed,
            Trajectory::Oscillate {
                amplitude,
                frequency,
                ..
            } => 2.0 * PI * frequency * amplitude.abs(),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Trajectory::Fixed { position } if !position.is_finite() => {
                Err("fixed position must be finite".into())
            }
            Trajectory::Polyline { points, speed, .. } => {
                if points.is_empty() {
                    Err("polyline needs at least one point".into())
                } else if !(*speed >= 0.0) {
                    Err("polyline speed must be non-negative".into())
                } else {
                    Ok(())
                }
            }
            Trajectory::Oval {
                semi_axes, speed, ..
            } => {
                if semi_axes.iter().any(|&a| !(a > 0.0)) || !(*speed >= 0.0) {
                    Err("oval needs positive semi-axes and non-negative speed".into())
                } else {
                    Ok(())
                }
            }
            Trajectory::Oscillate { frequency, .. } if !(*frequency >= 0.0) => {
                Err("oscillation frequency must be non-negative".into())
            }
            _ => Ok(()),
        }
    }
}

fn rotate(p: Point2, angle: f64) -> Point2 {
    let (s, c) = angle.sin_cos();
    Point2::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

fn polyline_at(points: &[Point2], speed: f64, repeat: Repeat, t: f64) -> Kinematics {
    let mut pts: Vec<Point2> = points.to_vec();
    if repeat == Repeat::Loop && pts.len() > 1 {
        pts.push(pts[0]);
    }
    let seg_len: Vec<f64> = pts.windows(2).map(|w| w[0].distance(w[1])).collect();
    let total: f64 = seg_len.iter().sum();
    if pts.len() < 2 || total == 0.0 || speed == 0.0 {
        return Kinematics {
            position: pts[0],
            ..Default::default()
        };
    }
    let travelled = speed * t.max(0.0);
    let (mut s, forward) = match repeat {
        Repeat::Once => {
            if travelled >= total {
                return Kinematics {
                    position: *pts.last().unwrap(),
                    ..Default::default()
                };
            }
            (travelled, true)
        }
        Repeat::Loop => (travelled.rem_euclid(total), true),
        Repeat::PingPong => {
            let s = travelled.rem_euclid(2.0 * total);
            if s < total {
                (s, true)
            } else {
                (2.0 * total - s, false)
            }
        }
    };
    for (i, &len) in seg_len.iter().enumerate() {
        if s <= len || i == seg_len.len() - 1 {
            s = s.min(len);
            let dir = if len > 0.0 {
                (pts[i + 1] - pts[i]) * (1.0 / len)
            } else {
                Point2::default()
            };
            let v = if forward { dir * speed } else { dir * -speed };
            return Kinematics {
                position: pts[i] + dir * s,
                velocity: v,
                acceleration: Point2::default(),
            };
        }
        s -= len;
    }
    unreachable!("segment search always returns")
}

/// A walking person: a torso on a trajectory plus oscillating body parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArticulatedTarget {
    pub trajectory: Trajectory,
    pub torso_gain: Complex64,
    #[serde(default)]
    pub limbs: Vec<Limb>,
}

/// Body part oscillating about an attachment point on the torso.
///
/// The part lives in a local frame `offset + amplitude·sin(2πft + φ)·x̂`
/// rotated by `direction` (world radians), or by the torso heading when
/// `direction` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limb {
    pub name: String,
    #[serde(default)]
    pub offset: Point2,
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    pub gain: Complex64,
    #[serde(default)]
    pub direction: Option<f64>,
}

impl ArticulatedTarget {
    pub fn torso(trajectory: Trajectory, gain: f64) -> Self {
        Self {
            trajectory,
            torso_gain: Complex64::new(gain, 0.0),
            limbs: Vec::new(),
        }
    }

    fn max_amplitude(&self) -> f64 {
        self.limbs
            .iter()
            .map(|l| l.gain.norm())
            .fold(self.torso_gain.norm(), f64::max)
    }

    fn validate(&self, v_max: f64) -> std::result::Result<(), String> {
        self.trajectory.validate()?;
        let speed = self.trajectory.max_speed();
        if speed > v_max {
            return Err(format!(
                "torso speed {speed:.3} m/s exceeds v_max {v_max} m/s"
            ));
        }
        if self.torso_gain.norm() == 0.0 {
            return Err("torso gain must be nonzero".into());
        }
        for l in &self.limbs {
            if l.gain.norm() == 0.0 {
                return Err(format!("limb `{}` has zero gain", l.name));
            }
            if !(l.frequency >= 0.0 && l.amplitude.is_finite()) {
                return Err(format!("limb `{}` has invalid oscillation", l.name));
            }
        }
        Ok(())
    }

    /// Kinematics of limb `i` at time `t`.
    pub fn limb_at(&self, i: usize, t: f64) -> Kinematics {
        let limb = &self.limbs[i];
        let torso = self.trajectory.at(t);
        let (psi, psi_rate) = match limb.direction {
            Some(d) => (d, 0.0),
            None => heading(&torso),
        };
        let w = 2.0 * PI * limb.frequency;
        let arg = w * t + limb.phase;
        let local = Point2::new(limb.offset.x + limb.amplitude * arg.sin(), limb.offset.y);
        let local_v = Point2::new(limb.amplitude * w * arg.cos(), 0.0);
        let world = rotate(local, psi);
        // d/dt R(ψ)q = R(ψ)q' + ψ'·R(ψ + π/2)q
        let velocity =
            torso.velocity + rotate(local_v, psi) + rotate(local, psi + PI / 2.0) * psi_rate;
        Kinematics {
            position: torso.position + world,
            velocity,
            acceleration: Point2::default(),
        }
    }
}

/// Heading angle and its rate of change.
fn heading(k: &Kinematics) -> (f64, f64) {
    let v = k.velocity;
    let speed2 = v.dot(v);
    if speed2 < 1e-18 {
        return (0.0, 0.0);
    }
    let rate = (v.x * k.acceleration.y - v.y * k.acceleration.x) / speed2;
    (v.angle(), rate)
}
