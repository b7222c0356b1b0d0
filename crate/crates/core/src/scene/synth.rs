use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frame::CirFrame;
use crate::geometry::{Bistatic, Point2};
use crate::rng::{keyed, Stream};

use super::beam_gain;
use super::clock::ClockTrace;
use super::config::SceneConfig;
use super::truth::{EntityTruth, FrameTruth, GroundTruthLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScattererKind {
    Los,
    Static,
    Torso,
    Limb,
}

/// Snapshot of one reflector at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatterer {
    pub label: String,
    pub kind: ScattererKind,
    pub target: Option<usize>,
    pub position: Point2,
    pub velocity: Point2,
    pub amplitude: Complex64,
}

/// Validated scene plus per-receiver clock realizations.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    scene: SceneConfig,
    traces: Vec<ClockTrace>,
    num_frames: usize,
}

/// All frames and ground truth of a simulation, indexed `[rx_id][k]`.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub frames: Vec<Vec<CirFrame>>,
    pub truth: GroundTruthLog,
}

impl Synthesizer {
    pub fn new(scene: SceneConfig) -> Result<Self> {
        scene.validate()?;
        let num_frames = scene.num_frames();
        let traces = scene
            .clock_models
            .iter()
            .enumerate()
            .map(|(rx, model)| {
                ClockTrace::realize(
                    model,
                    scene.rng_seed,
                    rx,
                    num_frames,
                    scene.frame_interval,
                    scene.tap_delay(),
                )
            })
            .collect();
        Ok(Self {
            scene,
            traces,
            num_frames,
        })
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn clock(&self, rx_id: usize) -> &ClockTrace {
        &self.traces[rx_id]
    }

    /// Every non-LOS reflector at time `t`.
    pub fn scatterers_at(&self, t: f64) -> Vec<Scatterer> {
        let mut out = Vec::new();
        for (i, s) in self.scene.static_scatterers.iter().enumerate() {
            out.push(Scatterer {
                label: format!("static{i}"),
                kind: ScattererKind::Static,
                target: None,
                position: s.position,
                velocity: Point2::default(),
                amplitude: s.amplitude,
            });
        }
        for (ti, target) in self.scene.targets.iter().enumerate() {
            let torso = target.trajectory.at(t);
            out.push(Scatterer {
                label: format!("t{ti}.torso"),
                kind: ScattererKind::Torso,
                target: Some(ti),
                position: torso.position,
                velocity: torso.velocity,
                amplitude: target.torso_gain,
            });
            for (li, limb) in target.limbs.iter().enumerate() {
                let kin = target.limb_at(li, t);
                out.push(Scatterer {
                    label: format!("t{ti}.{}", limb.name),
                    kind: ScattererKind::Limb,
                    target: Some(ti),
                    position: kin.position,
                    velocity: kin.velocity,
                    amplitude: limb.gain,
                });
            }
        }
        out
    }

    /// Synthesize frame `k` for receiver `rx_id`.
    pub fn synthesize_frame(&self, rx_id: usize, k: usize) -> Result<(CirFrame, FrameTruth)> {
        let scene = &self.scene;
        if rx_id >= scene.num_receivers() {
            return Err(Error::Config(format!("receiver {rx_id} does not exist")));
        }
        if k >= self.num_frames {
            return Err(Error::Config(format!(
                "frame {k} is past the end of the run ({} frames)",
                self.num_frames
            )));
        }
        let (nb, nl) = (scene.num_beams, scene.num_taps);
        let t = k as f64 * scene.frame_interval;
        let pair = Bistatic::new(scene.tx_position, scene.rx_positions[rx_id]);
        let lambda = scene.wavelength();
        let tap_len = scene.tap_length();
        let clock = &self.traces[rx_id];
        let to_shift = clock.to_shift[k];
        let fo_phase = clock.fo_phase[k];
        let baseline = pair.baseline();
        let baseline_angle = pair.baseline_angle();

        let mut frame = CirFrame::zeros(k, rx_id, nb, nl);
        let mut entities = Vec::new();
        let mut dropped = 0;

        let mut deposit = |frame: &mut CirFrame,
                           label: String,
                           kind: ScattererKind,
                           target: Option<usize>,
                           position: Point2,
                           velocity: Point2,
                           amplitude: Complex64,
                           path_length: f64,
                           world_angle: f64,
                           range_rate: f64| {
            let excess = (path_length - baseline).max(0.0);
            let tap = (excess / tap_len).round() as usize + to_shift;
            let tap = (tap < nl).then_some(tap);
            if let Some(tap) = tap {
                // phase referenced to the direct path so the LOS carries only φ_off
                let phase = -2.0 * PI * (path_length - baseline) / lambda + fo_phase;
                let rotated = amplitude * Complex64::from_polar(1.0, phase);
                for b in 0..nb {
                    frame.add(b, tap, rotated * beam_gain(scene, b, world_angle));
                }
            } else {
                dropped += 1;
            }
            entities.push(EntityTruth {
                label,
                kind,
                target,
                position,
                velocity,
                path_length,
                excess_range: path_length - baseline,
                aod: pair.to_baseline_angle(world_angle),
                tap,
                doppler_hz: -range_rate / lambda,
            });
        };

        deposit(
            &mut frame,
            "los".into(),
            ScattererKind::Los,
            None,
            scene.rx_positions[rx_id],
            Point2::default(),
            scene.los_amplitude,
            baseline,
            baseline_angle,
            0.0,
        );
        for s in self.scatterers_at(t) {
            let to_tx = s.position - scene.tx_position;
            let to_rx = s.position - scene.rx_positions[rx_id];
            let (d_tx, d_rx) = (to_tx.norm(), to_rx.norm());
            if d_tx == 0.0 || d_rx == 0.0 {
                return Err(Error::Degenerate("scatterer sits on an antenna"));
            }
            // d/dt (|p−tx| + |p−rx|) = v·(û_tx + û_rx)
            let range_rate = s.velocity.dot(to_tx * (1.0 / d_tx) + to_rx * (1.0 / d_rx));
            deposit(
                &mut frame,
                s.label,
                s.kind,
                s.target,
                s.position,
                s.velocity,
                s.amplitude,
                d_tx + d_rx,
                to_tx.angle(),
                range_rate,
            );
        }

        if scene.noise_floor > 0.0 {
            let sigma = (scene.noise_floor / 2.0).sqrt();
            let mut rng = keyed(scene.rng_seed, rx_id, k, Stream::Noise);
            for g in frame.gains_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *g += Complex64::new(sigma * re, sigma * im);
            }
        }
        debug_assert!(frame.is_finite());

        Ok((
            frame,
            FrameTruth {
                rx_id,
                k,
                t,
                to_shift,
                fo_hz: clock.fo_hz[k],
                fo_phase,
                entities,
                dropped,
            },
        ))
    }

    /// Synthesize a contiguous block of frames for one receiver.
    pub fn synthesize_block(
        &self,
        rx_id: usize,
        frames: std::ops::Range<usize>,
        exec: Exec,
    ) -> Result<(Vec<CirFrame>, Vec<FrameTruth>)> {
        let out = exec.map_range(frames, |k| self.synthesize_frame(rx_id, k));
        let mut cirs = Vec::with_capacity(out.len());
        let mut truth = Vec::with_capacity(out.len());
        for r in out {
            let (f, t) = r?;
            cirs.push(f);
            truth.push(t);
        }
        Ok((cirs, truth))
    }

    /// Synthesize every frame of every receiver.
    pub fn run(&self, exec: Exec) -> Result<SimRun> {
        let mut frames = Vec::new();
        let mut truth = GroundTruthLog::default();
        for rx in 0..self.scene.num_receivers() {
            let (f, t) = self.synthesize_block(rx, 0..self.num_frames, exec)?;
            let dropped: usize = t.iter().map(|x| x.dropped).sum();
            if dropped > 0 {
                log::warn!(
                    "receiver {rx}: {dropped} paths fell beyond the last tap and were dropped"
                );
            }
            frames.push(f);
            truth.receivers.push(t);
        }
        Ok(SimRun { frames, truth })
    }
}

/// Synthesize one frame straight from a scene.
pub fn synthesize_frame(
    scene: &SceneConfig,
    rx_id: usize,
    k: usize,
) -> Result<(CirFrame, FrameTruth)> {
    Synthesizer::new(scene.clone())?.synthesize_frame(rx_id, k)
}

/// Synthesize all receivers for the whole duration.
pub fn synthesize_run(scene: &SceneConfig, exec: Exec) -> Result<SimRun> {
    Synthesizer::new(scene.clone())?.run(exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SPEED_OF_LIGHT;
    use crate::scene::config::{
        ArticulatedTarget, ClockModel, FrequencyOffset, Repeat, StaticScatterer, TimingOffset,
        Trajectory,
    };

    fn base_scene() -> SceneConfig {
        let mut s = SceneConfig::with_defaults(
            Point2::new(0.0, 0.0),
            vec![Point2::new(4.0, 0.0)],
            (-20f64).to_radians(),
            10f64.to_radians(),
            0.05,
            11,
        );
        s.clock_models = vec![ClockModel::ideal()];
        s.noise_floor = 0.0;
        s
    }

    fn nonzero_taps(frame: &CirFrame, beam: usize) -> Vec<usize> {
        frame
            .row(beam)
            .iter()
            .enumerate()
            .filter(|(_, g)| g.norm() > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn los_only_is_a_single_constant_tap() {
        let synth = Synthesizer::new(base_scene()).unwrap();
        let (first, _) = synth.synthesize_frame(0, 0).unwrap();
        for k in 0..synth.num_frames() {
            let (f, _) = synth.synthesize_frame(0, k).unwrap();
            for b in 0..f.num_beams() {
                assert_eq!(nonzero_taps(&f, b), vec![0]);
            }
            assert_eq!(f.gains(), first.gains());
        }
    }

    #[test]
    fn los_tap_tracks_timing_offset() {
        let mut scene = base_scene();
        scene.clock_models[0].to = TimingOffset::UniformPerFrame {
            max_s: 32.0 / scene.bandwidth,
        };
        let synth = Synthesizer::new(scene).unwrap();
        for k in 0..synth.num_frames() {
            let (f, truth) = synth.synthesize_frame(0, k).unwrap();
            assert_eq!(nonzero_taps(&f, 2), vec![truth.to_shift]);
        }
    }

    #[test]
    fn one_meter_excess_lands_in_tap_six() {
        // Place a scatterer on the baseline's perpendicular bisector so that
        // the excess path is exactly 1 m: 2·sqrt(4 + y²) = 5.
        let y = (2.5f64 * 2.5 - 4.0).sqrt();
        let mut scene = base_scene();
        scene.static_scatterers.push(StaticScatterer {
            position: Point2::new(2.0, y),
            amplitude: Complex64::new(0.5, 0.0),
        });
        let synth = Synthesizer::new(scene.clone()).unwrap();
        let (_, truth) = synth.synthesize_frame(0, 0).unwrap();
        let s = &truth.entities[1];
        assert!((s.excess_range - 1.0).abs() < 1e-12);
        // independent route: excess delay in seconds times sample rate
        let oracle = ((1.0 / SPEED_OF_LIGHT) * scene.bandwidth).round() as usize;
        assert_eq!(oracle, 6);
        assert_eq!(s.tap, Some(oracle));
    }

    #[test]
    fn tap_mapping_inverts() {
        let scene = base_scene();
        let q = scene.tap_length();
        for tap in 0..scene.num_taps {
            let delay = tap as f64 * q;
            for frac in [-0.49, 0.0, 0.49] {
                let mapped = ((delay + frac * q) / q).round() as usize;
                assert_eq!(mapped, tap);
            }
        }
    }

    #[test]
    fn run_length_and_seeding() {
        let mut scene = base_scene();
        scene.duration = 1.0;
        scene.rx_positions.push(Point2::new(0.0, 5.0));
        scene.beam_centers = (0..12)
            .map(|b| (-10.0 + 10.0 * b as f64).to_radians())
            .collect();
        let clock = ClockModel {
            to: TimingOffset::UniformPerFrame {
                max_s: 32.0 / scene.bandwidth,
            },
            fo: FrequencyOffset::Constant { hz: 1000.0 },
        };
        scene.clock_models = vec![clock.clone(), clock];
        scene.targets.push(ArticulatedTarget::torso(
            Trajectory::Oval {
                center: Point2::new(2.0, 3.0),
                semi_axes: [1.0, 0.6],
                speed: 1.0,
                start_angle: 0.0,
                rotation: 0.0,
            },
            0.3,
        ));
        assert_eq!(scene.num_frames(), 2000);
        let run = synthesize_run(&scene, Exec::Parallel).unwrap();
        assert_eq!(run.frames.len(), 2);
        assert_eq!(run.frames[0].len(), 2000);
        let (a, b) = (&run.truth.receivers[0], &run.truth.receivers[1]);
        assert!(a
            .iter()
            .zip(b)
            .all(|(x, y)| x.torso(0).unwrap().position == y.torso(0).unwrap().position));
        let shifts_a: Vec<_> = a.iter().map(|f| f.to_shift).collect();
        let shifts_b: Vec<_> = b.iter().map(|f| f.to_shift).collect();
        assert_ne!(shifts_a, shifts_b);
    }

    #[test]
    fn same_seed_is_bit_identical_across_strategies() {
        let mut scene = base_scene();
        scene.noise_floor = 1e-3;
        scene.clock_models[0] = ClockModel {
            to: TimingOffset::UniformPerFrame {
                max_s: 20.0 / scene.bandwidth,
            },
            fo: FrequencyOffset::RandomWalk {
                initial_hz: 800.0,
                step_std_hz: 2.0,
            },
        };
        let a = synthesize_run(&scene, Exec::Sequential).unwrap();
        let b = synthesize_run(&scene, Exec::Parallel).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn approaching_target_near_monostatic_gives_two_v_over_lambda() {
        let mut scene = base_scene();
        scene.rx_positions = vec![Point2::new(0.0, -0.01)];
        scene.beam_centers = (0..12)
            .map(|b| (-100.0 + 10.0 * b as f64).to_radians())
            .collect();
        scene.targets.push(ArticulatedTarget::torso(
            Trajectory::Polyline {
                points: vec![Point2::new(8.0, 0.0), Point2::new(1.0, 0.0)],
                speed: 1.0,
                repeat: Repeat::Once,
            },
            0.2,
        ));
        let synth = Synthesizer::new(scene.clone()).unwrap();
        let (_, truth) = synth.synthesize_frame(0, 50).unwrap();
        let fd = truth.torso(0).unwrap().doppler_hz;
        let expected = 2.0 * 1.0 / scene.wavelength();
        assert!(
            (fd - expected).abs() / expected < 1e-3,
            "{fd} vs {expected}"
        );
        assert!((expected - 400.0).abs() < 1.0);
    }

    #[test]
    fn logged_doppler_matches_path_finite_difference() {
        let mut scene = base_scene();
        scene.duration = 2.0;
        scene.targets.push(ArticulatedTarget {
            trajectory: Trajectory::Oval {
                center: Point2::new(2.0, 3.0),
                semi_axes: [1.2, 0.7],
                speed: 1.0,
                start_angle: 0.0,
                rotation: 0.0,
            },
            torso_gain: Complex64::new(0.3, 0.0),
            limbs: vec![crate::scene::Limb {
                name: "wrist".into(),
                offset: Point2::new(0.0, 0.25),
                amplitude: 0.15,
                frequency: 1.0,
                phase: 0.0,
                gain: Complex64::new(0.08, 0.0),
                direction: None,
            }],
        });
        let synth = Synthesizer::new(scene.clone()).unwrap();
        let lambda = scene.wavelength();
        let t_frame = scene.frame_interval;
        let mut checked = 0;
        for k in (1..synth.num_frames() - 1).step_by(37) {
            let prev = synth.synthesize_frame(0, k - 1).unwrap().1;
            let cur = synth.synthesize_frame(0, k).unwrap().1;
            let next = synth.synthesize_frame(0, k + 1).unwrap().1;
            for i in 1..cur.entities.len() {
                let fd = cur.entities[i].doppler_hz;
                let fd_num = -(next.entities[i].path_length - prev.entities[i].path_length)
                    / (2.0 * t_frame)
                    / lambda;
                if fd.abs() > 20.0 {
                    assert!((fd - fd_num).abs() / fd.abs() < 0.01, "{fd} vs {fd_num}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn energy_peaks_at_nearest_beam() {
        let mut scene = base_scene();
        let p = Point2::new(2.0, 3.0);
        scene.static_scatterers.push(StaticScatterer {
            position: p,
            amplitude: Complex64::new(0.5, 0.0),
        });
        let synth = Synthesizer::new(scene.clone()).unwrap();
        let (f, truth) = synth.synthesize_frame(0, 0).unwrap();
        let tap = truth.entities[1].tap.unwrap();
        let best = (0..f.num_beams())
            .max_by(|&a, &b| f.get(a, tap).norm().total_cmp(&f.get(b, tap).norm()))
            .unwrap();
        let theta = p.angle();
        let nearest = (0..f.num_beams())
            .min_by(|&a, &b| {
                (scene.beam_centers[a] - theta)
                    .abs()
                    .total_cmp(&(scene.beam_centers[b] - theta).abs())
            })
            .unwrap();
        assert_eq!(best, nearest);
    }

    #[test]
    fn los_must_dominate() {
        let mut scene = base_scene();
        scene.static_scatterers.push(StaticScatterer {
            position: Point2::new(2.0, 1.0),
            amplitude: Complex64::new(1.5, 0.0),
        });
        assert!(matches!(Synthesizer::new(scene), Err(Error::Config(_))));
    }

    #[test]
    fn overflowing_paths_are_dropped_and_counted() {
        let mut scene = base_scene();
        scene.static_scatterers.push(StaticScatterer {
            position: Point2::new(2.0, 40.0),
            amplitude: Complex64::new(0.5, 0.0),
        });
        let synth = Synthesizer::new(scene).unwrap();
        let (f, truth) = synth.synthesize_frame(0, 0).unwrap();
        assert_eq!(truth.dropped, 1);
        assert_eq!(truth.entities[1].tap, None);
        assert_eq!(nonzero_taps(&f, 0), vec![0]);
    }

    #[test]
    fn out_of_range_requests_fail() {
        let synth = Synthesizer::new(base_scene()).unwrap();
        assert!(synth.synthesize_frame(1, 0).is_err());
        assert!(synth.synthesize_frame(0, synth.num_frames()).is_err());
    }
}
