use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{keyed, Stream};

use super::config::{ClockModel, FrequencyOffset, TimingOffset};

/// Realized clock impairments of one receiver for frames `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockTrace {
    /// Timing offset in whole taps.
    pub to_shift: Vec<usize>,
    /// Instantaneous frequency offset, Hz.
    pub fo_hz: Vec<f64>,
    /// Accumulated FO phase φ_off(k), radians, not wrapped.
    pub fo_phase: Vec<f64>,
}

impl ClockTrace {
    /// Realize `num_frames` frames of `model` for receiver `rx_id`.
    ///
    /// Uniform TO draws are keyed per frame; the FO random walk is a single
    /// sequential stream per receiver.
    pub fn realize(
        model: &ClockModel,
        seed: u64,
        rx_id: usize,
        num_frames: usize,
        frame_interval: f64,
        tap_delay: f64,
    ) -> Self {
        let to_shift = (0..num_frames)
            .map(|k| match model.to {
                TimingOffset::Zero => 0,
                TimingOffset::UniformPerFrame { max_s } => {
                    let u: f64 = keyed(seed, rx_id, k, Stream::TimingOffset).random();
                    ((u * max_s) / tap_delay).floor() as usize
                }
                TimingOffset::Drift {
                    initial_s,
                    rate,
                    wrap_s,
                } => {
                    let to = (initial_s + rate * k as f64 * frame_interval).rem_euclid(wrap_s);
                    (to / tap_delay).floor() as usize
                }
            })
            .collect();

        let (fo_hz, fo_phase) = match model.fo {
            FrequencyOffset::Zero => (vec![0.0; num_frames], vec![0.0; num_frames]),
            FrequencyOffset::Constant { hz } => (
                vec![hz; num_frames],
                (0..num_frames)
                    .map(|k| 2.0 * PI * hz * k as f64 * frame_interval)
                    .collect(),
            ),
            FrequencyOffset::RandomWalk {
                initial_hz,
                step_std_hz,
            } => {
                let mut rng = keyed(seed, rx_id, 0, Stream::FrequencyOffset);
                let mut f = initial_hz;
                let mut phase = 0.0;
                let mut freqs = Vec::with_capacity(num_frames);
                let mut phases = Vec::with_capacity(num_frames);
                for k in 0..num_frames {
                    if k > 0 {
                        let step: f64 = rng.sample(StandardNormal);
                        f += step_std_hz * step;
                        phase += 2.0 * PI * f * frame_interval;
                    }
                    freqs.push(f);
                    phases.push(phase);
                }
                (freqs, phases)
            }
        };

        Self {
            to_shift,
            fo_hz,
            fo_phase,
        }
    }

    pub fn len(&self) -> usize {
        self.to_shift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_shift.is_empty()
    }
}
