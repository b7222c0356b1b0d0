//! Scene description and CIR frame synthesis.
//!
//! One transmitter sweeps `N_b` beams per packet; each receiver gets one
//! complex gain per (beam, tap). Every scatterer deposits
//! `A_n · g_b(θ_n) · exp(j(−2π (d_n − d_los)/λ + φ_off(k)))` into the tap of
//! its excess path length, shifted by the receiver's timing offset. Doppler is not
//! injected: it emerges from the frame-to-frame change of `d_n`.

mod clock;
mod config;
mod synth;
mod truth;

pub use clock::ClockTrace;
pub use config::{
    ArticulatedTarget, ClockModel, FrequencyOffset, Kinematics, Limb, Repeat, SceneConfig,
    StaticScatterer, TimingOffset, Trajectory, SCHEMA_VERSION,
};
pub use synth::{synthesize_frame, synthesize_run, Scatterer, ScattererKind, SimRun, Synthesizer};
pub use truth::{EntityTruth, FrameTruth, GroundTruthLog, TruthRow};

use crate::geometry::wrap_angle;

/// `2·sqrt(2·ln 2)`: ratio between the 3 dB width and σ of a Gaussian.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Gaussian beam pattern centered on `center` with the given 3 dB width,
/// evaluated at world angle `theta`. Always in (0, 1].
pub fn beam_gain_model(center: f64, width_3db: f64, theta: f64) -> f64 {
    let sigma = width_3db / FWHM_PER_SIGMA;
    let d = wrap_angle(theta - center);
    (-(d * d) / (2.0 * sigma * sigma))
        .exp()
        .max(f64::MIN_POSITIVE)
}

/// Gain of beam `b` toward world angle `theta`.
pub fn beam_gain(scene: &SceneConfig, b: usize, theta: f64) -> f64 {
    beam_gain_model(scene.beam_centers[b], scene.beam_width_3db, theta)
}
