//! Clock-asynchrony compensation using the line-of-sight path.
//!
//! Per frame: find the first CIR peak above a median/MAD threshold (the LOS
//! is always the shortest path), shift every beam so that peak sits at tap 0,
//! read the LOS phase from the strongest beam and de-rotate the whole frame by
//! it. What remains is a CIR whose static paths are constant in time and
//! whose moving paths rotate only with their own Doppler.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frame::CirFrame;
use crate::geometry::wrap_angle;
use crate::stats::{median_sigma, unwrap_phase};

/// What to do with a frame whose LOS cannot be found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingLos {
    /// Apply the previous frame's shift and phase.
    #[default]
    ReusePrevious,
    /// Leave the frame out of the output stream.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncParams {
    /// Threshold multiplier: `τ = median(m) + κ·σ̂(m)`, σ̂ the normalized MAD.
    pub kappa: f64,
    pub on_missing: MissingLos,
}

impl Default for SyncParams {
    fn default() -> Self {
        Self {
            kappa: 8.0,
            on_missing: MissingLos::ReusePrevious,
        }
    }
}

/// Outcome of LOS detection on one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosPeak {
    pub tap: usize,
    pub magnitude: f64,
    pub threshold: f64,
    /// Median of the per-tap magnitudes, a proxy for the noise level.
    pub median: f64,
}

/// Dynamic threshold `median + κ·σ̂` over per-tap magnitudes, where σ̂ is
/// the normalized MAD. Returns `(threshold, median)`.
pub fn dynamic_threshold(magnitudes: &[f64], kappa: f64) -> (f64, f64) {
    let (med, sigma) = median_sigma(magnitudes);
    (med + kappa * sigma, med)
}

/// First local maximum of `m` at or above the dynamic threshold.
///
/// A tap qualifies when it is strictly above its left neighbour, not below
/// its right neighbour, and strictly above the median.
pub fn first_peak(m: &[f64], kappa: f64) -> Option<LosPeak> {
    let (threshold, median) = dynamic_threshold(m, kappa);
    let n = m.len();
    (0..n)
        .find(|&l| {
            let v = m[l];
            let left_ok = l == 0 || v > m[l - 1];
            let right_ok = l + 1 == n || v >= m[l + 1];
            v >= threshold && v > median && left_ok && right_ok
        })
        .map(|tap| LosPeak {
            tap,
            magnitude: m[tap],
            threshold,
            median,
        })
}

/// Locate the LOS tap of a frame from `m(ℓ) = max_b |h_b(ℓ)|`.
pub fn detect_los(frame: &CirFrame, kappa: f64) -> Result<LosPeak> {
    if frame.num_taps() == 0 || frame.num_beams() == 0 {
        return Err(Error::Empty("frame has no taps"));
    }
    first_peak(&frame.beam_max_magnitude(), kappa).ok_or(Error::LosMissing { k: frame.k })
}

/// Shift every beam left by `los_tap`, zero-filling the tail.
pub fn align_to(frame: &CirFrame, los_tap: usize) -> CirFrame {
    let mut out = CirFrame::zeros(frame.k, frame.rx_id, frame.num_beams(), frame.num_taps());
    let n = frame.num_taps();
    if los_tap >= n {
        return out;
    }
    for b in 0..frame.num_beams() {
        out.row_mut(b)[..n - los_tap].copy_from_slice(&frame.row(b)[los_tap..]);
    }
    out
}

/// Phase of the LOS (tap 0) on the beam where it is strongest, in (−π, π].
///
/// Fails when that magnitude does not exceed `noise_floor`.
pub fn estimate_fo_phase(frame: &CirFrame, noise_floor: f64) -> Result<f64> {
    let (_, los) = (0..frame.num_beams())
        .map(|b| (b, frame.get(b, 0)))
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .ok_or(Error::Empty("frame has no beams"))?;
    let magnitude = los.norm();
    if !(magnitude > noise_floor) {
        return Err(Error::UnreliablePhase {
            magnitude,
            floor: noise_floor,
        });
    }
    Ok(wrap_angle(los.arg()))
}

/// Multiply every gain by `exp(−j·phase)`.
pub fn correct_fo(frame: &CirFrame, phase: f64) -> CirFrame {
    let mut out = frame.clone();
    correct_fo_in_place(&mut out, phase);
    out
}

pub fn correct_fo_in_place(frame: &mut CirFrame, phase: f64) {
    let rot = Complex64::from_polar(1.0, -phase);
    for g in frame.gains_mut() {
        *g *= rot;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncStatus {
    Ok,
    LosMissing,
    ReusedPrevious,
}

/// Per-frame record of what the synchronizer did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncEntry {
    pub rx_id: usize,
    pub k: usize,
    /// Detected LOS tap before shifting, −1 when missing.
    pub los_tap: i64,
    pub shift: usize,
    /// Wrapped LOS phase that was removed.
    pub phase: f64,
    pub magnitude: f64,
    pub threshold: f64,
    pub status: SyncStatus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SyncReport {
    pub entries: Vec<SyncEntry>,
}

impl SyncReport {
    pub fn phases(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.phase).collect()
    }

    /// Unwrapped phase history, for diagnostics only.
    pub fn unwrapped_phases(&self) -> Vec<f64> {
        unwrap_phase(&self.phases())
    }

    pub fn count(&self, status: SyncStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }
}

enum Outcome {
    Synced(CirFrame, SyncEntry),
    Missing(CirFrame, f64),
}

fn sync_frame(frame: CirFrame, params: &SyncParams) -> Outcome {
    let Ok(peak) = detect_los(&frame, params.kappa) else {
        let (threshold, _) = dynamic_threshold(&frame.beam_max_magnitude(), params.kappa);
        return Outcome::Missing(frame, threshold);
    };
    let mut aligned = align_to(&frame, peak.tap);
    let Ok(phase) = estimate_fo_phase(&aligned, peak.median) else {
        return Outcome::Missing(frame, peak.threshold);
    };
    correct_fo_in_place(&mut aligned, phase);
    let entry = SyncEntry {
        rx_id: frame.rx_id,
        k: frame.k,
        los_tap: peak.tap as i64,
        shift: peak.tap,
        phase,
        magnitude: peak.magnitude,
        threshold: peak.threshold,
        status: SyncStatus::Ok,
    };
    Outcome::Synced(aligned, entry)
}

/// Stateful per-receiver synchronizer. Frames must arrive in `k` order;
/// the only state is the last good (shift, phase) pair used as fallback.
#[derive(Debug, Clone, Default)]
pub struct Synchronizer {
    params: SyncParams,
    last: Option<(usize, f64)>,
}

impl Synchronizer {
    pub fn new(params: SyncParams) -> Self {
        Self { params, last: None }
    }

    /// Synchronize a block of consecutive frames. The per-frame work runs
    /// under `exec`; fallback resolution is sequential.
    pub fn process_block(
        &mut self,
        frames: Vec<CirFrame>,
        exec: Exec,
    ) -> Result<(Vec<CirFrame>, Vec<SyncEntry>)> {
        let params = self.params;
        let outcomes = exec.map_vec(frames, |f| sync_frame(f, &params));
        let mut out_frames = Vec::with_capacity(outcomes.len());
        let mut entries = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            match outcome {
                Outcome::Synced(frame, entry) => {
                    self.last = Some((entry.shift, entry.phase));
                    out_frames.push(frame);
                    entries.push(entry);
                }
                Outcome::Missing(frame, threshold) => match params.on_missing {
                    MissingLos::ReusePrevious => {
                        let (shift, phase) = self.last.ok_or(Error::LosMissing { k: frame.k })?;
                        let mut aligned = align_to(&frame, shift);
                        correct_fo_in_place(&mut aligned, phase);
                        entries.push(SyncEntry {
                            rx_id: frame.rx_id,
                            k: frame.k,
                            los_tap: -1,
                            shift,
                            phase,
                            magnitude: 0.0,
                            threshold,
                            status: SyncStatus::ReusedPrevious,
                        });
                        out_frames.push(aligned);
                    }
                    MissingLos::Drop => {
                        entries.push(SyncEntry {
                            rx_id: frame.rx_id,
                            k: frame.k,
                            los_tap: -1,
                            shift: 0,
                            phase: 0.0,
                            magnitude: 0.0,
                            threshold,
                            status: SyncStatus::LosMissing,
                        });
                    }
                },
            }
        }
        Ok((out_frames, entries))
    }
}

/// Detect, align, estimate and correct every frame of one receiver's stream.
pub fn sync_pipeline(
    frames: Vec<CirFrame>,
    params: SyncParams,
    exec: Exec,
) -> Result<(Vec<CirFrame>, SyncReport)> {
    let mut sync = Synchronizer::new(params);
    let (frames, entries) = sync.process_block(frames, exec)?;
    Ok((frames, SyncReport { entries }))
}
