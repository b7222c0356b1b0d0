//! Evaluation of pipeline artifacts against simulator ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::geometry::{wrap_angle, Bistatic, Point2};
use crate::manifest::EvalParams;
use crate::microdoppler::bistatic_factor;
use crate::scene::{FrameTruth, ScattererKind};
use crate::stats::{mean, median};
use crate::sync::{SyncEntry, SyncStatus};
use crate::tracker::TrackSample;

/// One row of a micro-Doppler peak track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub rx_id: usize,
    pub track_id: usize,
    /// Window-center time, s.
    pub t: f64,
    /// Absent when the peak is below the floor.
    pub doppler_hz: Option<f64>,
}

/// Everything known about one receiver's run. Missing pieces leave the
/// corresponding report fields empty.
#[derive(Debug, Clone, Copy)]
pub struct ReceiverInputs<'a> {
    pub rx_id: usize,
    pub pair: Bistatic,
    pub num_frames: usize,
    pub frame_interval: f64,
    /// Tracker decimation, frames per filter step.
    pub decimation: usize,
    pub sync: Option<&'a [SyncEntry]>,
    pub detections: Option<&'a [Detection]>,
    pub tracks: Option<&'a [TrackSample]>,
    pub peaks: Option<&'a [PeakRow]>,
    /// Doppler bin spacing of the spectrogram behind `peaks`, Hz.
    pub bin_spacing: Option<f64>,
    pub truth: Option<&'a [FrameTruth]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReceiverReport {
    pub rx_id: usize,
    pub frames: usize,
    pub los_detection_rate: Option<f64>,
    /// Circular std of the estimated minus true FO phase, rad.
    pub residual_fo_phase_std: Option<f64>,
    pub detections_per_frame: Option<f64>,
    pub detection_rate: Option<f64>,
    pub false_alarms_per_frame: Option<f64>,
    /// Fraction of frames with at least one false alarm.
    pub false_alarm_frame_rate: Option<f64>,
    pub localization_median_error: Option<f64>,
    pub confirmed_tracks: Option<usize>,
    pub track_rmse: Option<f64>,
    /// Share of filter steps after first confirmation that carry a track
    /// on the person.
    pub track_coverage: Option<f64>,
    pub mdoppler_track_id: Option<usize>,
    pub mdoppler_mae_hz: Option<f64>,
    pub mdoppler_mae_bins: Option<f64>,
    pub mean_abs_peak_doppler_hz: Option<f64>,
    /// `(t, Hz)` per spectrogram time bin.
    pub peak_track: Option<Vec<(f64, Option<f64>)>>,
    /// Bistatic factor at the mean target position over the μD span.
    pub xi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiRatio {
    pub rx_a: usize,
    pub rx_b: usize,
    /// Ratio of mean |peak Doppler| over common time bins.
    pub observed: f64,
    /// `ξ_a / ξ_b`.
    pub predicted: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub rx_id: Option<usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub receivers: Vec<ReceiverReport>,
    pub xi_ratio: Option<XiRatio>,
    /// Wall-clock per stage; kept out of the deterministic report file.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timings: Vec<StageTiming>,
}

impl EvalReport {
    pub fn receiver(&self, rx_id: usize) -> Option<&ReceiverReport> {
        self.receivers.iter().find(|r| r.rx_id == rx_id)
    }

    /// Copy without timings, for byte-stable output.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: Vec::new(),
            ..self.clone()
        }
    }
}

fn people(frame: &FrameTruth) -> impl Iterator<Item = (ScattererKind, Option<usize>, Point2)> + '_ {
    frame
        .entities
        .iter()
        .filter(|e| matches!(e.kind, ScattererKind::Torso | ScattererKind::Limb))
        .map(|e| (e.kind, e.target, e.position))
}

fn nearest_torso(frame: &FrameTruth, p: Point2) -> Option<(usize, f64)> {
    people(frame)
        .filter(|(kind, _, _)| *kind == ScattererKind::Torso)
        .filter_map(|(_, t, pos)| Some((t?, pos.distance(p))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

fn circular_std(angles: &[f64]) -> f64 {
    let (s, c) = angles
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let m = s.atan2(c);
    let sq: Vec<f64> = angles.iter().map(|a| wrap_angle(a - m).powi(2)).collect();
    mean(&sq).sqrt()
}

fn rate(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Track id → target assigned by nearest torso at the track's first
/// (confirmation) sample.
fn assign_tracks(tracks: &[TrackSample], truth: &[FrameTruth]) -> BTreeMap<usize, usize> {
    let mut first: BTreeMap<usize, &TrackSample> = BTreeMap::new();
    for s in tracks {
        first
            .entry(s.track_id)
            .and_modify(|f| {
                if s.k < f.k {
                    *f = s;
                }
            })
            .or_insert(s);
    }
    first
        .into_iter()
        .filter_map(|(id, s)| {
            let frame = truth.get(s.k)?;
            Some((id, nearest_torso(frame, s.position())?.0))
        })
        .collect()
}

fn evaluate_receiver(inp: &ReceiverInputs, params: &EvalParams) -> ReceiverReport {
    let mut r = ReceiverReport {
        rx_id: inp.rx_id,
        frames: inp.num_frames,
        ..Default::default()
    };
    let truth = inp.truth;
    let has_targets = truth.is_some_and(|t| {
        t.iter()
            .any(|f| nearest_torso(f, Point2::default()).is_some())
    });

    if let Some(sync) = inp.sync {
        r.los_detection_rate = Some(rate(
            sync.iter().filter(|e| e.status == SyncStatus::Ok).count(),
            sync.len(),
        ));
        if let Some(truth) = truth {
            let residuals: Vec<f64> = sync
                .iter()
                .filter(|e| e.status == SyncStatus::Ok)
                .filter_map(|e| Some(wrap_angle(e.phase - truth.get(e.k)?.fo_phase)))
                .collect();
            if !residuals.is_empty() {
                r.residual_fo_phase_std = Some(circular_std(&residuals));
            }
        }
    }

    if let Some(dets) = inp.detections {
        r.detections_per_frame = Some(rate(dets.len(), inp.num_frames));
        if let Some(truth) = truth {
            let mut by_frame: BTreeMap<usize, Vec<&Detection>> = BTreeMap::new();
            for d in dets {
                by_frame.entry(d.k).or_default().push(d);
            }
            let (mut hit_frames, mut fa, mut fa_frames) = (0, 0, 0);
            let mut errors = Vec::new();
            for (k, ds) in &by_frame {
                let Some(frame) = truth.get(*k) else { continue };
                let mut hit = false;
                let mut any_fa = false;
                for d in ds {
                    let p = d.position();
                    let near_person =
                        people(frame).any(|(_, _, q)| q.distance(p) <= params.match_radius);
                    match nearest_torso(frame, p) {
                        Some((_, dist)) if dist <= params.match_radius => {
                            hit = true;
                            errors.push(dist);
                        }
                        _ if near_person => {}
                        _ => {
                            fa += 1;
                            any_fa = true;
                        }
                    }
                }
                hit_frames += hit as usize;
                fa_frames += any_fa as usize;
            }
            r.false_alarms_per_frame = Some(rate(fa, inp.num_frames));
            r.false_alarm_frame_rate = Some(rate(fa_frames, inp.num_frames));
            if has_targets {
                r.detection_rate = Some(rate(hit_frames, inp.num_frames));
                if !errors.is_empty() {
                    r.localization_median_error = Some(median(&errors));
                }
            }
        }
    }

    let mut assignment = BTreeMap::new();
    if let Some(tracks) = inp.tracks {
        let mut ids: Vec<usize> = tracks.iter().map(|s| s.track_id).collect();
        ids.sort_unstable();
        ids.dedup();
        r.confirmed_tracks = Some(ids.len());
        if let Some(truth) = truth.filter(|_| has_targets) {
            assignment = assign_tracks(tracks, truth);
            let sq: Vec<f64> = tracks
                .iter()
                .filter_map(|s| {
                    let target = assignment.get(&s.track_id)?;
                    let p = truth.get(s.k)?.torso(*target)?.position;
                    Some(s.position().distance(p).powi(2))
                })
                .collect();
            if !sq.is_empty() {
                r.track_rmse = Some(mean(&sq).sqrt());
            }
            let dec = inp.decimation.max(1);
            let mut coverage = Vec::new();
            for target in assignment
                .values()
                .copied()
                .collect::<std::collections::BTreeSet<_>>()
            {
                let covered: std::collections::BTreeSet<usize> = tracks
                    .iter()
                    .filter(|s| assignment.get(&s.track_id) == Some(&target))
                    .map(|s| s.k)
                    .collect();
                let Some(&start) = covered.first() else {
                    continue;
                };
                let steps = (start..inp.num_frames).step_by(dec).count();
                coverage.push(rate(covered.len(), steps));
            }
            if !coverage.is_empty() {
                r.track_coverage = Some(mean(&coverage));
            }
        }
    }

    if let Some(peaks) = inp.peaks.filter(|p| !p.is_empty()) {
        let track_id = peaks[0].track_id;
        r.mdoppler_track_id = Some(track_id);
        r.peak_track = Some(peaks.iter().map(|p| (p.t, p.doppler_hz)).collect());
        let present: Vec<f64> = peaks.iter().filter_map(|p| p.doppler_hz).collect();
        if !present.is_empty() {
            r.mean_abs_peak_doppler_hz =
                Some(mean(&present.iter().map(|f| f.abs()).collect::<Vec<_>>()));
        }
        let frame_at = |t: f64| {
            ((t / inp.frame_interval).round().max(0.0) as usize)
                .min(inp.num_frames.saturating_sub(1))
        };
        let target = assignment.get(&track_id).copied().unwrap_or(0);
        let mut positions = Vec::new();
        if let Some(truth) = truth.filter(|_| has_targets) {
            let mut errs = Vec::new();
            for p in peaks {
                let Some(torso) = truth.get(frame_at(p.t)).and_then(|f| f.torso(target)) else {
                    continue;
                };
                positions.push(torso.position);
                if let Some(f) = p.doppler_hz {
                    errs.push((f - torso.doppler_hz).abs());
                }
            }
            if !errs.is_empty() {
                let mae = mean(&errs);
                r.mdoppler_mae_hz = Some(mae);
                r.mdoppler_mae_bins = inp.bin_spacing.map(|b| mae / b);
            }
        } else if let Some(tracks) = inp.tracks {
            let (t0, t1) = (peaks[0].t, peaks[peaks.len() - 1].t);
            positions = tracks
                .iter()
                .filter(|s| s.track_id == track_id)
                .filter(|s| (t0..=t1).contains(&(s.k as f64 * inp.frame_interval)))
                .map(|s| s.position())
                .collect();
        }
        if !positions.is_empty() {
            let n = positions.len() as f64;
            let mid = positions.iter().fold(Point2::default(), |a, &p| a + p) * (1.0 / n);
            r.xi = bistatic_factor(inp.pair.tx, inp.pair.rx, mid)
                .ok()
                .map(|s| s.xi);
        }
    }
    r
}

/// Ratio of mean |peak Doppler| over the time bins both receivers share.
fn xi_ratio(a: &ReceiverReport, b: &ReceiverReport, frame_interval: f64) -> Option<XiRatio> {
    let (pa, pb) = (a.peak_track.as_ref()?, b.peak_track.as_ref()?);
    let key = |t: f64| (t / frame_interval).round() as i64;
    let fb: BTreeMap<i64, f64> = pb
        .iter()
        .filter_map(|&(t, f)| Some((key(t), f?.abs())))
        .collect();
    let (mut sa, mut sb) = (Vec::new(), Vec::new());
    for &(t, f) in pa {
        if let (Some(f), Some(g)) = (f, fb.get(&key(t))) {
            sa.push(f.abs());
            sb.push(*g);
        }
    }
    let (ma, mb) = (mean(&sa), mean(&sb));
    if sa.is_empty() || mb == 0.0 {
        return None;
    }
    let observed = ma / mb;
    let predicted = a.xi? / b.xi?;
    Some(XiRatio {
        rx_a: a.rx_id,
        rx_b: b.rx_id,
        observed,
        predicted,
        relative_error: (observed / predicted - 1.0).abs(),
    })
}

/// Compute every report field the inputs allow.
pub fn evaluate(inputs: &[ReceiverInputs], params: &EvalParams) -> EvalReport {
    let receivers: Vec<ReceiverReport> = inputs
        .iter()
        .map(|i| evaluate_receiver(i, params))
        .collect();
    let with_peaks: Vec<&ReceiverReport> = receivers
        .iter()
        .filter(|r| r.peak_track.is_some())
        .collect();
    let xi_ratio = match (with_peaks.first(), with_peaks.get(1), inputs.first()) {
        (Some(a), Some(b), Some(i)) => xi_ratio(a, b, i.frame_interval),
        _ => None,
    };
    EvalReport {
        receivers,
        xi_ratio,
        timings: Vec::new(),
    }
}
