use serde::{Deserialize, Serialize};

use crate::geometry::Point2;

use super::synth::ScattererKind;

/// What the simulator knows about one scatterer in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityTruth {
    pub label: String,
    pub kind: ScattererKind,
    pub target: Option<usize>,
    pub position: Point2,
    pub velocity: Point2,
    /// TX → scatterer → RX, meters.
    pub path_length: f64,
    pub excess_range: f64,
    /// Baseline-relative angle of departure.
    pub aod: f64,
    /// Tap the path landed in after the timing offset, `None` if it fell
    /// off the end of the CIR.
    pub tap: Option<usize>,
    /// Analytic bistatic Doppler, `−(1/λ)·d(path_length)/dt`.
    pub doppler_hz: f64,
}

impl EntityTruth {
    /// Tap index of the path before any timing offset.
    pub fn excess_tap(&self, tap_length: f64) -> usize {
        (self.excess_range / tap_length).round().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub rx_id: usize,
    pub k: usize,
    pub t: f64,
    /// Realized timing offset in taps.
    pub to_shift: usize,
    pub fo_hz: f64,
    /// Accumulated FO phase, radians (unwrapped).
    pub fo_phase: f64,
    pub entities: Vec<EntityTruth>,
    /// Paths dropped because they overflowed the tap range.
    pub dropped: usize,
}

impl FrameTruth {
    pub fn torso(&self, target: usize) -> Option<&EntityTruth> {
        self.entities
            .iter()
            .find(|e| e.kind == ScattererKind::Torso && e.target == Some(target))
    }
}

/// Ground truth for a whole run, indexed `[rx_id][k]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthLog {
    pub receivers: Vec<Vec<FrameTruth>>,
}

impl GroundTruthLog {
    pub fn frame(&self, rx_id: usize, k: usize) -> Option<&FrameTruth> {
        self.receivers.get(rx_id)?.get(k)
    }

    pub fn num_targets(&self) -> usize {
        self.receivers
            .iter()
            .flatten()
            .flat_map(|f| f.entities.iter().filter_map(|e| e.target))
            .max()
            .map_or(0, |m| m + 1)
    }

    /// Flatten into delimited-text rows.
    pub fn rows(&self) -> impl Iterator<Item = TruthRow> + '_ {
        self.receivers.iter().flatten().flat_map(|f| {
            f.entities.iter().map(move |e| TruthRow {
                rx_id: f.rx_id,
                k: f.k,
                t: f.t,
                entity: e.label.clone(),
                kind: e.kind,
                target: e.target.map_or(-1, |t| t as i64),
                x: e.position.x,
                y: e.position.y,
                vx: e.velocity.x,
                vy: e.velocity.y,
                path_length: e.path_length,
                excess_range: e.excess_range,
                aod: e.aod,
                tap: e.tap.map_or(-1, |t| t as i64),
                doppler_hz: e.doppler_hz,
                to_shift: f.to_shift,
                fo_hz: f.fo_hz,
                fo_phase: f.fo_phase,
                dropped: f.dropped,
            })
        })
    }

    /// Rebuild from rows; rows must be grouped by (rx_id, k) in order.
    pub fn from_rows(rows: impl IntoIterator<Item = TruthRow>) -> Self {
        let mut log = GroundTruthLog::default();
        for r in rows {
            if log.receivers.len() <= r.rx_id {
                log.receivers.resize_with(r.rx_id + 1, Vec::new);
            }
            let frames = &mut log.receivers[r.rx_id];
            if frames.last().is_none_or(|f| f.k != r.k) {
                frames.push(FrameTruth {
                    rx_id: r.rx_id,
                    k: r.k,
                    t: r.t,
                    to_shift: r.to_shift,
                    fo_hz: r.fo_hz,
                    fo_phase: r.fo_phase,
                    entities: Vec::new(),
                    dropped: r.dropped,
                });
            }
            frames.last_mut().unwrap().entities.push(EntityTruth {
                label: r.entity,
                kind: r.kind,
                target: (r.target >= 0).then_some(r.target as usize),
                position: Point2::new(r.x, r.y),
                velocity: Point2::new(r.vx, r.vy),
                path_length: r.path_length,
                excess_range: r.excess_range,
                aod: r.aod,
                tap: (r.tap >= 0).then_some(r.tap as usize),
                doppler_hz: r.doppler_hz,
            });
        }
        log
    }
}

/// One row of the ground-truth text file. `target` and `tap` use −1 for
/// "none".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub rx_id: usize,
    pub k: usize,
    pub t: f64,
    pub entity: String,
    pub kind: ScattererKind,
    pub target: i64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub path_length: f64,
    pub excess_range: f64,
    pub aod: f64,
    pub tap: i64,
    pub doppler_hz: f64,
    pub to_shift: usize,
    pub fo_hz: f64,
    pub fo_phase: f64,
    pub dropped: usize,
}
