//! Constant-velocity extended Kalman filter in the bistatic measurement
//! space (excess range, angle of departure), with greedy gated association
//! and an M-of-N track lifecycle.

use std::collections::VecDeque;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, SymmetricEigen, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Bistatic, Point2, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    /// White-acceleration intensity, m²/s³.
    pub q: f64,
    /// Excess-range measurement std, m.
    pub sigma_range: f64,
    /// AoD measurement std, rad.
    pub sigma_aod: f64,
    /// Squared Mahalanobis gate (χ², 2 dof).
    pub gate: f64,
    /// Confirm after `confirm_hits` hits within the last `confirm_window` steps.
    pub confirm_hits: usize,
    pub confirm_window: usize,
    /// Consecutive misses tolerated before a confirmed track dies.
    pub max_coast: usize,
    /// Run the filter every `decimation` frames.
    pub decimation: usize,
    /// Speed bound; velocities are clamped to twice this.
    pub v_max: f64,
    pub init_position_std: f64,
    pub init_velocity_std: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            q: 1.0,
            sigma_range: SPEED_OF_LIGHT / 1.76e9,
            sigma_aod: 5f64.to_radians(),
            gate: 9.21,
            confirm_hits: 3,
            confirm_window: 5,
            max_coast: 10,
            decimation: 20,
            v_max: 2.0,
            init_position_std: 0.5,
            init_velocity_std: 1.0,
        }
    }
}

impl TrackerParams {
    /// Defaults with the measurement noise tied to a tap length and beam
    /// spacing.
    pub fn for_radio(tap_length: f64, beam_spacing: f64) -> Self {
        Self {
            sigma_range: tap_length,
            sigma_aod: beam_spacing / 2.0,
            ..Default::default()
        }
    }

    fn measurement_cov(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.sigma_range * self.sigma_range,
            0.0,
            0.0,
            self.sigma_aod * self.sigma_aod,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Coasting,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: usize,
    /// `[x, y, vx, vy]`.
    pub state: Vector4<f64>,
    pub cov: Matrix4<f64>,
    pub status: TrackStatus,
    pub hits: usize,
    pub consecutive_misses: usize,
    recent: VecDeque<bool>,
    pub last_update_k: usize,
}

impl Track {
    pub fn new(id: usize, position: Point2, k: usize, params: &TrackerParams) -> Self {
        let pv = params.init_position_std.powi(2);
        let vv = params.init_velocity_std.powi(2);
        Self {
            id,
            state: Vector4::new(position.x, position.y, 0.0, 0.0),
            cov: Matrix4::from_diagonal(&Vector4::new(pv, pv, vv, vv)),
            status: TrackStatus::Tentative,
            hits: 1,
            consecutive_misses: 0,
            recent: VecDeque::from([true]),
            last_update_k: k,
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Point2 {
        Point2::new(self.state[2], self.state[3])
    }

    pub fn is_alive(&self) -> bool {
        self.status != TrackStatus::Dead
    }

    /// Confirmed or coasting: past the tentative stage and still alive.
    pub fn is_established(&self) -> bool {
        matches!(self.status, TrackStatus::Confirmed | TrackStatus::Coasting)
    }
}

/// Constant-velocity transition for step `dt`.
pub fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

/// Discretized white-acceleration process noise.
pub fn process_noise(dt: f64, q: f64) -> Matrix4<f64> {
    let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
    Matrix4::new(
        a, 0.0, b, 0.0, //
        0.0, a, 0.0, b, //
        b, 0.0, c, 0.0, //
        0.0, b, 0.0, c,
    ) * q
}

/// Symmetrize and, if needed, lift the spectrum so the matrix stays SPD.
fn condition(p: &mut Matrix4<f64>) {
    *p = (*p + p.transpose()) * 0.5;
    let min = SymmetricEigen::new(*p).eigenvalues.min();
    if min <= 1e-12 {
        *p += Matrix4::identity() * (1e-12 - min + 1e-12);
    }
}

/// Smallest eigenvalue of the (symmetric part of the) covariance.
pub fn min_eigenvalue(p: &Matrix4<f64>) -> f64 {
    SymmetricEigen::new((*p + p.transpose()) * 0.5)
        .eigenvalues
        .min()
}

pub fn predict(track: &Track, dt: f64, q: f64) -> Track {
    let mut out = track.clone();
    let f = transition(dt);
    out.state = f * track.state;
    out.cov = f * track.cov * f.transpose() + process_noise(dt, q);
    condition(&mut out.cov);
    out
}

/// `z = [|p−tx| + |p−rx| − |tx−rx|, AoD]`.
pub fn measurement_model(state: &Vector4<f64>, pair: &Bistatic) -> Result<Vector2<f64>> {
    let p = Point2::new(state[0], state[1]);
    let (excess, aod) = pair.measure(p)?;
    Ok(Vector2::new(excess, aod))
}

/// Analytic Jacobian of [`measurement_model`].
pub fn measurement_jacobian(state: &Vector4<f64>, pair: &Bistatic) -> Result<Matrix2x4<f64>> {
    let p = Point2::new(state[0], state[1]);
    let dt = p - pair.tx;
    let dr = p - pair.rx;
    let (nt, nr) = (dt.norm(), dr.norm());
    if nt == 0.0 || nr == 0.0 {
        return Err(Error::Degenerate("target on an antenna"));
    }
    let r2 = nt * nt;
    Ok(Matrix2x4::new(
        dt.x / nt + dr.x / nr,
        dt.y / nt + dr.y / nr,
        0.0,
        0.0,
        -dt.y / r2,
        dt.x / r2,
        0.0,
        0.0,
    ))
}

/// Innovation (angle wrapped) and its covariance.
fn innovation(
    track: &Track,
    z: &Vector2<f64>,
    pair: &Bistatic,
    r: &Matrix2<f64>,
) -> Result<(Vector2<f64>, Matrix2<f64>, Matrix2x4<f64>)> {
    let predicted = measurement_model(&track.state, pair)?;
    let h = measurement_jacobian(&track.state, pair)?;
    let mut nu = z - predicted;
    nu[1] = wrap_angle(nu[1]);
    let s = h * track.cov * h.transpose() + r;
    Ok((nu, s, h))
}

fn measurement_of(det: &Detection) -> Vector2<f64> {
    Vector2::new(det.excess_range, det.aod)
}

/// Squared Mahalanobis distance between a track's prediction and a detection.
pub fn mahalanobis2(
    track: &Track,
    det: &Detection,
    pair: &Bistatic,
    params: &TrackerParams,
) -> Option<f64> {
    let (nu, s, _) =
        innovation(track, &measurement_of(det), pair, &params.measurement_cov()).ok()?;
    let s_inv = s.try_inverse()?;
    Some((nu.transpose() * s_inv * nu)[0])
}

/// EKF update with a Joseph-form covariance.
pub fn update(
    track: &Track,
    det: &Detection,
    pair: &Bistatic,
    params: &TrackerParams,
) -> Result<Track> {
    update_with(track, &measurement_of(det), det.k, pair, params)
}

fn update_with(
    track: &Track,
    z: &Vector2<f64>,
    k: usize,
    pair: &Bistatic,
    params: &TrackerParams,
) -> Result<Track> {
    let r = params.measurement_cov();
    let (nu, s, h) = innovation(track, z, pair, &r)?;
    let s_inv = s
        .try_inverse()
        .ok_or(Error::Degenerate("innovation covariance is singular"))?;
    let gain: Matrix4x2<f64> = track.cov * h.transpose() * s_inv;
    let mut out = track.clone();
    out.state = track.state + gain * nu;
    let i_kh = Matrix4::identity() - gain * h;
    out.cov = i_kh * track.cov * i_kh.transpose() + gain * r * gain.transpose();
    condition(&mut out.cov);
    clamp_speed(&mut out.state, 2.0 * params.v_max);
    out.hits += 1;
    out.last_update_k = k;
    Ok(out)
}

fn clamp_speed(state: &mut Vector4<f64>, limit: f64) {
    let speed = state[2].hypot(state[3]);
    if speed > limit {
        let s = limit / speed;
        state[2] *= s;
        state[3] *= s;
    }
}

/// Result of one association round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    /// `(track index, detection index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unassigned_tracks: Vec<usize>,
    pub unassigned_detections: Vec<usize>,
}

/// Greedy nearest-neighbour association on gated Mahalanobis distance.
pub fn associate(
    tracks: &[Track],
    detections: &[Detection],
    pair: &Bistatic,
    params: &TrackerParams,
) -> Assignment {
    let mut candidates = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        for (di, d) in detections.iter().enumerate() {
            if let Some(d2) = mahalanobis2(t, d, pair, params) {
                if d2 <= params.gate {
                    candidates.push((d2, ti, di));
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut track_used = vec![false; tracks.len()];
    let mut det_used = vec![false; detections.len()];
    let mut pairs = Vec::new();
    for (_, ti, di) in candidates {
        if !track_used[ti] && !det_used[di] {
            track_used[ti] = true;
            det_used[di] = true;
            pairs.push((ti, di));
        }
    }
    Assignment {
        pairs,
        unassigned_tracks: (0..tracks.len()).filter(|&i| !track_used[i]).collect(),
        unassigned_detections: (0..detections.len()).filter(|&i| !det_used[i]).collect(),
    }
}

/// One emitted track state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub k: usize,
    pub rx_id: usize,
    pub track_id: usize,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub status: TrackStatus,
}

impl TrackSample {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn velocity(&self) -> Point2 {
        Point2::new(self.vx, self.vy)
    }
}

/// Emitted states of established tracks, ordered by `k` then track id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackHistory {
    pub samples: Vec<TrackSample>,
    /// `k` at which each track id was first confirmed.
    pub confirmed_at: Vec<(usize, usize)>,
}

impl TrackHistory {
    pub fn track_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.samples.iter().map(|s| s.track_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn track(&self, id: usize) -> Vec<TrackSample> {
        self.samples
            .iter()
            .filter(|s| s.track_id == id)
            .copied()
            .collect()
    }

    /// Track with the most emitted samples.
    pub fn longest(&self) -> Option<usize> {
        self.track_ids().into_iter().max_by_key(|&id| {
            (
                self.samples.iter().filter(|s| s.track_id == id).count(),
                usize::MAX - id,
            )
        })
    }
}

/// Multi-target tracker for one receiver.
#[derive(Debug, Clone)]
pub struct Tracker {
    pair: Bistatic,
    params: TrackerParams,
    frame_interval: f64,
    rx_id: usize,
    tracks: Vec<Track>,
    next_id: usize,
    last_k: Option<usize>,
    pending: Vec<Detection>,
    pub history: TrackHistory,
    pub skipped_updates: usize,
}

impl Tracker {
    pub fn new(pair: Bistatic, params: TrackerParams, frame_interval: f64, rx_id: usize) -> Self {
        Self {
            pair,
            params,
            frame_interval,
            rx_id,
            tracks: Vec::new(),
            next_id: 0,
            last_k: None,
            pending: Vec::new(),
            history: TrackHistory::default(),
            skipped_updates: 0,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn total_tracks(&self) -> usize {
        self.next_id
    }

    /// Whether frame `k` is one the filter runs on.
    pub fn wants(&self, k: usize) -> bool {
        k.is_multiple_of(self.params.decimation.max(1))
    }

    /// Feed one frame's detections. The filter runs on decimated frames,
    /// using the latest non-empty detection set seen since its last run.
    pub fn push_frame(&mut self, k: usize, detections: &[Detection]) {
        if !detections.is_empty() {
            self.pending.clear();
            self.pending.extend_from_slice(detections);
        }
        if self.wants(k) {
            let dets = std::mem::take(&mut self.pending);
            self.step(k, &dets);
        }
    }

    /// Advance to frame `k` and ingest a detection set.
    pub fn step(&mut self, k: usize, detections: &[Detection]) {
        if let Some(last) = self.last_k {
            let dt = k.saturating_sub(last) as f64 * self.frame_interval;
            if dt > 0.0 {
                for t in &mut self.tracks {
                    *t = predict(t, dt, self.params.q);
                }
            }
        }
        self.last_k = Some(k);

        let assignment = associate(&self.tracks, detections, &self.pair, &self.params);
        let mut hit = vec![false; self.tracks.len()];
        for &(ti, di) in &assignment.pairs {
            match update(&self.tracks[ti], &detections[di], &self.pair, &self.params) {
                Ok(t) => {
                    self.tracks[ti] = t;
                    hit[ti] = true;
                }
                Err(_) => self.skipped_updates += 1,
            }
        }
        let p = self.params;
        for (t, &was_hit) in self.tracks.iter_mut().zip(&hit) {
            t.recent.push_back(was_hit);
            while t.recent.len() > p.confirm_window {
                t.recent.pop_front();
            }
            if was_hit {
                t.consecutive_misses = 0;
            } else {
                t.consecutive_misses += 1;
            }
            let recent_hits = t.recent.iter().filter(|&&h| h).count();
            t.status = match t.status {
                TrackStatus::Tentative if recent_hits >= p.confirm_hits => TrackStatus::Confirmed,
                TrackStatus::Tentative
                    if t.recent.len() - recent_hits > p.confirm_window - p.confirm_hits =>
                {
                    TrackStatus::Dead
                }
                TrackStatus::Confirmed | TrackStatus::Coasting if was_hit => TrackStatus::Confirmed,
                TrackStatus::Confirmed | TrackStatus::Coasting
                    if t.consecutive_misses > p.max_coast =>
                {
                    TrackStatus::Dead
                }
                TrackStatus::Confirmed | TrackStatus::Coasting => TrackStatus::Coasting,
                s => s,
            };
            if t.status == TrackStatus::Confirmed
                && !self.history.confirmed_at.iter().any(|&(id, _)| id == t.id)
            {
                self.history.confirmed_at.push((t.id, k));
            }
        }
        self.tracks.retain(Track::is_alive);

        for &di in &assignment.unassigned_detections {
            let d = &detections[di];
            self.tracks
                .push(Track::new(self.next_id, d.position(), k, &p));
            self.next_id += 1;
        }

        for t in self.tracks.iter().filter(|t| t.is_established()) {
            self.history.samples.push(TrackSample {
                k,
                rx_id: self.rx_id,
                track_id: t.id,
                x: t.state[0],
                y: t.state[1],
                vx: t.state[2],
                vy: t.state[3],
                status: t.status,
            });
        }
    }
}

/// Run the tracker over per-frame detections (index = frame `k`).
pub fn track_stream(
    detections: &[Vec<Detection>],
    params: TrackerParams,
    pair: Bistatic,
    frame_interval: f64,
    rx_id: usize,
) -> TrackHistory {
    let mut tracker = Tracker::new(pair, params, frame_interval, rx_id);
    for (k, dets) in detections.iter().enumerate() {
        tracker.push_frame(k, dets);
    }
    tracker.history
}
