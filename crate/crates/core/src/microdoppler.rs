//! Micro-Doppler spectrograms from corrected CIR streams, and the bistatic
//! Doppler factor.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frame::CirFrame;
use crate::geometry::{bistatic_angle, Bistatic, Point2};
use crate::stats::median;
use crate::tracker::TrackSample;

/// Predicted target tap over time, extrapolated from decimated track states.
#[derive(Debug, Clone)]
pub struct TrackTimeline {
    samples: Vec<TrackSample>,
    frame_interval: f64,
    max_extrapolation: usize,
}

impl TrackTimeline {
    /// `samples` must belong to a single track. States are extrapolated at
    /// constant velocity for at most `max_extrapolation` frames.
    pub fn new(
        mut samples: Vec<TrackSample>,
        frame_interval: f64,
        max_extrapolation: usize,
    ) -> Self {
        samples.sort_by_key(|s| s.k);
        Self {
            samples,
            frame_interval,
            max_extrapolation,
        }
    }

    pub fn first_k(&self) -> Option<usize> {
        self.samples.first().map(|s| s.k)
    }

    pub fn last_k(&self) -> Option<usize> {
        self.samples.last().map(|s| s.k + self.max_extrapolation)
    }

    /// Predicted position at frame `k`, if the track exists there.
    pub fn position_at(&self, k: usize) -> Option<Point2> {
        let idx = self.samples.partition_point(|s| s.k <= k);
        let s = self.samples.get(idx.checked_sub(1)?)?;
        let lag = k - s.k;
        if lag > self.max_extrapolation {
            return None;
        }
        Some(s.position() + s.velocity() * (lag as f64 * self.frame_interval))
    }

    pub fn tap_at(&self, k: usize, pair: &Bistatic, tap_length: f64) -> Option<usize> {
        let p = self.position_at(k)?;
        Some((pair.excess_range(p) / tap_length).round().max(0.0) as usize)
    }
}

/// One complex sample per frame; `None` marks a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowTime {
    pub rx_id: usize,
    pub first_k: usize,
    pub frame_interval: f64,
    pub samples: Vec<Option<Complex64>>,
}

impl SlowTime {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn gaps(&self) -> usize {
        self.samples.iter().filter(|s| s.is_none()).count()
    }

    /// Samples with gaps zero-filled.
    pub fn filled(&self) -> Vec<Complex64> {
        self.samples.iter().map(|s| s.unwrap_or_default()).collect()
    }

    /// Subtract the mean of the present samples (static clutter at 0 Hz).
    pub fn remove_mean(&mut self) {
        let present: Vec<Complex64> = self.samples.iter().flatten().copied().collect();
        if present.is_empty() {
            return;
        }
        let mean = present.iter().sum::<Complex64>() / present.len() as f64;
        for s in self.samples.iter_mut().flatten() {
            *s -= mean;
        }
    }
}

/// Coherent sum over `tap ± half_width` on the beam with the most energy
/// in that window.
pub fn slow_time_sample(frame: &CirFrame, tap: usize, half_width: usize) -> Complex64 {
    let (nb, nt) = frame.shape();
    if nb == 0 || tap >= nt {
        return Complex64::default();
    }
    let lo = tap.saturating_sub(half_width);
    let hi = (tap + half_width).min(nt - 1);
    let mut best = (f64::NEG_INFINITY, Complex64::default());
    for b in 0..nb {
        let window = &frame.row(b)[lo..=hi];
        let energy: f64 = window.iter().map(|h| h.norm_sqr()).sum();
        if energy > best.0 {
            best = (energy, window.iter().sum());
        }
    }
    best.1
}

/// Incremental slow-time extraction for streamed frames.
#[derive(Debug, Clone)]
pub struct SlowTimeExtractor {
    timeline: TrackTimeline,
    pair: Bistatic,
    tap_length: f64,
    half_width: usize,
    out: SlowTime,
}

impl SlowTimeExtractor {
    pub fn new(
        timeline: TrackTimeline,
        pair: Bistatic,
        tap_length: f64,
        half_width: usize,
        rx_id: usize,
        frame_interval: f64,
    ) -> Self {
        let first_k = timeline.first_k().unwrap_or(0);
        Self {
            timeline,
            pair,
            tap_length,
            half_width,
            out: SlowTime {
                rx_id,
                first_k,
                frame_interval,
                samples: Vec::new(),
            },
        }
    }

    /// Frame range the track covers.
    pub fn span(&self) -> Option<std::ops::RangeInclusive<usize>> {
        Some(self.timeline.first_k()?..=self.timeline.last_k()?)
    }

    /// Frames must arrive in increasing `k`; those outside the span are
    /// ignored and missing ones inside it become gaps.
    pub fn push(&mut self, frame: &CirFrame) {
        let Some(span) = self.span() else { return };
        if !span.contains(&frame.k) {
            return;
        }
        let offset = frame.k - self.out.first_k;
        while self.out.samples.len() < offset {
            self.out.samples.push(None);
        }
        if self.out.samples.len() > offset {
            return;
        }
        let sample = self
            .timeline
            .tap_at(frame.k, &self.pair, self.tap_length)
            .map(|tap| slow_time_sample(frame, tap, self.half_width));
        self.out.samples.push(sample);
    }

    pub fn finish(mut self) -> SlowTime {
        // drop trailing gaps from an open-ended span
        while matches!(self.out.samples.last(), Some(None)) {
            self.out.samples.pop();
        }
        self.out
    }
}

/// Slow-time signal for one track over an in-memory stream.
pub fn target_slow_time(
    frames: &[CirFrame],
    track: &[TrackSample],
    pair: Bistatic,
    tap_length: f64,
    frame_interval: f64,
    half_width: usize,
    max_extrapolation: usize,
) -> SlowTime {
    let rx_id = frames.first().map(|f| f.rx_id).unwrap_or_default();
    let timeline = TrackTimeline::new(track.to_vec(), frame_interval, max_extrapolation);
    let mut ex = SlowTimeExtractor::new(
        timeline,
        pair,
        tap_length,
        half_width,
        rx_id,
        frame_interval,
    );
    for f in frames {
        ex.push(f);
    }
    ex.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window coefficients.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "hann" => Some(Window::Hann),
            "rectangular" => Some(Window::Rectangular),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftParams {
    pub window_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            window_len: 128,
            hop: 16,
            window: Window::Hann,
        }
    }
}

/// Doppler bin centers, ascending, spanning (−1/(2T), +1/(2T)].
pub fn doppler_axis(n: usize, frame_interval: f64) -> Vec<f64> {
    let df = 1.0 / (n as f64 * frame_interval);
    let lowest = -((n as isize - 1) / 2);
    (0..n).map(|i| (lowest + i as isize) as f64 * df).collect()
}

/// Magnitude STFT, time bins as rows and centered Doppler bins as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub rx_id: usize,
    pub params: StftParams,
    pub frame_interval: f64,
    /// Window-center times, s.
    pub times: Vec<f64>,
    /// Doppler bin centers, Hz.
    pub freqs: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl Spectrogram {
    pub fn num_times(&self) -> usize {
        self.times.len()
    }

    pub fn num_bins(&self) -> usize {
        self.freqs.len()
    }

    pub fn bin_spacing(&self) -> f64 {
        1.0 / (self.params.window_len as f64 * self.frame_interval)
    }

    pub fn column(&self, t: usize) -> &[f64] {
        let n = self.num_bins();
        &self.magnitude[t * n..(t + 1) * n]
    }

    pub fn get(&self, t: usize, bin: usize) -> f64 {
        self.magnitude[t * self.num_bins() + bin]
    }

    /// Nearest bin to a frequency (after folding into the axis span).
    pub fn bin_of(&self, f: f64) -> usize {
        let n = self.num_bins() as isize;
        let lowest = -((n - 1) / 2);
        let m = (f / self.bin_spacing()).round() as isize;
        (m - lowest).rem_euclid(n) as usize
    }
}

/// Sliding-window FFT of a slow-time signal. The FFT is scaled by 1/√N so
/// each column's energy equals the windowed segment's energy.
pub fn stft_spectrogram(
    x: &[Complex64],
    frame_interval: f64,
    params: &StftParams,
    t0: f64,
    rx_id: usize,
    exec: Exec,
) -> Result<Spectrogram> {
    let n = params.window_len;
    if n == 0 || params.hop == 0 {
        return Err(Error::Config(
            "STFT window length and hop must be positive".into(),
        ));
    }
    if !(frame_interval > 0.0) {
        return Err(Error::Config("frame interval must be positive".into()));
    }
    if x.len() < n {
        return Err(Error::TooShort {
            needed: n,
            got: x.len(),
        });
    }
    let w = params.window.coefficients(n);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let scale = 1.0 / (n as f64).sqrt();
    let lowest = -((n as isize - 1) / 2);
    let starts: Vec<usize> = (0..=(x.len() - n) / params.hop)
        .map(|i| i * params.hop)
        .collect();

    let columns = exec.map_slice(&starts, |&s| {
        let mut buf: Vec<Complex64> = x[s..s + n].iter().zip(&w).map(|(v, wi)| v * wi).collect();
        fft.process(&mut buf);
        (0..n)
            .map(|i| {
                let bin = (lowest + i as isize).rem_euclid(n as isize) as usize;
                buf[bin].norm() * scale
            })
            .collect::<Vec<f64>>()
    });

    let half = n as f64 / 2.0;
    Ok(Spectrogram {
        rx_id,
        params: *params,
        frame_interval,
        times: starts
            .iter()
            .map(|&s| t0 + (s as f64 + half) * frame_interval)
            .collect(),
        freqs: doppler_axis(n, frame_interval),
        magnitude: columns.concat(),
    })
}

/// Peak Doppler per time bin with log-parabolic refinement; `None` where the
/// peak power is less than `floor_db` above the column's median power.
pub fn peak_doppler_track_with(spec: &Spectrogram, floor_db: f64) -> Vec<Option<f64>> {
    let n = spec.num_bins();
    if n == 0 {
        return vec![None; spec.num_times()];
    }
    let floor = 10f64.powf(floor_db / 10.0);
    let df = spec.bin_spacing();
    let nyquist = 0.5 / spec.frame_interval;
    (0..spec.num_times())
        .map(|t| {
            let col = spec.column(t);
            let (imax, &peak) = col.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
            let powers: Vec<f64> = col.iter().map(|m| m * m).collect();
            if !(peak > 0.0) || peak * peak < floor * median(&powers) {
                return None;
            }
            let mut f = spec.freqs[imax];
            if n >= 3 {
                let ln = |i: usize| col[i].max(f64::MIN_POSITIVE).ln();
                let (a, b, c) = (ln((imax + n - 1) % n), ln(imax), ln((imax + 1) % n));
                let denom = a - 2.0 * b + c;
                if denom < 0.0 {
                    f += (0.5 * (a - c) / denom).clamp(-0.5, 0.5) * df;
                }
            }
            // fold back into (−fs/2, fs/2]
            if f > nyquist {
                f -= 2.0 * nyquist;
            } else if f <= -nyquist {
                f += 2.0 * nyquist;
            }
            Some(f)
        })
        .collect()
}

pub fn peak_doppler_track(spec: &Spectrogram) -> Vec<Option<f64>> {
    peak_doppler_track_with(spec, 10.0)
}

/// Bistatic angle at a point and the Doppler scaling it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BistaticGeometrySample {
    pub tx: Point2,
    pub rx: Point2,
    pub target: Point2,
    pub beta: f64,
    pub xi: f64,
}

pub fn bistatic_factor(tx: Point2, rx: Point2, p: Point2) -> Result<BistaticGeometrySample> {
    let beta = bistatic_angle(tx, rx, p)?;
    Ok(BistaticGeometrySample {
        tx,
        rx,
        target: p,
        beta,
        xi: (beta / 2.0).cos(),
    })
}
