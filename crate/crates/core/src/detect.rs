//! Static-background removal, dynamic-target detection and bistatic
//! localization on synchronized CIR frames.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frame::CirFrame;
use crate::geometry::{Bistatic, Point2};
use crate::stats::median_sigma;

/// Time-averaged CIR magnitude per (beam, tap).
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    pub num_beams: usize,
    pub num_taps: usize,
    pub mean: Vec<f64>,
    pub frames: usize,
}

impl Background {
    pub fn get(&self, beam: usize, tap: usize) -> f64 {
        self.mean[beam * self.num_taps + tap]
    }
}

/// Running sum of magnitudes; merge partial sums from parallel blocks.
#[derive(Debug, Clone)]
pub struct BackgroundAccumulator {
    num_beams: usize,
    num_taps: usize,
    sum: Vec<f64>,
    frames: usize,
}

impl BackgroundAccumulator {
    pub fn new(num_beams: usize, num_taps: usize) -> Self {
        Self {
            num_beams,
            num_taps,
            sum: vec![0.0; num_beams * num_taps],
            frames: 0,
        }
    }

    pub fn add(&mut self, frame: &CirFrame) -> Result<()> {
        if frame.shape() != (self.num_beams, self.num_taps) {
            return Err(Error::Shape {
                expected: (self.num_beams, self.num_taps),
                actual: frame.shape(),
            });
        }
        for (s, g) in self.sum.iter_mut().zip(frame.gains()) {
            *s += g.norm();
        }
        self.frames += 1;
        Ok(())
    }

    /// Accumulate a block of frames, beams in parallel when asked. Every
    /// cell is summed in frame order, so the result does not depend on how
    /// the stream is split into blocks.
    pub fn add_block(&mut self, frames: &[CirFrame], exec: Exec) -> Result<()> {
        if let Some(f) = frames
            .iter()
            .find(|f| f.shape() != (self.num_beams, self.num_taps))
        {
            return Err(Error::Shape {
                expected: (self.num_beams, self.num_taps),
                actual: f.shape(),
            });
        }
        let nt = self.num_taps;
        let mut rows: Vec<(usize, &mut [f64])> =
            self.sum.chunks_mut(nt.max(1)).enumerate().collect();
        exec.for_each_mut(&mut rows, |(b, row)| {
            for f in frames {
                for (s, g) in row.iter_mut().zip(f.row(*b)) {
                    *s += g.norm();
                }
            }
        });
        self.frames += frames.len();
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn merge(&mut self, other: &BackgroundAccumulator) {
        for (s, o) in self.sum.iter_mut().zip(&other.sum) {
            *s += o;
        }
        self.frames += other.frames;
    }

    pub fn finish(&self) -> Result<Background> {
        if self.frames == 0 {
            return Err(Error::Empty("background needs at least one frame"));
        }
        let n = self.frames as f64;
        Ok(Background {
            num_beams: self.num_beams,
            num_taps: self.num_taps,
            mean: self.sum.iter().map(|s| s / n).collect(),
            frames: self.frames,
        })
    }
}

/// `h̄_b(ℓ) = mean_k |h_b(k, ℓ)|` over an aligned stream.
pub fn estimate_background(frames: &[CirFrame]) -> Result<Background> {
    let first = frames
        .first()
        .ok_or(Error::Empty("background needs at least one frame"))?;
    let mut acc = BackgroundAccumulator::new(first.num_beams(), first.num_taps());
    for f in frames {
        acc.add(f)?;
    }
    acc.finish()
}

/// Nonnegative foreground amplitude per (beam, tap).
#[derive(Debug, Clone, PartialEq)]
pub struct Foreground {
    pub num_beams: usize,
    pub num_taps: usize,
    pub values: Vec<f64>,
}

impl Foreground {
    pub fn get(&self, beam: usize, tap: usize) -> f64 {
        self.values[beam * self.num_taps + tap]
    }

    pub fn column(&self, tap: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_beams).map(move |b| self.get(b, tap))
    }
}

/// `max(|h_b(k, ℓ)| − h̄_b(ℓ), 0)` cellwise.
pub fn foreground(frame: &CirFrame, bg: &Background) -> Result<Foreground> {
    if frame.shape() != (bg.num_beams, bg.num_taps) {
        return Err(Error::Shape {
            expected: (bg.num_beams, bg.num_taps),
            actual: frame.shape(),
        });
    }
    Ok(Foreground {
        num_beams: bg.num_beams,
        num_taps: bg.num_taps,
        values: frame
            .gains()
            .iter()
            .zip(&bg.mean)
            .map(|(g, m)| (g.norm() - m).max(0.0))
            .collect(),
    })
}

/// `s(ℓ) = Σ_b fg_b(ℓ)²`.
pub fn detection_statistic(fg: &Foreground) -> Vec<f64> {
    let mut s = vec![0.0; fg.num_taps];
    for row in fg.values.chunks_exact(fg.num_taps) {
        for (acc, v) in s.iter_mut().zip(row) {
            *acc += v * v;
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectParams {
    /// Minimum peak prominence as a fraction of the largest statistic value.
    pub prominence: f64,
    /// Minimum distance between reported peaks, taps.
    pub min_separation: usize,
    /// Taps `0..=guard` are never reported (LOS leakage).
    pub guard: usize,
    pub max_targets: usize,
    /// Absolute floor on the statistic, `median(s) + floor_kappa·σ̂(s)` with
    /// σ̂ the normalized MAD.
    pub floor_kappa: f64,
    /// Recompute the background every this many frames instead of once per
    /// clip.
    pub background_window: Option<usize>,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            prominence: 0.3,
            min_separation: 3,
            guard: 2,
            max_targets: 3,
            floor_kappa: 15.0,
            background_window: None,
        }
    }
}

/// Topographic prominence of the peak at `i`.
fn prominence(s: &[f64], i: usize) -> f64 {
    let peak = s[i];
    let mut left_min = peak;
    for j in (0..i).rev() {
        if s[j] > peak {
            break;
        }
        left_min = left_min.min(s[j]);
    }
    let mut right_min = peak;
    for &v in &s[i + 1..] {
        if v > peak {
            break;
        }
        right_min = right_min.min(v);
    }
    peak - left_min.max(right_min)
}

/// Peak taps of the detection statistic, strongest first.
pub fn detect_targets(s: &[f64], params: &DetectParams) -> Vec<usize> {
    let n = s.len();
    if n == 0 {
        return Vec::new();
    }
    let mut masked = s.to_vec();
    for v in masked.iter_mut().take((params.guard + 1).min(n)) {
        *v = 0.0;
    }
    let max = masked.iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let (med, sigma) = median_sigma(&masked);
    let floor = med + params.floor_kappa * sigma;

    let mut candidates: Vec<usize> = (params.guard + 1..n)
        .filter(|&l| {
            let v = masked[l];
            let left_ok = v > masked[l - 1];
            let right_ok = l + 1 == n || v >= masked[l + 1];
            left_ok && right_ok && v > floor
        })
        .filter(|&l| prominence(&masked, l) >= params.prominence * max)
        .collect();
    candidates.sort_by(|&a, &b| masked[b].total_cmp(&masked[a]).then(a.cmp(&b)));

    let mut kept: Vec<usize> = Vec::new();
    for l in candidates {
        if kept.len() == params.max_targets {
            break;
        }
        if kept.iter().all(|&k| k.abs_diff(l) >= params.min_separation) {
            kept.push(l);
        }
    }
    kept
}

/// Angle of departure at `tap`: power-weighted circular mean of the centers
/// of the three strongest beams. Returns a world-frame angle.
pub fn aod_from_beams(fg: &Foreground, tap: usize, beam_centers: &[f64]) -> Result<f64> {
    let mut powers: Vec<(usize, f64)> = fg
        .column(tap)
        .enumerate()
        .map(|(b, v)| (b, v * v))
        .filter(|&(_, p)| p > 0.0)
        .collect();
    if powers.is_empty() {
        return Err(Error::Empty("no beam has foreground energy at this tap"));
    }
    powers.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if powers.len() == 1 {
        return Ok(beam_centers[powers[0].0]);
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for &(b, p) in powers.iter().take(3) {
        sx += p * beam_centers[b].cos();
        sy += p * beam_centers[b].sin();
    }
    Ok(sy.atan2(sx))
}

/// A localized dynamic-target observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub k: usize,
    pub rx_id: usize,
    pub tap: usize,
    /// Beam with the most foreground energy at `tap`.
    pub beam: usize,
    /// Detection statistic at `tap`.
    pub power: f64,
    pub excess_range: f64,
    /// Baseline-relative angle of departure, radians.
    pub aod: f64,
    pub x: f64,
    pub y: f64,
}

impl Detection {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Everything needed to turn a frame into detections.
#[derive(Debug, Clone)]
pub struct DetectContext {
    pub pair: Bistatic,
    /// World-frame beam centers at the transmitter.
    pub beam_centers: Vec<f64>,
    /// Path length per tap, `c / bandwidth`.
    pub tap_length: f64,
    pub params: DetectParams,
}

/// Foreground → statistic → peaks → AoD + bistatic localization.
/// Returns the detections and how many peaks failed to localize.
pub fn frame_detections(
    frame: &CirFrame,
    bg: &Background,
    ctx: &DetectContext,
) -> Result<(Vec<Detection>, usize)> {
    let fg = foreground(frame, bg)?;
    let s = detection_statistic(&fg);
    let mut out = Vec::new();
    let mut failed = 0;
    for tap in detect_targets(&s, &ctx.params) {
        let excess_range = tap as f64 * ctx.tap_length;
        let located = aod_from_beams(&fg, tap, &ctx.beam_centers).and_then(|world| {
            let aod = ctx.pair.to_baseline_angle(world);
            ctx.pair.localize(excess_range, aod).map(|p| (aod, p))
        });
        match located {
            Ok((aod, p)) => {
                let beam = (0..fg.num_beams)
                    .max_by(|&a, &b| fg.get(a, tap).total_cmp(&fg.get(b, tap)))
                    .unwrap_or(0);
                out.push(Detection {
                    k: frame.k,
                    rx_id: frame.rx_id,
                    tap,
                    beam,
                    power: s[tap],
                    excess_range,
                    aod,
                    x: p.x,
                    y: p.y,
                });
            }
            Err(_) => failed += 1,
        }
    }
    Ok((out, failed))
}
