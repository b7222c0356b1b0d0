//! Spectrogram files: a binary matrix, a key = value text sidecar, and a
//! long-format CSV for plotting.
//!
//! Binary layout (little-endian):
//!
//! | offset | size      | field                             |
//! |--------|-----------|-----------------------------------|
//! | 0      | 4         | magic `SPGM`                      |
//! | 4      | 4         | version (u32)                     |
//! | 8      | 4         | receiver id (u32)                 |
//! | 12     | 4         | time bins N_t (u32)               |
//! | 16     | 4         | Doppler bins N_f (u32)            |
//! | 20     | 4         | window length (u32)               |
//! | 24     | 4         | hop (u32)                         |
//! | 28     | 4         | window (u32, 0 Hann, 1 rectangular) |
//! | 32     | 8         | frame interval T, s (f64)         |
//! | 40     | 8·N_t     | window-center times, s            |
//! | …      | 8·N_f     | Doppler bin centers, Hz           |
//! | …      | 8·N_t·N_f | magnitudes, time-major            |

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microdoppler::{Spectrogram, StftParams, Window};

pub const MAGIC: [u8; 4] = *b"SPGM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 40;

fn window_code(w: Window) -> u32 {
    match w {
        Window::Hann => 0,
        Window::Rectangular => 1,
    }
}

pub fn encode(spec: &Spectrogram) -> Vec<u8> {
    let (nt, nf) = (spec.num_times(), spec.num_bins());
    let mut b = Vec::with_capacity(HEADER_LEN + 8 * (nt + nf + nt * nf));
    b.extend_from_slice(&MAGIC);
    for v in [
        VERSION,
        spec.rx_id as u32,
        nt as u32,
        nf as u32,
        spec.params.window_len as u32,
        spec.params.hop as u32,
        window_code(spec.params.window),
    ] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&spec.frame_interval.to_le_bytes());
    for v in spec.times.iter().chain(&spec.freqs).chain(&spec.magnitude) {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Spectrogram> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::format(path, "bad magic, not a spectrogram"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}, expected {VERSION}"),
        ));
    }
    let (nt, nf) = (u32_at(12) as usize, u32_at(16) as usize);
    let window = match u32_at(28) {
        0 => Window::Hann,
        1 => Window::Rectangular,
        w => return Err(Error::format(path, format!("unknown window code {w}"))),
    };
    let values = nt
        .checked_mul(nf)
        .and_then(|m| m.checked_add(nt)?.checked_add(nf))
        .and_then(|n| n.checked_mul(8)?.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(path, "dimension overflow"))?;
    if bytes.len() != values {
        let what = if bytes.len() < values {
            "truncated"
        } else {
            "trailing bytes"
        };
        return Err(Error::format(
            path,
            format!("{what}: {} bytes, header implies {values}", bytes.len()),
        ));
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| floats.by_ref().take(n).collect::<Vec<f64>>();
    let times = take(nt);
    let freqs = take(nf);
    let magnitude = take(nt * nf);
    Ok(Spectrogram {
        rx_id: u32_at(8) as usize,
        params: StftParams {
            window_len: u32_at(20) as usize,
            hop: u32_at(24) as usize,
            window,
        },
        frame_interval: f64::from_le_bytes(bytes[32..40].try_into().unwrap()),
        times,
        freqs,
        magnitude,
    })
}

pub fn write_spectrogram(path: impl AsRef<Path>, spec: &Spectrogram) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(spec)).map_err(|e| Error::io(path, e))
}

pub fn read_spectrogram(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Human-readable description of the axes and STFT parameters.
pub fn sidecar(spec: &Spectrogram) -> String {
    let mut s = String::new();
    let first = |v: &[f64]| v.first().copied().unwrap_or(f64::NAN);
    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    let _ = writeln!(s, "format = SPGM v{VERSION}");
    let _ = writeln!(s, "rx_id = {}", spec.rx_id);
    let _ = writeln!(
        s,
        "layout = time-major, {} x {}",
        spec.num_times(),
        spec.num_bins()
    );
    let _ = writeln!(s, "values = linear magnitude");
    let _ = writeln!(s, "window = {}", spec.params.window.name());
    let _ = writeln!(s, "window_len = {}", spec.params.window_len);
    let _ = writeln!(s, "hop = {}", spec.params.hop);
    let _ = writeln!(s, "frame_interval_s = {}", spec.frame_interval);
    let _ = writeln!(s, "bin_spacing_hz = {}", spec.bin_spacing());
    let _ = writeln!(s, "time_first_s = {}", first(&spec.times));
    let _ = writeln!(s, "time_last_s = {}", last(&spec.times));
    let _ = writeln!(s, "doppler_min_hz = {}", first(&spec.freqs));
    let _ = writeln!(s, "doppler_max_hz = {}", last(&spec.freqs));
    s
}

pub fn write_sidecar(path: impl AsRef<Path>, spec: &Spectrogram) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, sidecar(spec)).map_err(|e| Error::io(path, e))
}

/// One cell of the long-format export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramCell {
    pub t: f64,
    pub doppler_hz: f64,
    pub magnitude: f64,
    pub magnitude_db: f64,
}

pub fn cells(spec: &Spectrogram) -> impl Iterator<Item = SpectrogramCell> + '_ {
    (0..spec.num_times()).flat_map(move |t| {
        spec.column(t)
            .iter()
            .zip(&spec.freqs)
            .map(move |(&m, &f)| SpectrogramCell {
                t: spec.times[t],
                doppler_hz: f,
                magnitude: m,
                magnitude_db: 20.0 * m.max(1e-300).log10(),
            })
    })
}
