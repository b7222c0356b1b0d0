//! Binary CIR stream files.
//!
//! Layout (all little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `CIRS`                   |
//! | 4      | 4    | version (u32)                  |
//! | 8      | 4    | frame count K (u32)            |
//! | 12     | 4    | beams N_b (u32)                |
//! | 16     | 4    | taps L (u32)                   |
//! | 20     | 8    | frame interval T, s (f64)      |
//! | 28     | 4    | receiver id (u32)              |
//! | 32     | 4    | flags (u32, bit 0 = synced)    |
//! | 36     | …    | K frames of N_b·L (re, im) f64 |
//!
//! Frames are beam-major; frame `i` in the file has `k = i`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frame::CirFrame;

pub const MAGIC: [u8; 4] = *b"CIRS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 36;
const FLAG_SYNCED: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameHeader {
    pub num_frames: u32,
    pub num_beams: u32,
    pub num_taps: u32,
    pub frame_interval: f64,
    pub rx_id: u32,
    /// Frames are TO/FO corrected.
    pub synced: bool,
}

impl FrameHeader {
    pub fn new(
        num_beams: usize,
        num_taps: usize,
        frame_interval: f64,
        rx_id: usize,
        synced: bool,
    ) -> Self {
        Self {
            num_frames: 0,
            num_beams: num_beams as u32,
            num_taps: num_taps as u32,
            frame_interval,
            rx_id: rx_id as u32,
            synced,
        }
    }

    /// Bytes per frame, or `None` on overflow.
    pub fn frame_bytes(&self) -> Option<u64> {
        (self.num_beams as u64)
            .checked_mul(self.num_taps as u64)?
            .checked_mul(16)
    }

    /// Expected total file length, or `None` on overflow.
    pub fn file_len(&self) -> Option<u64> {
        self.frame_bytes()?
            .checked_mul(self.num_frames as u64)?
            .checked_add(HEADER_LEN)
    }

    fn encode(&self) -> [u8; HEADER_LEN as usize] {
        let mut b = [0u8; HEADER_LEN as usize];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..8].copy_from_slice(&VERSION.to_le_bytes());
        b[8..12].copy_from_slice(&self.num_frames.to_le_bytes());
        b[12..16].copy_from_slice(&self.num_beams.to_le_bytes());
        b[16..20].copy_from_slice(&self.num_taps.to_le_bytes());
        b[20..28].copy_from_slice(&self.frame_interval.to_le_bytes());
        b[28..32].copy_from_slice(&self.rx_id.to_le_bytes());
        let flags = if self.synced { FLAG_SYNCED } else { 0 };
        b[32..36].copy_from_slice(&flags.to_le_bytes());
        b
    }

    fn decode(b: &[u8; HEADER_LEN as usize], path: &Path) -> Result<Self> {
        if b[0..4] != MAGIC {
            return Err(Error::format(path, "bad magic, not a CIR stream"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::format(
                path,
                format!("unsupported version {version}, expected {VERSION}"),
            ));
        }
        let header = Self {
            num_frames: u32_at(8),
            num_beams: u32_at(12),
            num_taps: u32_at(16),
            frame_interval: f64::from_le_bytes(b[20..28].try_into().unwrap()),
            rx_id: u32_at(28),
            synced: u32_at(32) & FLAG_SYNCED != 0,
        };
        if header.num_beams == 0 || header.num_taps == 0 {
            return Err(Error::format(path, "zero beams or taps"));
        }
        if header.file_len().is_none() {
            return Err(Error::format(path, "dimension overflow"));
        }
        Ok(header)
    }
}

/// Streaming writer; the frame count is patched in by [`FrameWriter::finish`].
pub struct FrameWriter<W: Write + Seek = BufWriter<File>> {
    inner: W,
    header: FrameHeader,
    path: PathBuf,
    buf: Vec<u8>,
}

impl FrameWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, header: FrameHeader) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufWriter::with_capacity(1 << 20, file), header, path)
    }
}

impl<W: Write + Seek> FrameWriter<W> {
    pub fn new(mut inner: W, mut header: FrameHeader, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        header.num_frames = 0;
        if header.frame_bytes().is_none() {
            return Err(Error::format(path, "dimension overflow"));
        }
        inner
            .write_all(&header.encode())
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            inner,
            header,
            path,
            buf: Vec::new(),
        })
    }

    pub fn frames_written(&self) -> u32 {
        self.header.num_frames
    }

    pub fn write(&mut self, frame: &CirFrame) -> Result<()> {
        let expected = (
            self.header.num_beams as usize,
            self.header.num_taps as usize,
        );
        if frame.shape() != expected {
            return Err(Error::Shape {
                expected,
                actual: frame.shape(),
            });
        }
        if frame.k != self.header.num_frames as usize {
            return Err(Error::format(
                &self.path,
                format!(
                    "frame k={} written at position {}",
                    frame.k, self.header.num_frames
                ),
            ));
        }
        self.header.num_frames = self
            .header
            .num_frames
            .checked_add(1)
            .ok_or_else(|| Error::format(&self.path, "too many frames"))?;
        self.buf.clear();
        for g in frame.gains() {
            self.buf.extend_from_slice(&g.re.to_le_bytes());
            self.buf.extend_from_slice(&g.im.to_le_bytes());
        }
        self.inner
            .write_all(&self.buf)
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn write_all(&mut self, frames: &[CirFrame]) -> Result<()> {
        frames.iter().try_for_each(|f| self.write(f))
    }

    /// Patch the frame count and flush. Returns the final header.
    pub fn finish(mut self) -> Result<FrameHeader> {
        let io = |e| Error::io(&self.path, e);
        self.inner.seek(SeekFrom::Start(8)).map_err(io)?;
        self.inner
            .write_all(&self.header.num_frames.to_le_bytes())
            .map_err(io)?;
        self.inner.seek(SeekFrom::End(0)).map_err(io)?;
        self.inner.flush().map_err(io)?;
        Ok(self.header)
    }
}

/// Streaming reader.
pub struct FrameReader<R: Read = BufReader<File>> {
    inner: R,
    header: FrameHeader,
    path: PathBuf,
    next: u32,
    buf: Vec<u8>,
}

impl FrameReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let reader = Self::new(BufReader::with_capacity(1 << 20, file), path)?;
        let expected = reader.header.file_len().unwrap_or(u64::MAX);
        if actual < expected {
            return Err(Error::format(
                path,
                format!("truncated: {actual} bytes, header implies {expected}"),
            ));
        }
        if actual > expected {
            return Err(Error::format(
                path,
                format!("{} trailing bytes after the last frame", actual - expected),
            ));
        }
        Ok(reader)
    }
}

impl<R: Read> FrameReader<R> {
    pub fn new(mut inner: R, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut b = [0u8; HEADER_LEN as usize];
        inner.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::format(&path, "truncated header"),
            _ => Error::io(&path, e),
        })?;
        let header = FrameHeader::decode(&b, &path)?;
        Ok(Self {
            inner,
            header,
            path,
            next: 0,
            buf: Vec::new(),
        })
    }

    pub fn header(&self) -> &FrameHeader {
        &self.header
    }

    pub fn remaining(&self) -> usize {
        (self.header.num_frames - self.next) as usize
    }

    pub fn read_frame(&mut self) -> Result<Option<CirFrame>> {
        if self.next >= self.header.num_frames {
            return Ok(None);
        }
        let (nb, nt) = (
            self.header.num_beams as usize,
            self.header.num_taps as usize,
        );
        self.buf.resize(nb * nt * 16, 0);
        self.inner
            .read_exact(&mut self.buf)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => {
                    Error::format(&self.path, format!("truncated in frame {}", self.next))
                }
                _ => Error::io(&self.path, e),
            })?;
        let gains = self
            .buf
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                )
            })
            .collect();
        let k = self.next as usize;
        self.next += 1;
        CirFrame::from_gains(k, self.header.rx_id as usize, nb, nt, gains).map(Some)
    }

    /// Up to `n` frames.
    pub fn read_chunk(&mut self, n: usize) -> Result<Vec<CirFrame>> {
        let mut out = Vec::with_capacity(n.min(self.remaining()));
        while out.len() < n {
            match self.read_frame()? {
                Some(f) => out.push(f),
                None => break,
            }
        }
        Ok(out)
    }

    pub fn read_all(mut self) -> Result<Vec<CirFrame>> {
        let n = self.remaining();
        self.read_chunk(n)
    }
}

/// Write a whole stream at once.
pub fn write_frames(
    path: impl AsRef<Path>,
    header: FrameHeader,
    frames: &[CirFrame],
) -> Result<FrameHeader> {
    let mut w = FrameWriter::create(path, header)?;
    w.write_all(frames)?;
    w.finish()
}

pub fn read_frames(path: impl AsRef<Path>) -> Result<(FrameHeader, Vec<CirFrame>)> {
    let r = FrameReader::open(path)?;
    let header = *r.header();
    Ok((header, r.read_all()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(n: usize, nb: usize, nt: usize) -> Vec<CirFrame> {
        (0..n)
            .map(|k| {
                let gains = (0..nb * nt)
                    .map(|i| Complex64::new(k as f64 + i as f64 * 0.5, -(i as f64)))
                    .collect();
                CirFrame::from_gains(k, 3, nb, nt, gains).unwrap()
            })
            .collect()
    }

    #[test]
    fn round_trip_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cirs");
        let frames = stream(5, 2, 3);
        let h = write_frames(&path, FrameHeader::new(2, 3, 5e-4, 3, true), &frames).unwrap();
        assert_eq!(h.num_frames, 5);
        assert_eq!(
            std::fs::metadata(&path).unwrap().len(),
            HEADER_LEN + 5 * 2 * 3 * 16
        );
        let (h2, back) = read_frames(&path).unwrap();
        assert_eq!(h, h2);
        assert!(h2.synced);
        assert_eq!(back, frames);
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cirs");
        write_frames(
            &path,
            FrameHeader::new(2, 3, 5e-4, 0, false),
            &stream(2, 2, 3),
        )
        .unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(
            matches!(FrameReader::open(&path), Err(Error::Format { reason, .. }) if reason.contains("magic"))
        );

        let mut bad = good.clone();
        bad[4] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(
            matches!(FrameReader::open(&path), Err(Error::Format { reason, .. }) if reason.contains("version"))
        );

        std::fs::write(&path, &good[..good.len() - 1]).unwrap();
        assert!(
            matches!(FrameReader::open(&path), Err(Error::Format { reason, .. }) if reason.contains("truncated"))
        );

        std::fs::write(&path, &good[..10]).unwrap();
        assert!(matches!(
            FrameReader::open(&path),
            Err(Error::Format { .. })
        ));

        let mut bad = good.clone();
        bad.push(0);
        std::fs::write(&path, &bad).unwrap();
        assert!(
            matches!(FrameReader::open(&path), Err(Error::Format { reason, .. }) if reason.contains("trailing"))
        );

        // huge dimensions must not be trusted blindly
        let mut bad = good.clone();
        bad[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        bad[16..20].copy_from_slice(&u32::MAX.to_le_bytes());
        bad[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        std::fs::write(&path, &bad).unwrap();
        assert!(FrameReader::open(&path).is_err());
    }

    #[test]
    fn writer_checks_shape_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = FrameWriter::create(
            dir.path().join("a.cirs"),
            FrameHeader::new(2, 3, 5e-4, 0, false),
        )
        .unwrap();
        assert!(w.write(&CirFrame::zeros(0, 0, 3, 3)).is_err());
        assert!(w.write(&CirFrame::zeros(1, 0, 2, 3)).is_err());
        w.write(&CirFrame::zeros(0, 0, 2, 3)).unwrap();
        assert_eq!(w.finish().unwrap().num_frames, 1);
    }

    #[test]
    fn chunked_reads_cover_the_stream() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cirs");
        let frames = stream(10, 1, 4);
        write_frames(&path, FrameHeader::new(1, 4, 1e-3, 3, false), &frames).unwrap();
        let mut r = FrameReader::open(&path).unwrap();
        let mut got = Vec::new();
        loop {
            let chunk = r.read_chunk(3).unwrap();
            if chunk.is_empty() {
                break;
            }
            got.extend(chunk);
        }
        assert_eq!(got, frames);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn random_streams_round_trip_bitwise(
            nb in 1usize..4, nt in 1usize..6, n in 0usize..5, seed in any::<u64>(), t in 1e-6f64..1.0, rx in 0usize..8,
        ) {
            let mut state = seed;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits(state >> 2)
            };
            let frames: Vec<CirFrame> = (0..n)
                .map(|k| CirFrame::from_gains(k, rx, nb, nt, (0..nb * nt).map(|_| Complex64::new(next(), next())).collect()).unwrap())
                .collect();
            let mut buf = std::io::Cursor::new(Vec::new());
            let mut w = FrameWriter::new(&mut buf, FrameHeader::new(nb, nt, t, rx, false), "mem").unwrap();
            w.write_all(&frames).unwrap();
            w.finish().unwrap();
            let bytes = buf.into_inner();
            prop_assert_eq!(bytes.len() as u64, HEADER_LEN + (n * nb * nt * 16) as u64);
            let r = FrameReader::new(bytes.as_slice(), "mem").unwrap();
            prop_assert_eq!(r.header().frame_interval.to_bits(), t.to_bits());
            let back = r.read_all().unwrap();
            for (a, b) in frames.iter().zip(&back) {
                for (x, y) in a.gains().iter().zip(b.gains()) {
                    prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
                    prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
                }
            }
            prop_assert_eq!(back.len(), n);
        }
    }
}
