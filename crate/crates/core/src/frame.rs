use num_complex::Complex64;

use crate::error::{Error, Result};

/// One channel estimate: complex gains for every (beam, tap) pair, stored
/// row-major with beams as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CirFrame {
    pub k: usize,
    pub rx_id: usize,
    num_beams: usize,
    num_taps: usize,
    gains: Vec<Complex64>,
}

impl CirFrame {
    pub fn zeros(k: usize, rx_id: usize, num_beams: usize, num_taps: usize) -> Self {
        Self {
            k,
            rx_id,
            num_beams,
            num_taps,
            gains: vec![Complex64::new(0.0, 0.0); num_beams * num_taps],
        }
    }

    pub fn from_gains(
        k: usize,
        rx_id: usize,
        num_beams: usize,
        num_taps: usize,
        gains: Vec<Complex64>,
    ) -> Result<Self> {
        if gains.len() != num_beams * num_taps {
            return Err(Error::Shape {
                expected: (num_beams, num_taps),
                actual: (gains.len() / num_taps.max(1), num_taps),
            });
        }
        Ok(Self {
            k,
            rx_id,
            num_beams,
            num_taps,
            gains,
        })
    }

    pub fn num_beams(&self) -> usize {
        self.num_beams
    }

    pub fn num_taps(&self) -> usize {
        self.num_taps
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_beams, self.num_taps)
    }

    pub fn get(&self, beam: usize, tap: usize) -> Complex64 {
        self.gains[beam * self.num_taps + tap]
    }

    pub fn set(&mut self, beam: usize, tap: usize, value: Complex64) {
        self.gains[beam * self.num_taps + tap] = value;
    }

    pub fn add(&mut self, beam: usize, tap: usize, value: Complex64) {
        self.gains[beam * self.num_taps + tap] += value;
    }

    pub fn row(&self, beam: usize) -> &[Complex64] {
        &self.gains[beam * self.num_taps..(beam + 1) * self.num_taps]
    }

    pub fn row_mut(&mut self, beam: usize) -> &mut [Complex64] {
        &mut self.gains[beam * self.num_taps..(beam + 1) * self.num_taps]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.gains.chunks_exact(self.num_taps)
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn gains_mut(&mut self) -> &mut [Complex64] {
        &mut self.gains
    }

    pub fn is_finite(&self) -> bool {
        self.gains
            .iter()
            .all(|g| g.re.is_finite() && g.im.is_finite())
    }

    /// Per-tap magnitude taken as the maximum over beams.
    pub fn beam_max_magnitude(&self) -> Vec<f64> {
        let mut m = vec![0.0f64; self.num_taps];
        for row in self.rows() {
            for (acc, g) in m.iter_mut().zip(row) {
                *acc = acc.max(g.norm());
            }
        }
        m
    }
}
