use crate::error::{Error, Result};

/// Real-valued time-frequency grid stored frame-major: all bins of frame 0,
/// then all bins of frame 1, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bins: usize,
    frames: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(bins: usize, frames: usize) -> Self {
        Self {
            bins,
            frames,
            data: vec![0.0; bins * frames],
        }
    }

    pub fn from_vec(bins: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != bins * frames {
            return Err(Error::Dimension(format!(
                "grid of {bins}x{frames} needs {} values, got {}",
                bins * frames,
                data.len()
            )));
        }
        Ok(Self { bins, frames, data })
    }

    /// Builds a grid from per-frame columns. All columns must share one length.
    pub fn from_frames(columns: &[Vec<f64>]) -> Result<Self> {
        let bins = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(bins * columns.len());
        for (n, col) in columns.iter().enumerate() {
            if col.len() != bins {
                return Err(Error::Dimension(format!(
                    "frame {n} has {} bins, expected {bins}",
                    col.len()
                )));
            }
            data.extend_from_slice(col);
        }
        Ok(Self {
            bins,
            frames: columns.len(),
            data,
        })
    }

    #[inline]
    pub fn bins(&self) -> usize {
        self.bins
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[frame * self.bins + bin]
    }

    #[inline]
    pub fn set(&mut self, bin: usize, frame: usize, value: f64) {
        self.data[frame * self.bins + bin] = value;
    }

    #[inline]
    pub fn frame(&self, n: usize) -> &[f64] {
        &self.data[n * self.bins..(n + 1) * self.bins]
    }

    #[inline]
    pub fn frame_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.bins..(n + 1) * self.bins]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.bins == other.bins && self.frames == other.frames
    }

    /// Order-sensitive 64-bit FNV-1a digest over the raw bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in [self.bins as u64, self.frames as u64]
            .into_iter()
            .chain(self.data.iter().map(|x| x.to_bits()))
        {
            for byte in v.to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}
