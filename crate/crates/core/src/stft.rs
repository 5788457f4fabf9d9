//! Windowed STFT analysis and dual-window overlap-add synthesis.
//!
//! Frames use the zero-phase convention: the window centre sits at FFT
//! buffer index 0, so an impulse at a frame centre has a flat, zero-phase
//! spectrum. Only bins `0..=M/2` are stored; synthesis restores the
//! negative frequencies by conjugate symmetry.
//!
//! Framing pads the signal with `W/2` zeros on both sides. Frame `n` is
//! centred at padded position `(n + 1) * a_a`, and
//! `N = ceil((L + 2 * (W/2)) / a_a) - 1` frames are taken so that every input
//! sample sees the complete set of overlapping windows. That is what makes the
//! dual window an exact inverse. A frame at padded position 0 would only ever
//! cover zeros, so the first frame already overlaps the signal.

use std::f64::consts::PI;
use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{RealFftPlanner, RealToComplex};

use crate::error::{param, Error, Result};
use crate::grid::Grid;

/// Mono sample buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(param("signal must contain at least one sample"));
        }
        if sample_rate == 0 {
            return Err(param("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(param(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Hann window in the zero-phase layout used throughout: tap `k` sits at
/// offset `k - len/2` from the frame centre and the centre tap is exactly 1.
/// For even lengths the first tap is 0.
pub fn hann(len: usize) -> Vec<f64> {
    let c = (len / 2) as f64;
    let w = len as f64;
    (0..len)
        .map(|k| 0.5 + 0.5 * (2.0 * PI * (k as f64 - c) / w).cos())
        .collect()
}

/// Analysis/synthesis configuration shared by [`analyze`], [`dual_window`] and
/// [`synthesize`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    window: Vec<f64>,
    fft_size: usize,
    analysis_hop: usize,
    synthesis_hop: usize,
}

impl AnalysisConfig {
    pub fn new(
        window: Vec<f64>,
        fft_size: usize,
        analysis_hop: usize,
        synthesis_hop: usize,
    ) -> Result<Self> {
        let w = window.len();
        if w == 0 {
            return Err(param("window must have at least one tap"));
        }
        if fft_size < 2 {
            return Err(param("fft size must be at least 2"));
        }
        if w > fft_size {
            return Err(param(format!(
                "window length {w} exceeds fft size {fft_size}"
            )));
        }
        if analysis_hop == 0 || analysis_hop > w {
            return Err(param(format!(
                "analysis hop {analysis_hop} must lie in 1..={w}"
            )));
        }
        if synthesis_hop == 0 || synthesis_hop > w {
            return Err(param(format!(
                "synthesis hop {synthesis_hop} must lie in 1..={w}"
            )));
        }
        if window.iter().any(|g| !g.is_finite()) {
            return Err(param("window taps must be finite"));
        }
        Ok(Self {
            window,
            fft_size,
            analysis_hop,
            synthesis_hop,
        })
    }

    /// Hann-windowed configuration.
    pub fn hann(
        window_len: usize,
        fft_size: usize,
        analysis_hop: usize,
        synthesis_hop: usize,
    ) -> Result<Self> {
        Self::new(hann(window_len), fft_size, analysis_hop, synthesis_hop)
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn analysis_hop(&self) -> usize {
        self.analysis_hop
    }

    pub fn synthesis_hop(&self) -> usize {
        self.synthesis_hop
    }

    /// Number of stored bins, `M/2 + 1`.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Zeros added in front of (and behind) the signal before framing.
    pub fn padding(&self) -> usize {
        self.window.len() / 2
    }

    pub fn frame_count(&self, signal_len: usize) -> usize {
        ((signal_len + 2 * self.padding()).div_ceil(self.analysis_hop) - 1).max(1)
    }

    /// Offset of tap `k` from the frame centre.
    #[inline]
    fn tap_offset(&self, k: usize) -> isize {
        k as isize - (self.window.len() / 2) as isize
    }
}

/// Complex STFT coefficients `c(m, n)` for `m = 0..=M/2`, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrames {
    coefficients: Vec<Complex64>,
    bins: usize,
    fft_size: usize,
    frame_count: usize,
    analysis_hop: usize,
    window_len: usize,
    signal_len: usize,
    sample_rate: u32,
}

impl SpectralFrames {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn analysis_hop(&self) -> usize {
        self.analysis_hop
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Length of the analysed signal before padding.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame(&self, n: usize) -> &[Complex64] {
        &self.coefficients[n * self.bins..(n + 1) * self.bins]
    }

    pub fn coefficient(&self, bin: usize, frame: usize) -> Complex64 {
        self.coefficients[frame * self.bins + bin]
    }

    /// Position of frame `n`'s centre in the original (unpadded) signal.
    pub fn frame_center(&self, n: usize) -> isize {
        ((n + 1) * self.analysis_hop) as isize - (self.window_len / 2) as isize
    }

    /// `s(m, n) = |c(m, n)|`.
    pub fn magnitude(&self) -> Grid {
        let data = self.coefficients.iter().map(|c| c.norm()).collect();
        Grid::from_vec(self.bins, self.frame_count, data).expect("shape is consistent")
    }

    /// `phi_a(m, n) = arg c(m, n)` in `(-pi, pi]`; zero coefficients get phase 0.
    pub fn phase(&self) -> Grid {
        let data = self.coefficients.iter().map(|c| phase_of(*c)).collect();
        Grid::from_vec(self.bins, self.frame_count, data).expect("shape is consistent")
    }
}

/// Argument of `c` mapped into `(-pi, pi]`, with `arg 0 = 0`.
#[inline]
pub fn phase_of(c: Complex64) -> f64 {
    if c.re == 0.0 && c.im == 0.0 {
        return 0.0;
    }
    let p = c.im.atan2(c.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Reusable single-frame forward transform.
pub struct FrameAnalyzer {
    cfg: AnalysisConfig,
    fft: Arc<dyn RealToComplex<f64>>,
    buf: Vec<f64>,
    spec: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl FrameAnalyzer {
    pub fn new(cfg: &AnalysisConfig) -> Self {
        let fft = RealFftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
        Self {
            buf: fft.make_input_vec(),
            spec: fft.make_output_vec(),
            scratch: fft.make_scratch_vec(),
            fft,
            cfg: cfg.clone(),
        }
    }

    /// Coefficients of frame `n` of `x`, bins `0..=M/2`.
    pub fn frame(&mut self, x: &[f64], n: usize) -> &[Complex64] {
        let m = self.cfg.fft_size as isize;
        self.buf.iter_mut().for_each(|v| *v = 0.0);
        // Padded centre (n+1)*hop is original position (n+1)*hop - pad.
        let centre = ((n + 1) * self.cfg.analysis_hop) as isize - self.cfg.padding() as isize;
        for (k, &g) in self.cfg.window.iter().enumerate() {
            let off = self.cfg.tap_offset(k);
            let pos = centre + off;
            if pos < 0 || pos as usize >= x.len() {
                continue;
            }
            self.buf[off.rem_euclid(m) as usize] = x[pos as usize] * g;
        }
        self.fft
            .process_with_scratch(&mut self.buf, &mut self.spec, &mut self.scratch)
            .expect("buffers come from the planner");
        &self.spec
    }
}

/// Forward STFT of `signal` at hop `cfg.analysis_hop()`.
pub fn analyze(signal: &Signal, cfg: &AnalysisConfig) -> Result<SpectralFrames> {
    let x = signal.samples();
    if x.is_empty() {
        return Err(param("cannot analyse an empty signal"));
    }
    let bins = cfg.bins();
    let frame_count = cfg.frame_count(x.len());
    let mut analyzer = FrameAnalyzer::new(cfg);
    let mut coefficients = Vec::with_capacity(bins * frame_count);
    for n in 0..frame_count {
        coefficients.extend_from_slice(analyzer.frame(x, n));
    }

    Ok(SpectralFrames {
        coefficients,
        bins,
        fft_size: cfg.fft_size,
        frame_count,
        analysis_hop: cfg.analysis_hop,
        window_len: cfg.window.len(),
        signal_len: x.len(),
        sample_rate: signal.sample_rate(),
    })
}

/// Canonical dual window for synthesis hop `a_s`:
/// `g_s(l) = g_a(l) / (M * sum_n g_a(l - n a_s)^2)`.
pub fn dual_window(cfg: &AnalysisConfig) -> Result<Vec<f64>> {
    let w = cfg.window.len();
    let hop = cfg.synthesis_hop;
    let scale = cfg.fft_size as f64;
    let mut dual = Vec::with_capacity(w);
    for k in 0..w {
        // Taps congruent to k modulo the hop.
        let mut denom = 0.0;
        let mut j = k % hop;
        while j < w {
            denom += cfg.window[j] * cfg.window[j];
            j += hop;
        }
        if denom <= 0.0 {
            return Err(Error::NonInvertible { tap: k });
        }
        dual.push(cfg.window[k] / (scale * denom));
    }
    Ok(dual)
}

/// First output sample and output length after trimming the framing padding,
/// both scaled by `a_s / a_a`.
pub fn output_span(cfg: &AnalysisConfig, signal_len: usize) -> (usize, usize) {
    let a = cfg.analysis_hop;
    let scaled = |v: usize| (v * cfg.synthesis_hop + a / 2) / a;
    (scaled(cfg.padding()), scaled(signal_len).max(1))
}

/// Overlap-add resynthesis from a magnitude and phase grid.
///
/// Each frame is `s * exp(i phi)` inverted with an unnormalised inverse FFT
/// (the `1/M` lives in the dual window), windowed by the dual of the analysis
/// window for hop `cfg.synthesis_hop()`, and added at `(n + 1) * a_s`. The result
/// is trimmed to `round(L * a_s / a_a)` samples.
pub fn synthesize(
    frames: &SpectralFrames,
    magnitude: &Grid,
    phase: &Grid,
    cfg: &AnalysisConfig,
) -> Result<Signal> {
    let bins = frames.bins;
    let n_frames = frames.frame_count;
    for (name, g) in [("magnitude", magnitude), ("phase", phase)] {
        if g.bins() != bins || g.frames() != n_frames {
            return Err(Error::Dimension(format!(
                "{name} grid is {}x{}, frames are {bins}x{n_frames}",
                g.bins(),
                g.frames()
            )));
        }
    }
    if cfg.fft_size != frames.fft_size || cfg.window.len() != frames.window_len {
        return Err(Error::Dimension(
            "configuration does not match the analysed frames".into(),
        ));
    }
    overlap_add(magnitude, phase, cfg, frames.signal_len, frames.sample_rate)
}

/// [`synthesize`] without an analysis to check against: the grids must hold
/// `cfg.frame_count(signal_len)` frames of `cfg.bins()` bins.
pub fn overlap_add(
    magnitude: &Grid,
    phase: &Grid,
    cfg: &AnalysisConfig,
    signal_len: usize,
    sample_rate: u32,
) -> Result<Signal> {
    let bins = cfg.bins();
    let n_frames = cfg.frame_count(signal_len);
    if !magnitude.same_shape(phase) || magnitude.bins() != bins || magnitude.frames() != n_frames {
        return Err(Error::Dimension(format!(
            "grids are {}x{} and {}x{}, expected {bins}x{n_frames}",
            magnitude.bins(),
            magnitude.frames(),
            phase.bins(),
            phase.frames()
        )));
    }

    let dual = dual_window(cfg)?;
    let m = cfg.fft_size;
    let hop = cfg.synthesis_hop;
    let w = cfg.window.len();
    let mut out = vec![0.0; (n_frames + 1) * hop + w];

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(m);
    let mut spec = ifft.make_input_vec();
    let mut buf = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();

    for n in 0..n_frames {
        let (mag, ph) = (magnitude.frame(n), phase.frame(n));
        for ((c, &s), &p) in spec.iter_mut().zip(mag).zip(ph) {
            *c = Complex64::from_polar(s, p);
        }
        // A real frame has real DC and Nyquist terms; keep their real parts.
        spec[0].im = 0.0;
        if m.is_multiple_of(2) {
            spec[bins - 1].im = 0.0;
        }
        ifft.process_with_scratch(&mut spec, &mut buf, &mut scratch)
            .expect("buffers come from the planner");
        let centre = ((n + 1) * hop) as isize;
        for (k, &gs) in dual.iter().enumerate() {
            let off = cfg.tap_offset(k);
            let pos = centre + off;
            if pos < 0 {
                continue;
            }
            out[pos as usize] += gs * buf[off.rem_euclid(m as isize) as usize];
        }
    }

    let (start, len) = output_span(cfg, signal_len);
    let end = (start + len).min(out.len());
    Signal::new(out[start..end].to_vec(), sample_rate)
}
