//! End-to-end time stretching: analysis at hop `a_a`, phase derivative
//! estimation, phase reconstruction, and synthesis at hop `a_s`.

use std::collections::VecDeque;
use std::sync::mpsc::sync_channel;
use std::thread;

use realfft::num_complex::Complex64;

use crate::classical_pv::{classical_full, ClassicalState, Rule};
use crate::error::{param, Error, Result};
use crate::grid::Grid;
use crate::pghi::{pghi_full, FrameInput, IntegrationParams, PghiState, PropagationTrace};
use crate::phase_gradient::{
    df_column, dt_from_neighbours, gradient_field, GradientField, GradientParams, Scheme,
};
use crate::stft::{
    analyze, overlap_add, phase_of, synthesize, AnalysisConfig, FrameAnalyzer, Signal,
    SpectralFrames,
};

pub const DEFAULT_WINDOW_LEN: usize = 4092;
pub const DEFAULT_FFT_SIZE: usize = 8192;
pub const DEFAULT_SYNTHESIS_HOP: usize = 1024;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Frames the analysis thread may run ahead of the phase stage.
pub const PIPELINE_DEPTH: usize = 4;

/// Phase reconstruction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    Pghi,
    ClassicalRect,
    ClassicalTrap,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pghi => "pghi",
            Algorithm::ClassicalRect => "classical-rect",
            Algorithm::ClassicalTrap => "classical-trap",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pghi" => Ok(Algorithm::Pghi),
            "classical-rect" => Ok(Algorithm::ClassicalRect),
            "classical-trap" | "classical" => Ok(Algorithm::ClassicalTrap),
            other => Err(param(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Resolved stretch parameters. The synthesis hop is fixed and the analysis
/// hop is derived from the requested factor, rounded to the nearest integer.
#[derive(Debug, Clone, PartialEq)]
pub struct StretchParams {
    pub requested_alpha: f64,
    pub synthesis_hop: usize,
    pub analysis_hop: usize,
    pub fft_size: usize,
    pub window_len: usize,
    pub signal_len: usize,
    pub tol: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Rescale the output when its peak exceeds 1.
    pub clip_guard: bool,
}

impl StretchParams {
    pub fn new(
        requested_alpha: f64,
        synthesis_hop: usize,
        fft_size: usize,
        window_len: usize,
        tol: f64,
        signal_len: usize,
    ) -> Result<Self> {
        if !(requested_alpha.is_finite() && requested_alpha > 0.0) {
            return Err(param(format!(
                "stretch factor must be positive and finite, got {requested_alpha}"
            )));
        }
        if synthesis_hop == 0 || fft_size == 0 || window_len == 0 || signal_len == 0 {
            return Err(param(
                "hop, fft size, window length and signal length must be positive",
            ));
        }
        if window_len > fft_size {
            return Err(param(format!(
                "window length {window_len} exceeds fft size {fft_size}"
            )));
        }
        if synthesis_hop > window_len {
            return Err(param(format!(
                "synthesis hop {synthesis_hop} exceeds window length {window_len}"
            )));
        }
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(param("tolerance must be positive and finite"));
        }
        let analysis_hop = (synthesis_hop as f64 / requested_alpha).round();
        if analysis_hop < 1.0 {
            return Err(param(format!(
                "stretch factor {requested_alpha} needs an analysis hop below one sample; \
                 use a synthesis hop of at least {}",
                requested_alpha.ceil() as u64
            )));
        }
        let analysis_hop = analysis_hop as usize;
        if analysis_hop > window_len {
            return Err(param(format!(
                "analysis hop {analysis_hop} exceeds window length {window_len}; \
                 use a smaller synthesis hop or a larger factor"
            )));
        }
        Ok(Self {
            requested_alpha,
            synthesis_hop,
            analysis_hop,
            fft_size,
            window_len,
            signal_len,
            tol,
            seed: 0,
            scheme: Scheme::Centered,
            clip_guard: false,
        })
    }

    /// Default STFT setup: 4092-tap Hann, M = 8192, a_s = 1024, tol = 1e-6.
    pub fn with_defaults(requested_alpha: f64, signal_len: usize) -> Result<Self> {
        Self::new(
            requested_alpha,
            DEFAULT_SYNTHESIS_HOP,
            DEFAULT_FFT_SIZE,
            DEFAULT_WINDOW_LEN,
            DEFAULT_TOL,
            signal_len,
        )
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_clip_guard(mut self, on: bool) -> Self {
        self.clip_guard = on;
        self
    }

    /// `a_s / a_a`.
    pub fn effective_alpha(&self) -> f64 {
        self.synthesis_hop as f64 / self.analysis_hop as f64
    }

    /// `b_a = L / M`.
    pub fn analysis_freq_step(&self) -> f64 {
        self.signal_len as f64 / self.fft_size as f64
    }

    /// `b_s = (a_s / a_a) * b_a`.
    pub fn synthesis_freq_step(&self) -> f64 {
        self.analysis_freq_step() * self.synthesis_hop as f64 / self.analysis_hop as f64
    }

    pub fn analysis_config(&self) -> Result<AnalysisConfig> {
        AnalysisConfig::hann(
            self.window_len,
            self.fft_size,
            self.analysis_hop,
            self.synthesis_hop,
        )
    }

    pub fn gradient_params(&self) -> GradientParams {
        GradientParams {
            analysis_hop: self.analysis_hop,
            fft_size: self.fft_size,
            freq_step: self.analysis_freq_step(),
            scheme: self.scheme,
        }
    }

    pub fn integration_params(&self) -> IntegrationParams {
        IntegrationParams {
            synthesis_hop: self.synthesis_hop as f64,
            synthesis_freq_step: self.synthesis_freq_step(),
            tol: self.tol,
            seed: self.seed,
        }
    }

    /// Output length, `round(L * a_s / a_a)`.
    pub fn output_len(&self) -> usize {
        ((self.signal_len * self.synthesis_hop + self.analysis_hop / 2) / self.analysis_hop).max(1)
    }
}

/// Analysis products shared by every phase reconstruction method.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub frames: SpectralFrames,
    pub magnitude: Grid,
    pub phase: Grid,
    pub gradients: GradientField,
}

impl Analysis {
    pub fn checksum(&self) -> u64 {
        [
            self.magnitude.checksum(),
            self.phase.checksum(),
            self.gradients.dt.checksum(),
            self.gradients.df.checksum(),
        ]
        .into_iter()
        .fold(0u64, |acc, h| acc.rotate_left(17) ^ h)
    }
}

pub fn analyze_signal(signal: &Signal, params: &StretchParams) -> Result<Analysis> {
    if signal.len() != params.signal_len {
        return Err(param(format!(
            "parameters were derived for {} samples, signal has {}",
            params.signal_len,
            signal.len()
        )));
    }
    let cfg = params.analysis_config()?;
    let frames = analyze(signal, &cfg)?;
    let magnitude = frames.magnitude();
    let phase = frames.phase();
    let gradients = gradient_field(&phase, &params.gradient_params())?;
    Ok(Analysis {
        frames,
        magnitude,
        phase,
        gradients,
    })
}

/// Synthesis phase for every frame using the chosen method.
pub fn reconstruct_phase(
    analysis: &Analysis,
    params: &StretchParams,
    algorithm: Algorithm,
    trace: Option<&mut PropagationTrace>,
) -> Result<Grid> {
    let first = analysis.phase.frame(0);
    let a_s = params.synthesis_hop as f64;
    match algorithm {
        Algorithm::Pghi => pghi_full(
            &analysis.magnitude,
            first,
            &analysis.gradients,
            params.integration_params(),
            trace,
        ),
        Algorithm::ClassicalRect => {
            classical_full(first, &analysis.gradients, a_s, Rule::Rectangular)
        }
        Algorithm::ClassicalTrap => {
            classical_full(first, &analysis.gradients, a_s, Rule::Trapezoidal)
        }
    }
}

/// Everything produced by one stretch run.
#[derive(Debug, Clone)]
pub struct StretchOutput {
    pub signal: Signal,
    pub analysis: Analysis,
    pub synthesis_phase: Grid,
    pub trace: Option<PropagationTrace>,
}

/// Time-stretches `signal` by `params.effective_alpha()`.
pub fn stretch(signal: &Signal, params: &StretchParams, algorithm: Algorithm) -> Result<Signal> {
    Ok(stretch_detailed(signal, params, algorithm, false)?.signal)
}

/// As [`stretch`], keeping intermediate grids and optionally the propagation trace.
pub fn stretch_detailed(
    signal: &Signal,
    params: &StretchParams,
    algorithm: Algorithm,
    record_trace: bool,
) -> Result<StretchOutput> {
    let analysis = analyze_signal(signal, params)?;
    let mut trace = record_trace.then(PropagationTrace::default);
    let synthesis_phase = reconstruct_phase(&analysis, params, algorithm, trace.as_mut())?;
    let cfg = params.analysis_config()?;
    let out = synthesize(
        &analysis.frames,
        &analysis.magnitude,
        &synthesis_phase,
        &cfg,
    )?;
    let out = if params.clip_guard {
        clip_guard(out)?
    } else {
        out
    };
    Ok(StretchOutput {
        signal: out,
        analysis,
        synthesis_phase,
        trace,
    })
}

fn clip_guard(signal: Signal) -> Result<Signal> {
    let peak = signal.samples().iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    if peak <= 1.0 {
        return Ok(signal);
    }
    let rate = signal.sample_rate();
    Signal::new(
        signal
            .into_samples()
            .into_iter()
            .map(|x| x / peak)
            .collect(),
        rate,
    )
}

/// Magnitude and synthesis phase of one frame, ready for overlap-add.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisFrame {
    pub index: usize,
    pub magnitude: Vec<f64>,
    pub phase: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Engine {
    Pghi(Box<PghiState>),
    Classical(ClassicalState),
}

#[derive(Debug, Clone)]
struct Column {
    magnitude: Vec<f64>,
    phase: Vec<f64>,
}

/// Frame-by-frame phase reconstruction with one frame of lookahead.
///
/// Centered time differences for frame `n` need frame `n+1`, so a frame's
/// synthesis phase is emitted when its successor is pushed. [`finish`]
/// flushes the last frame using a backward difference. Output is
/// bit-identical to the offline [`reconstruct_phase`].
///
/// [`finish`]: StreamingPhase::finish
#[derive(Debug, Clone)]
pub struct StreamingPhase {
    gradient: GradientParams,
    integration: IntegrationParams,
    algorithm: Algorithm,
    bins: usize,
    window: VecDeque<Column>,
    next_index: usize,
    engine: Option<Engine>,
    finished: bool,
}

impl StreamingPhase {
    pub fn new(params: &StretchParams, algorithm: Algorithm) -> Self {
        Self {
            gradient: params.gradient_params(),
            integration: params.integration_params(),
            algorithm,
            bins: params.fft_size / 2 + 1,
            window: VecDeque::with_capacity(3),
            next_index: 0,
            engine: None,
            finished: false,
        }
    }

    /// Feeds analysis coefficients for the next frame.
    pub fn push(&mut self, coefficients: &[Complex64]) -> Result<Option<SynthesisFrame>> {
        if self.finished {
            return Err(param("push after finish"));
        }
        if coefficients.len() != self.bins {
            return Err(Error::Dimension(format!(
                "frame has {} bins, expected {}",
                coefficients.len(),
                self.bins
            )));
        }
        self.window.push_back(Column {
            magnitude: coefficients.iter().map(|c| c.norm()).collect(),
            phase: coefficients.iter().map(|c| phase_of(*c)).collect(),
        });
        let ready = match self.window.len() {
            1 => return Ok(None),
            2 if self.next_index == 0 => self.emit(None, 0, Some(1))?,
            _ => self.emit(Some(0), 1, Some(2))?,
        };
        if self.window.len() == 3 {
            self.window.pop_front();
        }
        Ok(Some(ready))
    }

    /// Emits the final buffered frame.
    pub fn finish(&mut self) -> Result<Option<SynthesisFrame>> {
        if self.finished {
            return Ok(None);
        }
        self.finished = true;
        match self.window.len() {
            0 => Ok(None),
            1 => self.emit(None, 0, None).map(Some),
            _ => self
                .emit(Some(self.window.len() - 2), self.window.len() - 1, None)
                .map(Some),
        }
    }

    fn emit(
        &mut self,
        prev: Option<usize>,
        cur: usize,
        next: Option<usize>,
    ) -> Result<SynthesisFrame> {
        let bins = self.bins;
        let g = self.gradient;
        let column = &self.window[cur];
        let dt: Vec<f64> = (0..bins)
            .map(|m| {
                dt_from_neighbours(
                    prev.map(|p| self.window[p].phase[m]),
                    column.phase[m],
                    next.map(|q| self.window[q].phase[m]),
                    m,
                    g.scheme,
                    g.analysis_hop,
                    g.fft_size,
                )
            })
            .collect();
        let mut df = vec![0.0; bins];
        df_column(&column.phase, g.freq_step, g.scheme, &mut df);

        let index = self.next_index;
        self.next_index += 1;
        let phase = match &mut self.engine {
            None => {
                let phase = column.phase.clone();
                self.engine = Some(match self.algorithm {
                    Algorithm::Pghi => Engine::Pghi(Box::new(PghiState::new(
                        phase.clone(),
                        dt,
                        column.magnitude.clone(),
                        self.integration,
                    )?)),
                    Algorithm::ClassicalRect => Engine::Classical(ClassicalState::new(
                        phase.clone(),
                        dt,
                        Rule::Rectangular,
                    )?),
                    Algorithm::ClassicalTrap => Engine::Classical(ClassicalState::new(
                        phase.clone(),
                        dt,
                        Rule::Trapezoidal,
                    )?),
                });
                phase
            }
            Some(Engine::Pghi(state)) => state.integrate_frame(
                FrameInput {
                    magnitude: &column.magnitude,
                    dt: &dt,
                    df: &df,
                },
                None,
            )?,
            Some(Engine::Classical(state)) => state.step(&dt, self.integration.synthesis_hop)?,
        };
        Ok(SynthesisFrame {
            index,
            magnitude: column.magnitude.clone(),
            phase,
        })
    }
}

/// As [`stretch`], with the forward transforms on a separate thread feeding
/// the in-order phase stage through a queue of [`PIPELINE_DEPTH`] frames.
/// The output is bit-identical to [`stretch`].
pub fn stretch_pipelined(
    signal: &Signal,
    params: &StretchParams,
    algorithm: Algorithm,
) -> Result<Signal> {
    if signal.len() != params.signal_len {
        return Err(param(format!(
            "signal has {} samples, parameters were built for {}",
            signal.len(),
            params.signal_len
        )));
    }
    let cfg = params.analysis_config()?;
    let frames = cfg.frame_count(signal.len());
    let bins = cfg.bins();
    let (tx, rx) = sync_channel::<Vec<Complex64>>(PIPELINE_DEPTH);

    let (magnitude, phase) = thread::scope(|scope| -> Result<(Grid, Grid)> {
        let cfg = &cfg;
        scope.spawn(move || {
            let mut analyzer = FrameAnalyzer::new(cfg);
            for n in 0..frames {
                if tx
                    .send(analyzer.frame(signal.samples(), n).to_vec())
                    .is_err()
                {
                    return;
                }
            }
        });
        let mut magnitude = Grid::zeros(bins, frames);
        let mut phase = Grid::zeros(bins, frames);
        let mut stage = StreamingPhase::new(params, algorithm);
        let mut store = |f: SynthesisFrame| {
            magnitude.frame_mut(f.index).copy_from_slice(&f.magnitude);
            phase.frame_mut(f.index).copy_from_slice(&f.phase);
        };
        for column in rx.iter() {
            if let Some(f) = stage.push(&column)? {
                store(f);
            }
        }
        if let Some(f) = stage.finish()? {
            store(f);
        }
        Ok((magnitude, phase))
    })?;

    let out = overlap_add(&magnitude, &phase, &cfg, signal.len(), signal.sample_rate())?;
    if params.clip_guard {
        clip_guard(out)
    } else {
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{correlation, measure_peak_frequency, Kind, TestSpec};

    #[test]
    fn params_from_defaults() {
        let p = StretchParams::with_defaults(2.0, 44_100).unwrap();
        assert_eq!(p.analysis_hop, 512);
        assert_eq!(p.effective_alpha(), 2.0);
        let p = StretchParams::with_defaults(1.5, 44_100).unwrap();
        assert_eq!(p.analysis_hop, 683);
        assert!((p.effective_alpha() - 1024.0 / 683.0).abs() < 1e-15);
        assert!((p.effective_alpha() - 1.4993).abs() < 1e-4);
        let p = StretchParams::with_defaults(1.0, 44_100).unwrap();
        assert_eq!(p.analysis_hop, 1024);
        assert_eq!(p.effective_alpha(), 1.0);
        assert_eq!(p.analysis_freq_step(), 44_100.0 / 8192.0);
    }

    #[test]
    fn freq_step_ratio_is_effective_alpha() {
        for alpha in [0.5, 0.9, 1.0, 1.5, 2.0, 3.7] {
            let p = StretchParams::with_defaults(alpha, 12_345).unwrap();
            let ratio = p.synthesis_freq_step() / p.analysis_freq_step();
            assert!((ratio - p.effective_alpha()).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_params() {
        assert!(StretchParams::new(4096.0, 1024, 8192, 4092, 1e-6, 100).is_err());
        assert!(StretchParams::new(0.0, 1024, 8192, 4092, 1e-6, 100).is_err());
        assert!(StretchParams::new(f64::NAN, 1024, 8192, 4092, 1e-6, 100).is_err());
        assert!(StretchParams::new(2.0, 1024, 2048, 4092, 1e-6, 100).is_err());
        assert!(StretchParams::new(0.2, 1024, 8192, 4092, 1e-6, 100).is_err());
        assert!(StretchParams::new(2.0, 1024, 8192, 4092, 0.0, 100).is_err());
        let msg = StretchParams::new(5000.0, 1024, 8192, 4092, 1e-6, 100)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("synthesis hop"), "{msg}");
    }

    #[test]
    fn signal_length_must_match_params() {
        let p = StretchParams::new(2.0, 64, 256, 128, 1e-6, 1000).unwrap();
        let s = Signal::new(vec![0.0; 999], 8000).unwrap();
        assert!(stretch(&s, &p, Algorithm::Pghi).is_err());
    }

    fn sine(freq: f64, secs: f64, fs: u32) -> Signal {
        TestSpec::new(Kind::sinusoid(freq), secs, fs)
            .generate()
            .unwrap()
    }

    #[test]
    fn pipelined_matches_offline() {
        let x = TestSpec::new(
            Kind::Sum(vec![
                Kind::sinusoid(300.0),
                Kind::Impulse { position: 0.31 },
            ]),
            0.6,
            16_000,
        )
        .generate()
        .unwrap();
        for alpha in [0.7, 1.8] {
            let p = StretchParams::new(alpha, 128, 1024, 512, 1e-6, x.len())
                .unwrap()
                .with_seed(5);
            for alg in [
                Algorithm::Pghi,
                Algorithm::ClassicalRect,
                Algorithm::ClassicalTrap,
            ] {
                let a = stretch(&x, &p, alg).unwrap();
                let b = stretch_pipelined(&x, &p, alg).unwrap();
                assert_eq!(a, b, "{alg:?} at {alpha}");
            }
        }
    }

    #[test]
    fn unit_factor_is_near_identity() {
        let x = sine(440.0, 1.0, 22_050);
        let p = StretchParams::new(1.0, 256, 2048, 1024, 1e-6, x.len()).unwrap();
        for alg in [Algorithm::Pghi, Algorithm::ClassicalTrap] {
            let y = stretch(&x, &p, alg).unwrap();
            assert_eq!(y.len(), x.len());
            let r = correlation(&x, &y, 2048..x.len() - 2048).unwrap();
            assert!(r > 0.999, "{alg:?}: {r}");
        }
    }

    #[test]
    fn doubling_keeps_pitch() {
        let x = sine(440.0, 1.0, 22_050);
        let p = StretchParams::new(2.0, 256, 2048, 1024, 1e-6, x.len()).unwrap();
        let y = stretch(&x, &p, Algorithm::Pghi).unwrap();
        assert_eq!(y.len(), 2 * x.len());
        let f = measure_peak_frequency(&y, 2048..y.len() - 2048).unwrap();
        assert!((f - 440.0).abs() < 22_050.0 / 2048.0, "{f}");
    }

    #[test]
    fn magnitude_passes_through_and_analysis_is_shared() {
        let x = sine(300.0, 0.5, 16_000);
        let p = StretchParams::new(1.5, 128, 1024, 512, 1e-6, x.len()).unwrap();
        let a = stretch_detailed(&x, &p, Algorithm::Pghi, false).unwrap();
        let b = stretch_detailed(&x, &p, Algorithm::ClassicalTrap, false).unwrap();
        assert_eq!(a.analysis.checksum(), b.analysis.checksum());
        assert_eq!(a.analysis.magnitude, a.analysis.frames.magnitude());
    }

    #[test]
    fn clip_guard_rescales() {
        let x = Signal::new(
            (0..4000).map(|i| 1.5 * (i as f64 * 0.05).sin()).collect(),
            8000,
        )
        .unwrap();
        let p = StretchParams::new(1.0, 64, 512, 256, 1e-6, x.len())
            .unwrap()
            .with_clip_guard(true);
        let y = stretch(&x, &p, Algorithm::Pghi).unwrap();
        let peak = y.samples().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-12);
    }

    #[test]
    fn streaming_matches_offline() {
        let spec = TestSpec::new(
            Kind::Sum(vec![
                Kind::sinusoid(440.0),
                Kind::LinearChirp {
                    f_start: 200.0,
                    f_end: 3000.0,
                },
                Kind::Impulse { position: 0.3 },
            ]),
            0.6,
            16_000,
        );
        let x = spec.generate().unwrap();
        for alg in [
            Algorithm::Pghi,
            Algorithm::ClassicalRect,
            Algorithm::ClassicalTrap,
        ] {
            let p = StretchParams::new(1.7, 128, 1024, 512, 1e-4, x.len())
                .unwrap()
                .with_seed(11);
            let analysis = analyze_signal(&x, &p).unwrap();
            let offline = reconstruct_phase(&analysis, &p, alg, None).unwrap();
            let mut stream = StreamingPhase::new(&p, alg);
            let mut got = Vec::new();
            for n in 0..analysis.frames.frame_count() {
                if let Some(f) = stream.push(analysis.frames.frame(n)).unwrap() {
                    got.push(f);
                }
            }
            got.extend(stream.finish().unwrap());
            assert_eq!(got.len(), analysis.frames.frame_count());
            for f in &got {
                assert_eq!(
                    f.phase.as_slice(),
                    offline.frame(f.index),
                    "{alg:?} frame {}",
                    f.index
                );
                assert_eq!(f.magnitude.as_slice(), analysis.magnitude.frame(f.index));
            }
            assert!(stream.push(analysis.frames.frame(0)).is_err());
        }
    }
}
