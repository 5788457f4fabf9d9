//! Time-scale modification of audio with a phase vocoder whose synthesis
//! phase is obtained by integrating both the time and the frequency
//! derivative of the analysis phase (phase gradient heap integration).
//! A classical, time-only phase vocoder is included as a baseline.
//!
//! ```
//! use gradvoc_core::{stretch, Algorithm, Kind, StretchParams, TestSpec};
//!
//! let x = TestSpec::new(Kind::sinusoid(440.0), 0.5, 22_050).generate().unwrap();
//! let params = StretchParams::new(2.0, 256, 2048, 1024, 1e-6, x.len()).unwrap();
//! let y = stretch(&x, &params, Algorithm::Pghi).unwrap();
//! assert_eq!(y.len(), 2 * x.len());
//! ```

pub mod classical_pv;
pub mod error;
pub mod grid;
pub mod heap;
pub mod pghi;
pub mod phase_gradient;
pub mod signals;
pub mod stft;
pub mod vocoder;

pub use realfft::num_complex::Complex64;

pub use classical_pv::{classical_full, propagate_rect, propagate_trap, ClassicalState, Rule};
pub use error::{Error, Result};
pub use grid::Grid;
pub use pghi::{
    pghi_full, Direction, FrameInput, FrameTag, HeapEntry, IntegrationParams, PghiState,
    PropagationStep, PropagationTrace,
};
pub use phase_gradient::{
    df_backward, df_centered, df_forward, dt_backward, dt_centered, dt_forward, gradient_field,
    gradient_frame, princarg, FrameGradient, GradientField, GradientParams, Scheme,
};
pub use signals::{correlation, crest_factor, measure_peak_frequency, Kind, TestSpec};
pub use stft::{
    analyze, dual_window, hann, overlap_add, synthesize, AnalysisConfig, FrameAnalyzer, Signal,
    SpectralFrames,
};
pub use vocoder::{
    analyze_signal, reconstruct_phase, stretch, stretch_detailed, stretch_pipelined, Algorithm,
    Analysis, StreamingPhase, StretchOutput, StretchParams, SynthesisFrame,
};
