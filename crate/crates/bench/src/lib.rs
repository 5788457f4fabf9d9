//! Fixtures shared by the benchmarks.

use gradvoc_core::signals::sine_chirp_impulse;
use gradvoc_core::vocoder::{
    DEFAULT_FFT_SIZE, DEFAULT_SYNTHESIS_HOP, DEFAULT_TOL, DEFAULT_WINDOW_LEN,
};
use gradvoc_core::{Signal, StretchParams};

pub const SAMPLE_RATE: u32 = 44_100;

/// Sinusoid plus chirp plus impulse, `seconds` long.
pub fn mixed_signal(seconds: f64) -> Signal {
    sine_chirp_impulse(SAMPLE_RATE, seconds)
        .generate()
        .expect("valid fixture")
}

/// Default engine settings for `signal` at stretch factor `alpha`.
pub fn default_params(signal: &Signal, alpha: f64) -> StretchParams {
    StretchParams::new(
        alpha,
        DEFAULT_SYNTHESIS_HOP,
        DEFAULT_FFT_SIZE,
        DEFAULT_WINDOW_LEN,
        DEFAULT_TOL,
        signal.len(),
    )
    .expect("valid fixture")
}
