//! Deterministic test signals and measurement helpers.

use std::f64::consts::TAU;
use std::ops::Range;

use realfft::RealFftPlanner;

use crate::error::{param, Result};
use crate::stft::{hann, Signal};

/// Signal component. Frequencies in Hz, times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Sinusoid {
        freq: f64,
        amplitude: f64,
        phase: f64,
    },
    LinearChirp {
        f_start: f64,
        f_end: f64,
    },
    ExponentialChirp {
        f_start: f64,
        f_end: f64,
    },
    Impulse {
        position: f64,
    },
    /// Unit impulses at `start + k * period` within the duration.
    ImpulseTrain {
        start: f64,
        period: f64,
    },
    Sum(Vec<Kind>),
}

impl Kind {
    /// Unit-amplitude sine with zero phase.
    pub fn sinusoid(freq: f64) -> Self {
        Kind::Sinusoid {
            freq,
            amplitude: 1.0,
            phase: 0.0,
        }
    }

    /// Instantaneous phase in radians at time `t` for the tonal kinds.
    pub fn phase_at(&self, t: f64, duration: f64) -> Option<f64> {
        match *self {
            Kind::Sinusoid { freq, phase, .. } => Some(TAU * freq * t + phase),
            Kind::LinearChirp { f_start, f_end } => {
                Some(TAU * (f_start * t + 0.5 * (f_end - f_start) / duration * t * t))
            }
            Kind::ExponentialChirp { f_start, f_end } => {
                let ln_r = (f_end / f_start).ln() / duration;
                if ln_r == 0.0 {
                    Some(TAU * f_start * t)
                } else {
                    Some(TAU * f_start * ((ln_r * t).exp() - 1.0) / ln_r)
                }
            }
            _ => None,
        }
    }

    /// Instantaneous frequency in Hz at time `t` for the tonal kinds.
    pub fn frequency_at(&self, t: f64, duration: f64) -> Option<f64> {
        match *self {
            Kind::Sinusoid { freq, .. } => Some(freq),
            Kind::LinearChirp { f_start, f_end } => {
                Some(f_start + (f_end - f_start) * t / duration)
            }
            Kind::ExponentialChirp { f_start, f_end } => {
                Some(f_start * (f_end / f_start).powf(t / duration))
            }
            _ => None,
        }
    }

    fn validate(&self, duration: f64, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        let freq_ok = |f: f64| f.is_finite() && f >= 0.0 && f < nyquist;
        match self {
            Kind::Sinusoid {
                freq,
                amplitude,
                phase,
            } => {
                if !freq_ok(*freq) || !amplitude.is_finite() || !phase.is_finite() {
                    return Err(param(format!("sinusoid at {freq} Hz is not representable")));
                }
            }
            Kind::LinearChirp { f_start, f_end } => {
                if !freq_ok(*f_start) || !freq_ok(*f_end) {
                    return Err(param("chirp endpoints must lie below Nyquist"));
                }
            }
            Kind::ExponentialChirp { f_start, f_end } => {
                if !freq_ok(*f_start) || !freq_ok(*f_end) || *f_start <= 0.0 || *f_end <= 0.0 {
                    return Err(param(
                        "exponential chirp endpoints must lie in (0, Nyquist)",
                    ));
                }
            }
            Kind::Impulse { position } => {
                if !(position.is_finite() && *position >= 0.0 && *position < duration) {
                    return Err(param(format!(
                        "impulse at {position} s is outside the signal"
                    )));
                }
            }
            Kind::ImpulseTrain { start, period } => {
                if !(period.is_finite() && *period > 0.0) {
                    return Err(param("impulse train period must be positive"));
                }
                if !(start.is_finite() && *start >= 0.0 && *start < duration) {
                    return Err(param("impulse train start is outside the signal"));
                }
            }
            Kind::Sum(parts) => {
                for p in parts {
                    p.validate(duration, sample_rate)?;
                }
            }
        }
        Ok(())
    }

    fn render(&self, out: &mut [f64], duration: f64, fs: f64) {
        let len = out.len();
        let index = |t: f64| (t * fs).round() as usize;
        match self {
            Kind::Sinusoid { amplitude, .. } => {
                for (i, v) in out.iter_mut().enumerate() {
                    *v += amplitude * self.phase_at(i as f64 / fs, duration).unwrap().sin();
                }
            }
            Kind::LinearChirp { .. } | Kind::ExponentialChirp { .. } => {
                for (i, v) in out.iter_mut().enumerate() {
                    *v += self.phase_at(i as f64 / fs, duration).unwrap().sin();
                }
            }
            Kind::Impulse { position } => {
                let i = index(*position);
                if i < len {
                    out[i] += 1.0;
                }
            }
            Kind::ImpulseTrain { start, period } => {
                let mut k = 0.0;
                loop {
                    let i = index(start + k * period);
                    if i >= len {
                        break;
                    }
                    out[i] += 1.0;
                    k += 1.0;
                }
            }
            Kind::Sum(parts) => {
                for p in parts {
                    p.render(out, duration, fs);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSpec {
    pub kind: Kind,
    pub duration: f64,
    pub sample_rate: u32,
}

impl TestSpec {
    pub fn new(kind: Kind, duration: f64, sample_rate: u32) -> Self {
        Self {
            kind,
            duration,
            sample_rate,
        }
    }

    /// Number of samples, `round(duration * sample_rate)`.
    pub fn len(&self) -> usize {
        (self.duration * f64::from(self.sample_rate)).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn generate(&self) -> Result<Signal> {
        if self.sample_rate == 0 {
            return Err(param("sample rate must be positive"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) || self.is_empty() {
            return Err(param("duration must cover at least one sample"));
        }
        let fs = f64::from(self.sample_rate);
        self.kind.validate(self.duration, fs)?;
        let mut out = vec![0.0; self.len()];
        self.kind.render(&mut out, self.duration, fs);
        Signal::new(out, self.sample_rate)
    }
}

fn region_of<'a>(signal: &'a Signal, region: &Range<usize>) -> Result<&'a [f64]> {
    if region.start >= region.end || region.end > signal.len() {
        return Err(param(format!(
            "region {region:?} is empty or exceeds {} samples",
            signal.len()
        )));
    }
    Ok(&signal.samples()[region.clone()])
}

/// Dominant frequency in Hz of a Hann-windowed region, from a 4x zero-padded
/// FFT with parabolic interpolation of the log magnitude around the peak bin.
pub fn measure_peak_frequency(signal: &Signal, region: Range<usize>) -> Result<f64> {
    let x = region_of(signal, &region)?;
    let n = x.len();
    let nfft = 4 * n;
    let w = hann(n);
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut buf = fft.make_input_vec();
    for ((b, &s), &g) in buf.iter_mut().zip(x).zip(&w) {
        *b = s * g;
    }
    let mut spec = fft.make_output_vec();
    fft.process(&mut buf, &mut spec)
        .expect("buffers come from the planner");
    let mag: Vec<f64> = spec.iter().map(|c| c.norm()).collect();
    let k = (0..mag.len())
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
        .expect("non-empty spectrum");
    if mag[k] == 0.0 {
        return Err(param("region is silent"));
    }
    let offset = if k > 0 && k + 1 < mag.len() && mag[k - 1] > 0.0 && mag[k + 1] > 0.0 {
        let (a, b, c) = (mag[k - 1].ln(), mag[k].ln(), mag[k + 1].ln());
        let denom = a - 2.0 * b + c;
        if denom == 0.0 {
            0.0
        } else {
            0.5 * (a - c) / denom
        }
    } else {
        0.0
    };
    Ok((k as f64 + offset) * f64::from(signal.sample_rate()) / nfft as f64)
}

/// Peak absolute value over RMS.
pub fn crest_factor(signal: &Signal, region: Range<usize>) -> Result<f64> {
    let x = region_of(signal, &region)?;
    let peak = x.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if rms == 0.0 {
        return Err(param("region is silent"));
    }
    Ok(peak / rms)
}

/// Pearson correlation of two signals over the same sample region.
pub fn correlation(a: &Signal, b: &Signal, region: Range<usize>) -> Result<f64> {
    let x = region_of(a, &region)?;
    let y = region_of(b, &region)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&u, &v) in x.iter().zip(y) {
        sxy += (u - mx) * (v - my);
        sxx += (u - mx) * (u - mx);
        syy += (v - my) * (v - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(param("correlation undefined for a constant region"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Diagnostic mixture: a steady sinusoid, a rising exponential chirp and a
/// single impulse at the midpoint.
pub fn sine_chirp_impulse(sample_rate: u32, duration: f64) -> TestSpec {
    let nyq = f64::from(sample_rate) / 2.0;
    TestSpec::new(
        Kind::Sum(vec![
            Kind::Sinusoid {
                freq: (nyq * 0.07).round(),
                amplitude: 0.5,
                phase: 0.0,
            },
            Kind::ExponentialChirp {
                f_start: (nyq * 0.01).round(),
                f_end: (nyq * 0.6).round(),
            },
            Kind::Impulse {
                position: duration / 2.0,
            },
        ]),
        duration,
        sample_rate,
    )
}
