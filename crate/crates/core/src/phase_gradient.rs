//! Finite-difference estimates of the STFT phase derivatives.
//!
//! The time derivative is heterodyned: the nominal advance `2 pi m a_a / M`
//! of bin `m` is removed before wrapping and added back afterwards, so only
//! the deviation from the bin centre frequency has to survive `princarg`.
//! Time derivatives are in rad/sample. Frequency derivatives are divided by
//! the analysis frequency step `b_a` and later multiplied by the synthesis
//! step `b_s`; the product is `(a_s / a_a) * princarg(..)`.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Principal argument, `x - 2 pi round(x / 2 pi)`, in `(-pi, pi]`.
///
/// Exact half-integer ratios round towards negative infinity, so `pi` and
/// `-pi` both map to `pi`.
#[inline]
pub fn princarg(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let r = x - TAU * (x / TAU - 0.5).ceil();
    if r <= -PI {
        r + TAU
    } else if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Which neighbours a difference uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    Backward,
    Forward,
    #[default]
    Centered,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Backward => "backward",
            Scheme::Forward => "forward",
            Scheme::Centered => "centered",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backward" => Ok(Scheme::Backward),
            "forward" => Ok(Scheme::Forward),
            "centered" | "centred" => Ok(Scheme::Centered),
            other => Err(Error::Parameter(format!("unknown scheme `{other}`"))),
        }
    }
}

#[inline]
fn heterodyned_step(later: f64, earlier: f64, bin: usize, hop: usize, fft_size: usize) -> f64 {
    let nominal = TAU * bin as f64 / fft_size as f64;
    princarg(later - earlier - nominal * hop as f64) / hop as f64 + nominal
}

fn check_bin(phase: &Grid, m: usize, n: usize) -> Result<()> {
    if m >= phase.bins() || n >= phase.frames() {
        return Err(Error::OutOfRange(format!(
            "({m}, {n}) outside {}x{} grid",
            phase.bins(),
            phase.frames()
        )));
    }
    Ok(())
}

pub fn dt_backward(phase: &Grid, m: usize, n: usize, hop: usize, fft_size: usize) -> Result<f64> {
    check_bin(phase, m, n)?;
    if n == 0 {
        return Err(Error::OutOfRange(
            "backward time difference needs n >= 1".into(),
        ));
    }
    Ok(heterodyned_step(
        phase.get(m, n),
        phase.get(m, n - 1),
        m,
        hop,
        fft_size,
    ))
}

pub fn dt_forward(phase: &Grid, m: usize, n: usize, hop: usize, fft_size: usize) -> Result<f64> {
    check_bin(phase, m, n)?;
    if n + 1 >= phase.frames() {
        return Err(Error::OutOfRange(
            "forward time difference needs n <= N-2".into(),
        ));
    }
    Ok(heterodyned_step(
        phase.get(m, n + 1),
        phase.get(m, n),
        m,
        hop,
        fft_size,
    ))
}

pub fn dt_centered(phase: &Grid, m: usize, n: usize, hop: usize, fft_size: usize) -> Result<f64> {
    let b = dt_backward(phase, m, n, hop, fft_size)?;
    let f = dt_forward(phase, m, n, hop, fft_size)?;
    Ok(0.5 * (b + f))
}

pub fn df_backward(phase: &Grid, m: usize, n: usize, freq_step: f64) -> Result<f64> {
    check_bin(phase, m, n)?;
    if m == 0 {
        return Err(Error::OutOfRange(
            "backward frequency difference needs m >= 1".into(),
        ));
    }
    Ok(princarg(phase.get(m, n) - phase.get(m - 1, n)) / freq_step)
}

pub fn df_forward(phase: &Grid, m: usize, n: usize, freq_step: f64) -> Result<f64> {
    check_bin(phase, m, n)?;
    if m + 1 >= phase.bins() {
        return Err(Error::OutOfRange(
            "forward frequency difference needs m <= bins-2".into(),
        ));
    }
    Ok(princarg(phase.get(m + 1, n) - phase.get(m, n)) / freq_step)
}

pub fn df_centered(phase: &Grid, m: usize, n: usize, freq_step: f64) -> Result<f64> {
    let b = df_backward(phase, m, n, freq_step)?;
    let f = df_forward(phase, m, n, freq_step)?;
    Ok(0.5 * (b + f))
}

/// Parameters needed to turn phase differences into derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientParams {
    pub analysis_hop: usize,
    pub fft_size: usize,
    /// Analysis frequency step `b_a = L / M`.
    pub freq_step: f64,
    pub scheme: Scheme,
}

/// Phase derivative estimates for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGradient {
    pub dt: Vec<f64>,
    pub df: Vec<f64>,
}

/// Time and frequency phase derivatives over a whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub dt: Grid,
    pub df: Grid,
    pub scheme: Scheme,
}

/// Time derivative of one bin given its phase in up to three consecutive frames.
/// Missing neighbours fall back to the one-sided scheme that is available.
#[inline]
pub(crate) fn dt_from_neighbours(
    prev: Option<f64>,
    cur: f64,
    next: Option<f64>,
    bin: usize,
    scheme: Scheme,
    hop: usize,
    fft_size: usize,
) -> f64 {
    let back = prev.map(|p| heterodyned_step(cur, p, bin, hop, fft_size));
    let fwd = next.map(|q| heterodyned_step(q, cur, bin, hop, fft_size));
    match (scheme, back, fwd) {
        (Scheme::Centered, Some(b), Some(f)) => 0.5 * (b + f),
        (Scheme::Backward, Some(b), _) | (_, Some(b), None) => b,
        (_, _, Some(f)) => f,
        // Single-frame grid: only the nominal bin frequency is known.
        (_, None, None) => TAU * bin as f64 / fft_size as f64,
    }
}

/// Frequency derivatives for every bin of one frame's phase column.
pub(crate) fn df_column(phase: &[f64], freq_step: f64, scheme: Scheme, out: &mut [f64]) {
    let bins = phase.len();
    if bins < 2 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for m in 0..bins {
        let back = (m > 0).then(|| princarg(phase[m] - phase[m - 1]) / freq_step);
        let fwd = (m + 1 < bins).then(|| princarg(phase[m + 1] - phase[m]) / freq_step);
        out[m] = match (scheme, back, fwd) {
            (Scheme::Centered, Some(b), Some(f)) => 0.5 * (b + f),
            (Scheme::Backward, Some(b), _) | (_, Some(b), None) => b,
            (_, _, Some(f)) => f,
            (_, None, None) => unreachable!("bins >= 2"),
        };
    }
}

/// Derivatives for every bin of frame `n`.
pub fn gradient_frame(phase: &Grid, n: usize, params: &GradientParams) -> Result<FrameGradient> {
    if n >= phase.frames() {
        return Err(Error::OutOfRange(format!(
            "frame {n} outside grid with {} frames",
            phase.frames()
        )));
    }
    if params.freq_step.is_nan() || params.freq_step <= 0.0 || params.analysis_hop == 0 {
        return Err(Error::Parameter(
            "hop and frequency step must be positive".into(),
        ));
    }
    let cur = phase.frame(n);
    let prev = (n > 0).then(|| phase.frame(n - 1));
    let next = (n + 1 < phase.frames()).then(|| phase.frame(n + 1));
    let dt = (0..phase.bins())
        .map(|m| {
            dt_from_neighbours(
                prev.map(|p| p[m]),
                cur[m],
                next.map(|q| q[m]),
                m,
                params.scheme,
                params.analysis_hop,
                params.fft_size,
            )
        })
        .collect();
    let mut df = vec![0.0; phase.bins()];
    df_column(cur, params.freq_step, params.scheme, &mut df);
    Ok(FrameGradient { dt, df })
}

/// Derivatives for every frame.
pub fn gradient_field(phase: &Grid, params: &GradientParams) -> Result<GradientField> {
    let mut dt = Grid::zeros(phase.bins(), phase.frames());
    let mut df = Grid::zeros(phase.bins(), phase.frames());
    for n in 0..phase.frames() {
        let g = gradient_frame(phase, n, params)?;
        dt.frame_mut(n).copy_from_slice(&g.dt);
        df.frame_mut(n).copy_from_slice(&g.df);
    }
    Ok(GradientField {
        dt,
        df,
        scheme: params.scheme,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::{analyze, AnalysisConfig, Signal};
    use proptest::prelude::*;

    #[test]
    fn princarg_examples() {
        assert_eq!(princarg(0.0), 0.0);
        assert!(princarg(TAU).abs() < 1e-15);
        assert!((princarg(3.5 * PI) + 0.5 * PI).abs() < 1e-12);
        assert_eq!(princarg(PI), PI);
        assert_eq!(princarg(-PI), PI);
        assert!((princarg(3.0 * PI) - PI).abs() < 1e-12);
        assert!(princarg(3.0 * PI) > -PI);
    }

    proptest! {
        #[test]
        fn princarg_range_and_periodicity(x in -1.0e4f64..1.0e4, k in -50i32..50) {
            let p = princarg(x);
            prop_assert!(p > -PI && p <= PI);
            prop_assert_eq!(princarg(p), p);
            let shifted = princarg(x + TAU * f64::from(k));
            prop_assert!(princarg(shifted - p).abs() < 1e-9);
        }

        #[test]
        fn centered_is_mean_of_one_sided(seed in 0u64..1000) {
            let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * TAU
            };
            let data: Vec<f64> = (0..5 * 4).map(|_| next()).collect();
            let g = Grid::from_vec(5, 4, data).unwrap();
            for m in 1..4 {
                for n in 1..3 {
                    let b = dt_backward(&g, m, n, 3, 8).unwrap();
                    let f = dt_forward(&g, m, n, 3, 8).unwrap();
                    prop_assert_eq!(dt_centered(&g, m, n, 3, 8).unwrap(), 0.5 * (b + f));
                    prop_assert_eq!(dt_forward(&g, m, n, 3, 8).unwrap(),
                                    dt_backward(&g, m, n + 1, 3, 8).unwrap());
                    let fb = df_backward(&g, m, n, 2.5).unwrap();
                    let ff = df_forward(&g, m, n, 2.5).unwrap();
                    prop_assert_eq!(df_centered(&g, m, n, 2.5).unwrap(), 0.5 * (fb + ff));
                }
            }
        }
    }

    #[test]
    fn constant_phase_grid() {
        let g = Grid::from_vec(4, 3, vec![0.7; 12]).unwrap();
        assert_eq!(dt_backward(&g, 0, 1, 4, 16).unwrap(), 0.0);
        assert_eq!(dt_forward(&g, 0, 1, 4, 16).unwrap(), 0.0);
        // m = 1: nominal 2pi/16 per sample, wrapped deviation -2pi*4/16 per hop.
        let want = TAU / 16.0 + princarg(-TAU * 4.0 / 16.0) / 4.0;
        assert!((dt_forward(&g, 1, 1, 4, 16).unwrap() - want).abs() < 1e-15);
        for m in 0..4 {
            for n in 0..3 {
                let params = GradientParams {
                    analysis_hop: 4,
                    fft_size: 16,
                    freq_step: 1.0,
                    scheme: Scheme::Centered,
                };
                assert_eq!(gradient_frame(&g, n, &params).unwrap().df[m], 0.0);
            }
        }
    }

    #[test]
    fn linear_phase_gives_slope() {
        // Phase advancing 0.3 rad/sample at bin 2 with hop 5.
        let hop = 5;
        let data: Vec<f64> = (0..4)
            .flat_map(|n| {
                (0..3).map(move |m| {
                    if m == 2 {
                        princarg(0.3 * (n * hop) as f64)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        let g = Grid::from_vec(3, 4, data).unwrap();
        for n in 1..3 {
            assert!((dt_centered(&g, 2, n, hop, 32).unwrap() - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_is_reported() {
        let g = Grid::zeros(4, 3);
        assert!(matches!(
            dt_backward(&g, 0, 0, 1, 8),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            dt_forward(&g, 0, 2, 1, 8),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            df_backward(&g, 0, 1, 1.0),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            df_forward(&g, 3, 1, 1.0),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            dt_centered(&g, 9, 1, 1, 8),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn edges_fall_back_to_one_sided() {
        let data: Vec<f64> = (0..12).map(|i| (i as f64 * 0.77).sin() * 3.0).collect();
        let g = Grid::from_vec(4, 3, data).unwrap();
        let params = GradientParams {
            analysis_hop: 2,
            fft_size: 6,
            freq_step: 1.5,
            scheme: Scheme::Centered,
        };
        let first = gradient_frame(&g, 0, &params).unwrap();
        let last = gradient_frame(&g, 2, &params).unwrap();
        for m in 0..4 {
            assert_eq!(first.dt[m], dt_forward(&g, m, 0, 2, 6).unwrap());
            assert_eq!(last.dt[m], dt_backward(&g, m, 2, 2, 6).unwrap());
        }
        assert_eq!(first.df[0], df_forward(&g, 0, 0, 1.5).unwrap());
        assert_eq!(first.df[3], df_backward(&g, 3, 0, 1.5).unwrap());
        assert_eq!(first.df[1], df_centered(&g, 1, 0, 1.5).unwrap());
    }

    fn exact_bin_sinusoid() -> (Grid, usize, usize, usize) {
        let (m, w, hop, bin) = (1024usize, 512usize, 128usize, 40usize);
        let fs = 8000.0;
        let f0 = bin as f64 * fs / m as f64;
        let x: Vec<f64> = (0..8000)
            .map(|i| (TAU * f0 * i as f64 / fs + 0.4).cos())
            .collect();
        let cfg = AnalysisConfig::hann(w, m, hop, hop).unwrap();
        let frames = analyze(&Signal::new(x, 8000).unwrap(), &cfg).unwrap();
        (frames.phase(), bin, hop, m)
    }

    #[test]
    fn exact_bin_sinusoid_ground_truth() {
        let (phase, bin, hop, m) = exact_bin_sinusoid();
        let b_a = 8000.0 / m as f64;
        let want = TAU * bin as f64 / m as f64;
        for n in 6..phase.frames() - 6 {
            assert!((dt_centered(&phase, bin, n, hop, m).unwrap() - want).abs() < 1e-9);
            assert!((dt_backward(&phase, bin, n, hop, m).unwrap() - want).abs() < 1e-9);
            // Leakage from the negative-frequency image limits the peak bin.
            assert!(df_centered(&phase, bin, n, b_a).unwrap().abs() < 1e-5);
            assert!(df_centered(&phase, bin + 1, n, b_a).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn impulse_df_is_group_delay() {
        // Impulse d samples after a frame centre: phase -2 pi m d / M, so
        // df * b_a = -2 pi d / M in every bin.
        let (m, w, hop, d) = (256usize, 128usize, 32usize, 9isize);
        let cfg = AnalysisConfig::hann(w, m, hop, hop).unwrap();
        let mut x = vec![0.0; 1000];
        let frame = 10;
        let centre = ((frame + 1) * hop) as isize - (w / 2) as isize;
        x[(centre + d) as usize] = 1.0;
        let frames = analyze(&Signal::new(x, 1000).unwrap(), &cfg).unwrap();
        let b_a = 1000.0 / m as f64;
        let params = GradientParams {
            analysis_hop: hop,
            fft_size: m,
            freq_step: b_a,
            scheme: Scheme::Centered,
        };
        let g = gradient_frame(&frames.phase(), frame, &params).unwrap();
        let want = -TAU * d as f64 / m as f64 / b_a;
        for v in g.df {
            assert!((v - want).abs() < 1e-10);
        }
    }

    /// Linear chirp sampled exactly; the analytic instantaneous frequency
    /// at the frame centre is the reference.
    fn chirp_dt_errors(hop: usize) -> (f64, f64, f64) {
        let (m, w) = (2048usize, 1024usize);
        let fs = 16_000.0;
        let len = 32_000usize;
        let (f0, f1) = (500.0, 3500.0);
        let rate = (f1 - f0) / (len as f64 / fs);
        let x: Vec<f64> = (0..len)
            .map(|i| {
                let t = i as f64 / fs;
                (TAU * (f0 * t + 0.5 * rate * t * t)).sin()
            })
            .collect();
        let cfg = AnalysisConfig::hann(w, m, hop, hop).unwrap();
        let frames = analyze(&Signal::new(x, 16_000).unwrap(), &cfg).unwrap();
        let phase = frames.phase();
        let mag = frames.magnitude();
        let (mut eb, mut ef, mut ec) = (0.0f64, 0.0f64, 0.0f64);
        for n in 0..frames.frame_count() {
            let c = frames.frame_center(n);
            if c < w as isize || c + w as isize >= len as isize {
                continue;
            }
            let t = c as f64 / fs;
            let truth = TAU * (f0 + rate * t) / fs;
            let peak = (0..mag.bins())
                .max_by(|&a, &b| mag.get(a, n).total_cmp(&mag.get(b, n)))
                .unwrap();
            eb = eb.max((dt_backward(&phase, peak, n, hop, m).unwrap() - truth).abs());
            ef = ef.max((dt_forward(&phase, peak, n, hop, m).unwrap() - truth).abs());
            ec = ec.max((dt_centered(&phase, peak, n, hop, m).unwrap() - truth).abs());
        }
        (eb, ef, ec)
    }

    #[test]
    fn centered_beats_one_sided_on_chirp() {
        let (eb, ef, ec) = chirp_dt_errors(256);
        assert!(ec < eb && ec < ef, "back {eb} fwd {ef} cent {ec}");
    }

    #[test]
    fn denser_analysis_improves_chirp_estimate() {
        let (coarse, _, _) = chirp_dt_errors(256);
        let (fine, _, _) = chirp_dt_errors(128);
        assert!(fine < coarse, "a=128 {fine} vs a=256 {coarse}");
    }
}
