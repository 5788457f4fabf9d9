//! Acceptance checks, one function per criterion.
//!
//! Every check computes its verdict from measurements made here (FFT of the
//! output, direct inspection of traces and grids, byte comparison of files)
//! rather than from values reported by the code under test.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use gradvoc_core::{
    analyze, classical_full, crest_factor, df_centered, dt_centered, gradient_frame,
    measure_peak_frequency, pghi_full, princarg, stretch, synthesize, Algorithm, AnalysisConfig,
    Direction, FrameInput, GradientField, GradientParams, Grid, IntegrationParams, Kind, PghiState,
    PropagationTrace, Rule, Scheme, Signal, StretchParams, TestSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::commands::run;
use crate::error::{CliError, CliResult};

const FS: u32 = 44_100;
const WINDOW: usize = 4092;
const FFT: usize = 8192;
const HOP: usize = 1024;

/// Result of one criterion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

type Check = fn(&Path) -> CliResult<(bool, String)>;

pub const CRITERIA: [(u8, &str, Check); 9] = [
    (1, "perfect-reconstruction", perfect_reconstruction),
    (2, "princarg", princarg_suite),
    (3, "sinusoid-stretch", sinusoid_stretch),
    (4, "gradient-ground-truth", gradient_ground_truth),
    (5, "propagation-traces", propagation_traces),
    (6, "impulse-crest-factor", impulse_crest_factor),
    (7, "classical-equivalence", classical_equivalence),
    (8, "cli-determinism", cli_determinism),
    (9, "performance", performance),
];

pub fn run_one(id: u8, work_dir: &Path) -> Option<Outcome> {
    let &(id, name, check) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = match check(work_dir) {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(Outcome {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    })
}

pub fn run_all(work_dir: &Path) -> Vec<Outcome> {
    CRITERIA
        .iter()
        .filter_map(|c| run_one(c.0, work_dir))
        .collect()
}

/// Uniquely named directory under the system temp dir, removed on drop.
#[derive(Debug)]
pub struct ScratchDir(PathBuf);

impl ScratchDir {
    pub fn new(tag: &str) -> CliResult<Self> {
        static COUNTER: AtomicUsize = AtomicUsize::new(0);
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        let path = std::env::temp_dir().join(format!("gradvoc-{tag}-{}-{n}", std::process::id()));
        fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self(path))
    }

    pub fn path(&self) -> &Path {
        &self.0
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn sub_dir(root: &Path, name: &str) -> CliResult<PathBuf> {
    let p = root.join(name);
    if p.exists() {
        fs::remove_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
    }
    fs::create_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
    Ok(p)
}

fn cli(args: &[&str]) -> CliResult<()> {
    let argv = std::iter::once("gradvoc").chain(args.iter().copied());
    match run(argv) {
        0 => Ok(()),
        code => Err(CliError::Acceptance(format!(
            "`gradvoc {}` exited with {code}",
            args.join(" ")
        ))),
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("scratch paths are UTF-8")
}

/// Analysis followed by synthesis with the analysis phase at equal hops.
fn perfect_reconstruction(_: &Path) -> CliResult<(bool, String)> {
    let start = Instant::now();
    let cfg = AnalysisConfig::hann(WINDOW, FFT, HOP, HOP)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let len = rng.gen_range(2 * FS as usize..=5 * FS as usize);
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sig = Signal::new(x, FS)?;
        let frames = analyze(&sig, &cfg)?;
        let y = synthesize(&frames, &frames.magnitude(), &frames.phase(), &cfg)?;
        if y.len() != sig.len() {
            return Ok((false, format!("length {} != {}", y.len(), sig.len())));
        }
        let (num, den) = sig
            .samples()
            .iter()
            .zip(y.samples())
            .fold((0.0, 0.0), |(n, d), (a, b)| {
                (n + (a - b) * (a - b), d + a * a)
            });
        worst = worst.max((num / den).sqrt());
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-10 && secs < 10.0,
        format!(
            "max relative L2 error {worst:.2e} over 10 signals, {secs:.2} s (limits 1e-10, 10 s)"
        ),
    ))
}

/// Circular distance on the unit circle.
fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn princarg_suite(_: &Path) -> CliResult<(bool, String)> {
    let start = Instant::now();
    let n = 100_000;
    let span = 40.0 * PI;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut failures = Vec::new();
    for i in 0..=n {
        let x = -span / 2.0 + span * i as f64 / n as f64;
        let y = princarg(x);
        if !(y > -PI && y <= PI) {
            failures.push(format!("range at {x}"));
        }
        if princarg(y) != y {
            failures.push(format!("idempotence at {x}"));
        }
        // Independent reduction via floor.
        let r = x - TAU * ((x + PI) / TAU).floor();
        if circ_dist(y, r) > 1e-12 * (1.0 + x.abs()) {
            failures.push(format!("reference mismatch at {x}"));
        }
        let k = rng.gen_range(-1000i32..=1000);
        let shifted = x + TAU * f64::from(k);
        if circ_dist(princarg(shifted), y) > 1e-12 * (1.0 + shifted.abs()) {
            failures.push(format!("periodicity at {x} + 2pi*{k}"));
        }
    }
    if princarg(PI) != PI || princarg(-PI) != PI {
        failures.push("tie rule: +-pi must map to +pi".into());
    }
    if princarg(0.0) != 0.0 || princarg(TAU) != 0.0 {
        failures.push("multiples of 2pi must map to 0".into());
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = failures.is_empty() && secs < 1.0;
    let detail = match failures.first() {
        None => format!("{} grid points with random 2pi offsets, {secs:.3} s", n + 1),
        Some(f) => format!("{} failures, first: {f}", failures.len()),
    };
    Ok((ok, detail))
}

fn blackman_harris(n: usize) -> Vec<f64> {
    let a = [0.35875, 0.48829, 0.14128, 0.01168];
    (0..n)
        .map(|i| {
            let t = TAU * i as f64 / n as f64;
            a[0] - a[1] * t.cos() + a[2] * (2.0 * t).cos() - a[3] * (3.0 * t).cos()
        })
        .collect()
}

/// Worst ratio in dB, over interior blocks, of the energy more than
/// `guard_bins` bins (of width `fs / FFT`) away from the spectral peak to
/// the energy within them. Blocks are `4 * FFT` long with a Blackman-Harris
/// window, so the measurement window's own main lobe spans one such bin.
fn out_of_band_db(y: &[f64], guard_bins: usize) -> f64 {
    let zoom = 4;
    let n = zoom * FFT;
    let guard = (zoom * guard_bins) as isize;
    let w = blackman_harris(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let margin = 2 * FFT;
    let mut worst = f64::NEG_INFINITY;
    let mut start = margin;
    while start + n + margin <= y.len() {
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|i| Complex::new(y[start + i] * w[i], 0.0))
            .collect();
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect();
        let peak = (0..power.len())
            .max_by(|&a, &b| power[a].total_cmp(&power[b]))
            .expect("non-empty spectrum") as isize;
        let (mut inside, mut outside) = (0.0, 0.0);
        for (k, p) in power.iter().enumerate() {
            if (k as isize - peak).abs() <= guard {
                inside += p;
            } else {
                outside += p;
            }
        }
        worst = worst.max(10.0 * (outside / inside).log10());
        start += n / 2;
    }
    worst
}

fn sinusoid_stretch(_: &Path) -> CliResult<(bool, String)> {
    let x = TestSpec::new(Kind::sinusoid(440.0), 4.0, FS).generate()?;
    let bin_hz = f64::from(FS) / FFT as f64;
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [1.5, 2.0] {
        let p = StretchParams::with_defaults(alpha, x.len())?;
        let y = stretch(&x, &p, Algorithm::Pghi)?;
        let want = p.effective_alpha() * x.len() as f64;
        let dur_err = (y.len() as f64 - want).abs();
        let f = measure_peak_frequency(&y, 2 * FFT..y.len() - 2 * FFT)?;
        let leak = out_of_band_db(y.samples(), 3);
        let pass = dur_err <= WINDOW as f64 && (f - 440.0).abs() <= bin_hz && leak <= -40.0;
        ok &= pass;
        parts.push(format!(
            "alpha {alpha}: length off by {dur_err:.1}, peak {f:.3} Hz, out-of-band {leak:.1} dB"
        ));
    }
    Ok((
        ok,
        parts.join("; ") + " (limits 4092 samples, 5.38 Hz, -40 dB)",
    ))
}

fn gradient_ground_truth(_: &Path) -> CliResult<(bool, String)> {
    let cfg = AnalysisConfig::hann(WINDOW, FFT, HOP, HOP)?;

    let m0 = 82usize;
    let f0 = m0 as f64 * f64::from(FS) / FFT as f64;
    let sine = TestSpec::new(
        Kind::Sinusoid {
            freq: f0,
            amplitude: 1.0,
            phase: 0.3,
        },
        3.0,
        FS,
    )
    .generate()?;
    let frames = analyze(&sine, &cfg)?;
    let phase = frames.phase();
    let b_a = sine.len() as f64 / FFT as f64;
    let omega = TAU * m0 as f64 / FFT as f64;
    // Frames whose window lies entirely inside the signal.
    let first = WINDOW.div_ceil(HOP);
    let last = phase.frames() - first;
    let (mut dt_err, mut df_max) = (0.0f64, 0.0f64);
    for n in first..last {
        dt_err = dt_err.max((dt_centered(&phase, m0, n, HOP, FFT)? - omega).abs());
        df_max = df_max.max(df_centered(&phase, m0, n, b_a)?.abs());
    }

    // Impulse `d` samples after the centre of frame `n0`.
    let (n0, d) = (40usize, 300usize);
    let centre = (n0 + 1) * HOP - WINDOW / 2;
    let len = 2 * FS as usize;
    let mut x = vec![0.0; len];
    x[centre + d] = 1.0;
    let imp = Signal::new(x, FS)?;
    let frames = analyze(&imp, &cfg)?;
    let (mag, phase) = (frames.magnitude(), frames.phase());
    let b_a = len as f64 / FFT as f64;
    let max = mag.frame(n0).iter().fold(0.0f64, |a, &v| a.max(v));
    let params = GradientParams {
        analysis_hop: HOP,
        fft_size: FFT,
        freq_step: b_a,
        scheme: Scheme::Centered,
    };
    let column = gradient_frame(&phase, n0, &params)?.df;
    let df: Vec<f64> = (0..mag.bins())
        .filter(|&m| mag.get(m, n0) > 1e-6 * max)
        .map(|m| column[m])
        .collect();
    let mean = df.iter().sum::<f64>() / df.len() as f64;
    let std = (df.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / df.len() as f64).sqrt();
    let rel = std / mean.abs();
    // A delay of d samples is a phase slope of -2 pi d / M per bin.
    let expected = -TAU * d as f64 / (FFT as f64 * b_a);

    let ok = dt_err < 1e-6 && df_max < 1e-3 && rel < 0.05;
    Ok((
        ok,
        format!(
            "sinusoid |dt err| {dt_err:.2e}, |df| {df_max:.2e}; impulse df std/|mean| {rel:.2e} over {} bins, mean {mean:.4e} (analytic {expected:.4e})",
            df.len()
        ),
    ))
}

fn two_column_trace(prev: &[f64], cur: &[f64]) -> CliResult<PropagationTrace> {
    let bins = prev.len();
    let mut state = PghiState::new(
        vec![0.0; bins],
        vec![0.0; bins],
        prev.to_vec(),
        IntegrationParams {
            synthesis_hop: 1.0,
            synthesis_freq_step: 1.0,
            tol: 0.2,
            seed: 0,
        },
    )?;
    let mut trace = PropagationTrace::default();
    state.integrate_frame(
        FrameInput {
            magnitude: cur,
            dt: &vec![0.0; bins],
            df: &vec![0.0; bins],
        },
        Some(&mut trace),
    )?;
    Ok(trace)
}

/// Name, previous and current column, expected steps.
type Layout<'a> = (
    &'a str,
    &'a [f64],
    &'a [f64],
    Vec<(usize, usize, Direction)>,
);

fn propagation_traces(_: &Path) -> CliResult<(bool, String)> {
    use Direction::{FreqDown as D, FreqUp as U, Time as T};
    let sinusoid = [1.0, 3.0, 8.0, 10.0, 8.0, 3.0, 1.0];
    let chirp_prev = [3.0, 8.0, 10.0, 8.0, 3.0, 1.0, 1.0];
    let two = [5.0, 10.0, 5.0, 1.0, 4.0, 8.0, 4.0];
    let onset: Vec<_> = std::iter::once((0, 0, T))
        .chain((0..6).map(|m| (m, m + 1, U)))
        .collect();
    let cases: [Layout; 5] = [
        (
            "a",
            &sinusoid,
            &sinusoid,
            vec![(3, 3, T), (3, 4, U), (3, 2, D), (2, 1, D), (4, 5, U)],
        ),
        (
            "b",
            &chirp_prev,
            &sinusoid,
            vec![(2, 2, T), (1, 1, T), (3, 3, T), (3, 4, U), (4, 5, U)],
        ),
        (
            "c",
            &two,
            &two,
            vec![
                (1, 1, T),
                (1, 2, U),
                (1, 0, D),
                (5, 5, T),
                (5, 6, U),
                (5, 4, D),
            ],
        ),
        ("d", &[3.0; 7], &[8.0; 7], onset),
        (
            "e",
            &[8.0; 7],
            &[3.0; 7],
            (0..7).map(|m| (m, m, T)).collect(),
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, prev, cur, want) in cases {
        let trace = two_column_trace(prev, cur)?;
        let got: Vec<_> = trace
            .steps
            .iter()
            .map(|s| (s.source_bin, s.target_bin, s.direction))
            .collect();
        let t = trace.count(T);
        let f = trace.count(U) + trace.count(D);
        let pass = got == want;
        ok &= pass;
        parts.push(format!(
            "{name}: {t}T+{f}F{}",
            if pass { "" } else { " (mismatch)" }
        ));
    }
    Ok((ok, parts.join(", ")))
}

fn impulse_crest_factor(_: &Path) -> CliResult<(bool, String)> {
    let position = 1.0;
    let x = TestSpec::new(Kind::Impulse { position }, 2.0, FS).generate()?;
    let p = StretchParams::with_defaults(2.0, x.len())?;
    let centre = (p.effective_alpha() * position * f64::from(FS)).round() as usize;
    let region = centre - WINDOW..centre + WINDOW;
    let pghi = crest_factor(&stretch(&x, &p, Algorithm::Pghi)?, region.clone())?;
    let classical = crest_factor(&stretch(&x, &p, Algorithm::ClassicalTrap)?, region)?;
    let ratio = pghi / classical;
    Ok((
        ratio >= 1.5,
        format!("crest factor pghi {pghi:.2}, classical-trap {classical:.2}, ratio {ratio:.3} (limit 1.5)"),
    ))
}

fn classical_equivalence(_: &Path) -> CliResult<(bool, String)> {
    let (bins, frames) = (257usize, 24usize);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    // Each frame sits strictly below the previous one: max of frame n is at
    // most 1.55 * 0.5^(n-1), min of frame n-1 at least 2 * 0.5^(n-1).
    let mut mag = Vec::with_capacity(bins * frames);
    for n in 0..frames {
        for _ in 0..bins {
            mag.push((2.0 + 1.1 * rng.gen::<f64>()) * 0.5f64.powi(n as i32));
        }
    }
    let mag = Grid::from_vec(bins, frames, mag)?;
    let dt = Grid::from_vec(
        bins,
        frames,
        (0..bins * frames).map(|_| rng.gen_range(-PI..PI)).collect(),
    )?;
    let field = GradientField {
        dt,
        df: Grid::zeros(bins, frames),
        scheme: Scheme::Centered,
    };
    let first: Vec<f64> = (0..bins).map(|_| rng.gen_range(-PI..PI)).collect();
    let a_s = 1024.0;
    let pghi = pghi_full(
        &mag,
        &first,
        &field,
        IntegrationParams {
            synthesis_hop: a_s,
            synthesis_freq_step: 3.7,
            tol: 1e-6,
            seed: 9,
        },
        None,
    )?;
    let trap = classical_full(&first, &field, a_s, Rule::Trapezoidal)?;
    let differing = pghi
        .as_slice()
        .iter()
        .zip(trap.as_slice())
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count();
    Ok((
        differing == 0,
        format!("{differing} of {} phases differ bitwise", bins * frames),
    ))
}

fn files_in(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

fn cli_determinism(work: &Path) -> CliResult<(bool, String)> {
    let root = sub_dir(work, "determinism")?;
    let input = root.join("in.wav");
    cli(&["generate", "fig1", "--duration", "1.5", path_str(&input)])?;
    let mut runs = Vec::new();
    for r in ["run1", "run2"] {
        let dir = sub_dir(&root, r)?;
        let out = dir.join("out.wav");
        cli(&[
            "stretch",
            "--alpha",
            "1.5",
            "--seed",
            "3",
            "--emit",
            "spec,dt,df,trace",
            path_str(&input),
            path_str(&out),
        ])?;
        runs.push(dir);
    }
    let (a, b) = (files_in(&runs[0])?, files_in(&runs[1])?);
    let names = |v: &[PathBuf]| {
        v.iter()
            .map(|p| p.file_name().map(|s| s.to_owned()))
            .collect::<Vec<_>>()
    };
    if names(&a) != names(&b) || a.len() != 5 {
        return Ok((
            false,
            format!("file sets differ: {} vs {}", a.len(), b.len()),
        ));
    }
    let mut differing = Vec::new();
    for (x, y) in a.iter().zip(&b) {
        let bx = fs::read(x).map_err(|e| CliError::io(x, e))?;
        let by = fs::read(y).map_err(|e| CliError::io(y, e))?;
        if bx != by {
            differing.push(
                x.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
            );
        }
    }
    Ok((
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} files byte-identical across two runs", a.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    ))
}

fn performance(work: &Path) -> CliResult<(bool, String)> {
    let root = sub_dir(work, "performance")?;
    let input = root.join("in.wav");
    let output = root.join("out.wav");
    cli(&["generate", "fig1", "--duration", "10", path_str(&input)])?;
    let start = Instant::now();
    cli(&[
        "stretch",
        "--alpha",
        "2",
        path_str(&input),
        path_str(&output),
    ])?;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        secs < 2.0,
        format!("10 s mono at alpha 2 in {secs:.2} s (limit 2 s)"),
    ))
}
