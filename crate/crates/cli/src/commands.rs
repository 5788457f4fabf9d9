use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gradvoc_core::signals::sine_chirp_impulse;
use gradvoc_core::vocoder::{
    DEFAULT_FFT_SIZE, DEFAULT_SYNTHESIS_HOP, DEFAULT_TOL, DEFAULT_WINDOW_LEN,
};
use gradvoc_core::{
    analyze_signal, stretch_detailed, stretch_pipelined, Algorithm, Analysis, Kind,
    PropagationTrace, Scheme, Signal, StretchParams, TestSpec,
};
use serde_json::json;

use crate::acceptance;
use crate::diag::{write_diagnostics, DiagFormat, Emit, EmitList};
use crate::error::{CliError, CliResult};
use crate::wav::{read_wav, write_wav, Audio, BitDepth};

#[derive(Debug, Parser)]
#[command(name = "gradvoc", version, about = "Phase vocoder time stretching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time-stretch a WAV file.
    Stretch(StretchArgs),
    /// Export spectrogram and phase-derivative grids.
    Diag(DiagArgs),
    /// Write a synthetic test signal as WAV.
    Generate(GenerateArgs),
    /// Run the acceptance checks and report one line per criterion.
    Acceptance(AcceptanceArgs),
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("expected a positive number, got '{s}'")),
    }
}

#[derive(Debug, Clone, Args)]
struct EngineArgs {
    /// Hann window length in samples.
    #[arg(long, default_value_t = DEFAULT_WINDOW_LEN)]
    window: usize,
    /// FFT size (number of frequency channels).
    #[arg(long, default_value_t = DEFAULT_FFT_SIZE)]
    fft_size: usize,
    /// Synthesis hop in samples; the analysis hop is derived from it.
    #[arg(long, default_value_t = DEFAULT_SYNTHESIS_HOP)]
    hop: usize,
    /// Relative magnitude tolerance for phase integration.
    #[arg(long, default_value_t = DEFAULT_TOL, value_parser = positive)]
    tol: f64,
    /// pghi, classical-trap or classical-rect.
    #[arg(long, default_value = "pghi")]
    algorithm: Algorithm,
    /// Seed for the phases of negligible coefficients.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Finite-difference scheme: centered, backward or forward.
    #[arg(long, default_value = "centered")]
    scheme: Scheme,
}

impl EngineArgs {
    fn params(&self, alpha: f64, len: usize) -> CliResult<StretchParams> {
        Ok(
            StretchParams::new(alpha, self.hop, self.fft_size, self.window, self.tol, len)?
                .with_seed(self.seed)
                .with_scheme(self.scheme),
        )
    }
}

#[derive(Debug, Args)]
struct StretchArgs {
    /// Stretch factor; values above 1 lengthen the signal.
    #[arg(long, value_parser = positive, required_unless_present = "print_config")]
    alpha: Option<f64>,
    #[command(flatten)]
    engine: EngineArgs,
    /// Output encoding: 16, 24 or 32f. Defaults to the input encoding.
    #[arg(long)]
    bit_depth: Option<BitDepth>,
    /// Rescale the output if its peak exceeds full scale.
    #[arg(long)]
    clip_guard: bool,
    /// Diagnostics to write, comma separated: spec, dt, df, trace.
    #[arg(long, default_value = "")]
    emit: EmitList,
    /// Directory for diagnostics; defaults to the output's directory.
    #[arg(long)]
    diag_dir: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    diag_format: DiagFormat,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(required_unless_present = "print_config")]
    input: Option<PathBuf>,
    #[arg(required_unless_present = "print_config")]
    output: Option<PathBuf>,
}

/// Resolved settings of a `stretch` run.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub window_len: usize,
    pub fft_size: usize,
    pub synthesis_hop: usize,
    pub tol: f64,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub scheme: Scheme,
    pub bit_depth: Option<BitDepth>,
    pub clip_guard: bool,
    pub emit: Vec<Emit>,
    pub diag_dir: Option<PathBuf>,
    pub diag_format: DiagFormat,
}

impl From<&StretchArgs> for CliConfig {
    fn from(a: &StretchArgs) -> Self {
        Self {
            input: a.input.clone(),
            output: a.output.clone(),
            alpha: a.alpha,
            window_len: a.engine.window,
            fft_size: a.engine.fft_size,
            synthesis_hop: a.engine.hop,
            tol: a.engine.tol,
            algorithm: a.engine.algorithm,
            seed: a.engine.seed,
            scheme: a.engine.scheme,
            bit_depth: a.bit_depth,
            clip_guard: a.clip_guard,
            emit: a.emit.0.clone(),
            diag_dir: a.diag_dir.clone(),
            diag_format: a.diag_format,
        }
    }
}

impl CliConfig {
    pub fn to_json(&self) -> serde_json::Value {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        json!({
            "input": path(&self.input),
            "output": path(&self.output),
            "alpha": self.alpha,
            "window_len": self.window_len,
            "fft_size": self.fft_size,
            "synthesis_hop": self.synthesis_hop,
            "tol": self.tol,
            "algorithm": self.algorithm.name(),
            "seed": self.seed,
            "scheme": self.scheme.name(),
            "bit_depth": self.bit_depth.map(|b| b.to_string()),
            "clip_guard": self.clip_guard,
            "emit": self.emit,
            "diag_dir": path(&self.diag_dir),
            "diag_format": self.diag_format,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BuiltinSignal {
    /// Sinusoid, exponential chirp and impulse.
    Fig1,
}

#[derive(Debug, Args)]
struct DiagArgs {
    /// Built-in test signal to analyse.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    signal: Option<BuiltinSignal>,
    /// WAV file to analyse (first channel).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Duration of the built-in signal in seconds.
    #[arg(long, default_value_t = 2.0, value_parser = positive)]
    duration: f64,
    #[arg(long, default_value_t = 44_100)]
    sample_rate: u32,
    /// Stretch factor used to derive the analysis hop.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    alpha: f64,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, default_value = "spec,dt,df")]
    emit: EmitList,
    #[arg(long, default_value = "csv")]
    format: DiagFormat,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenKind {
    Sinusoid,
    LinearChirp,
    ExpChirp,
    Impulse,
    ImpulseTrain,
    Fig1,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: GenKind,
    output: PathBuf,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    duration: f64,
    #[arg(long, default_value_t = 44_100)]
    sample_rate: u32,
    /// Sinusoid frequency in Hz.
    #[arg(long, default_value_t = 440.0)]
    freq: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Sinusoid phase in radians.
    #[arg(long, default_value_t = 0.0)]
    phase: f64,
    #[arg(long, default_value_t = 100.0)]
    f_start: f64,
    #[arg(long, default_value_t = 5000.0)]
    f_end: f64,
    /// Impulse position, or first impulse of a train, in seconds.
    #[arg(long, default_value_t = 0.0)]
    position: f64,
    /// Impulse train period in seconds.
    #[arg(long, default_value_t = 0.5, value_parser = positive)]
    period: f64,
    #[arg(long, default_value = "32f")]
    bit_depth: BitDepth,
}

#[derive(Debug, Args)]
struct AcceptanceArgs {
    /// Scratch directory for the file-based checks.
    #[arg(long)]
    work_dir: Option<PathBuf>,
}

/// Runs the command line `argv` (program name first) and returns the exit
/// status: 0 success, 1 usage, 2 I/O, 3 numeric or configuration failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gradvoc: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Stretch(a) => stretch_cmd(&a),
        Command::Diag(a) => diag_cmd(&a),
        Command::Generate(a) => generate_cmd(&a),
        Command::Acceptance(a) => acceptance_cmd(&a),
    }
}

struct ChannelResult {
    signal: Signal,
    analysis: Option<Analysis>,
    trace: Option<PropagationTrace>,
}

fn process_channel(
    signal: &Signal,
    params: &StretchParams,
    algorithm: Algorithm,
    emit: &[Emit],
) -> CliResult<ChannelResult> {
    if emit.is_empty() {
        return Ok(ChannelResult {
            signal: stretch_pipelined(signal, params, algorithm)?,
            analysis: None,
            trace: None,
        });
    }
    let out = stretch_detailed(signal, params, algorithm, emit.contains(&Emit::Trace))?;
    Ok(ChannelResult {
        signal: out.signal,
        analysis: Some(out.analysis),
        trace: out.trace,
    })
}

/// One peak gain for all channels so the balance is kept.
fn guard_clipping(channels: &mut [Vec<f64>]) {
    let peak = channels
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if peak > 1.0 {
        channels.iter_mut().flatten().for_each(|v| *v /= peak);
    }
}

fn stretch_cmd(args: &StretchArgs) -> CliResult<()> {
    let config = CliConfig::from(args);
    if args.print_config {
        println!(
            "{}",
            serde_json::to_string_pretty(&config.to_json()).expect("config serialises")
        );
        return Ok(());
    }
    let (Some(input), Some(output), Some(alpha)) = (&config.input, &config.output, config.alpha)
    else {
        return Err(CliError::Usage(
            "stretch needs --alpha, INPUT and OUTPUT".into(),
        ));
    };
    let audio = read_wav(input)?;
    if audio.frames() == 0 {
        return Err(CliError::Format {
            path: input.clone(),
            message: "no samples".into(),
        });
    }
    let params = args.engine.params(alpha, audio.frames())?;
    let signals = (0..audio.channels.len())
        .map(|c| audio.channel(c))
        .collect::<Result<Vec<_>, _>>()?;

    let results: Vec<CliResult<ChannelResult>> = thread::scope(|scope| {
        let handles: Vec<_> = signals
            .iter()
            .map(|s| scope.spawn(|| process_channel(s, &params, config.algorithm, &config.emit)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("channel worker panicked"))
            .collect()
    });
    let results = results.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mut channels: Vec<Vec<f64>> = results
        .iter()
        .map(|r| r.signal.samples().to_vec())
        .collect();
    if config.clip_guard {
        guard_clipping(&mut channels);
    }
    let bit_depth = config.bit_depth.unwrap_or(audio.bit_depth);
    let out_audio = Audio {
        sample_rate: audio.sample_rate,
        bit_depth,
        channels,
    };
    write_wav(&out_audio, output, bit_depth)?;

    if !config.emit.is_empty() {
        let dir = config
            .diag_dir
            .clone()
            .unwrap_or_else(|| parent_dir(output));
        let stem = file_stem(output);
        let multi = results.len() > 1;
        for (c, r) in results.iter().enumerate() {
            let stem = if multi {
                format!("{stem}_ch{c}")
            } else {
                stem.clone()
            };
            let analysis = r
                .analysis
                .as_ref()
                .expect("analysis kept when diagnostics are requested");
            write_diagnostics(
                &dir,
                &stem,
                &config.emit,
                config.diag_format,
                analysis,
                r.trace.as_ref(),
            )?;
        }
    }
    println!(
        "{} -> {}: {} channel(s), {} -> {} samples, alpha {:.6}, analysis hop {}",
        input.display(),
        output.display(),
        out_audio.channels.len(),
        audio.frames(),
        out_audio.frames(),
        params.effective_alpha(),
        params.analysis_hop
    );
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into())
}

fn diag_cmd(args: &DiagArgs) -> CliResult<()> {
    let (signal, stem) = match (&args.signal, &args.input) {
        (Some(BuiltinSignal::Fig1), _) => (
            sine_chirp_impulse(args.sample_rate, args.duration).generate()?,
            "fig1".to_string(),
        ),
        (None, Some(path)) => (read_wav(path)?.channel(0)?, file_stem(path)),
        (None, None) => return Err(CliError::Usage("diag needs --signal or --input".into())),
    };
    let params = args.engine.params(args.alpha, signal.len())?;
    let (analysis, trace) = if args.emit.0.contains(&Emit::Trace) {
        let out = stretch_detailed(&signal, &params, args.engine.algorithm, true)?;
        (out.analysis, out.trace)
    } else {
        (analyze_signal(&signal, &params)?, None)
    };
    for path in write_diagnostics(
        &args.out_dir,
        &stem,
        &args.emit.0,
        args.format,
        &analysis,
        trace.as_ref(),
    )? {
        println!("{}", path.display());
    }
    Ok(())
}

fn generate_cmd(args: &GenerateArgs) -> CliResult<()> {
    let kind = match args.kind {
        GenKind::Sinusoid => Kind::Sinusoid {
            freq: args.freq,
            amplitude: args.amplitude,
            phase: args.phase,
        },
        GenKind::LinearChirp => Kind::LinearChirp {
            f_start: args.f_start,
            f_end: args.f_end,
        },
        GenKind::ExpChirp => Kind::ExponentialChirp {
            f_start: args.f_start,
            f_end: args.f_end,
        },
        GenKind::Impulse => Kind::Impulse {
            position: args.position,
        },
        GenKind::ImpulseTrain => Kind::ImpulseTrain {
            start: args.position,
            period: args.period,
        },
        GenKind::Fig1 => sine_chirp_impulse(args.sample_rate, args.duration).kind,
    };
    let signal = TestSpec::new(kind, args.duration, args.sample_rate).generate()?;
    write_wav(
        &Audio::mono(&signal, args.bit_depth),
        &args.output,
        args.bit_depth,
    )
}

fn acceptance_cmd(args: &AcceptanceArgs) -> CliResult<()> {
    let scratch;
    let dir = match &args.work_dir {
        Some(d) => d.clone(),
        None => {
            scratch = acceptance::ScratchDir::new("cli")?;
            scratch.path().to_path_buf()
        }
    };
    let outcomes = acceptance::run_all(&dir);
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(CliError::Acceptance(format!(
            "{failed} of {} criteria failed",
            outcomes.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_defaults() {
        let cli =
            Cli::try_parse_from(["gradvoc", "stretch", "--alpha", "2", "a.wav", "b.wav"]).unwrap();
        let Command::Stretch(a) = cli.command else {
            panic!("expected stretch");
        };
        let c = CliConfig::from(&a);
        assert_eq!(
            (c.window_len, c.fft_size, c.synthesis_hop),
            (4092, 8192, 1024)
        );
        assert_eq!(c.tol, 1e-6);
        assert_eq!(c.algorithm, Algorithm::Pghi);
        assert_eq!(c.scheme, Scheme::Centered);
        assert!(c.emit.is_empty());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["gradvoc", "stretch", "a.wav", "b.wav"]), 1);
        assert_eq!(
            run(["gradvoc", "stretch", "--alpha", "-1", "a.wav", "b.wav"]),
            1
        );
        assert_eq!(
            run(["gradvoc", "stretch", "--alpha", "2", "--emit", "phase", "a", "b"]),
            1
        );
        assert_eq!(run(["gradvoc", "frobnicate"]), 1);
        assert_eq!(run(["gradvoc", "--help"]), 0);
    }

    #[test]
    fn clip_guard_uses_one_gain() {
        let mut ch = vec![vec![0.5, -2.0], vec![1.0, 0.25]];
        guard_clipping(&mut ch);
        assert_eq!(ch, vec![vec![0.25, -1.0], vec![0.5, 0.125]]);
    }
}
