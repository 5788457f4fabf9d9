//! Diagnostic exports: spectrogram and phase-derivative grids as CSV or
//! JSON, propagation traces as JSON lines.
//!
//! Grid CSV files start with one `#` header line carrying the field name,
//! unit and dimensions; each following row is one frequency bin and each
//! column one frame.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gradvoc_core::{Analysis, Grid, PropagationTrace};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Values below this magnitude are reported at its level in dB.
const MAGNITUDE_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Spec,
    Dt,
    Df,
    Trace,
}

impl Emit {
    pub fn name(self) -> &'static str {
        match self {
            Emit::Spec => "spec",
            Emit::Dt => "dt",
            Emit::Df => "df",
            Emit::Trace => "trace",
        }
    }

    fn unit(self) -> &'static str {
        match self {
            Emit::Spec => "dB",
            Emit::Dt => "Hz",
            Emit::Df => "ms",
            Emit::Trace => "",
        }
    }
}

impl FromStr for Emit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "spec" => Ok(Emit::Spec),
            "dt" => Ok(Emit::Dt),
            "df" => Ok(Emit::Df),
            "trace" => Ok(Emit::Trace),
            other => Err(format!(
                "unknown diagnostic '{other}' (use spec, dt, df, trace)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for DiagFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(DiagFormat::Csv),
            "json" => Ok(DiagFormat::Json),
            other => Err(format!(
                "unknown diagnostic format '{other}' (use csv or json)"
            )),
        }
    }
}

/// Grid scaled to display units: magnitude in dB, time derivative as
/// instantaneous frequency in Hz, frequency derivative as the absolute
/// local group delay in ms.
pub fn scaled_field(emit: Emit, analysis: &Analysis) -> Option<Grid> {
    let frames = &analysis.frames;
    let fs = f64::from(frames.sample_rate());
    let (src, f): (&Grid, Box<dyn Fn(f64) -> f64>) = match emit {
        Emit::Spec => (
            &analysis.magnitude,
            Box::new(|s: f64| 20.0 * s.max(MAGNITUDE_FLOOR).log10()),
        ),
        Emit::Dt => (&analysis.gradients.dt, Box::new(move |d: f64| d * fs / TAU)),
        Emit::Df => {
            let len = frames.signal_len() as f64;
            (
                &analysis.gradients.df,
                Box::new(move |d: f64| 1e3 * len * d.abs() / (TAU * fs)),
            )
        }
        Emit::Trace => return None,
    };
    let data = src.as_slice().iter().map(|&v| f(v)).collect();
    Some(Grid::from_vec(src.bins(), src.frames(), data).expect("same shape as source"))
}

#[derive(Serialize)]
struct GridDoc<'a> {
    field: &'a str,
    unit: &'a str,
    bins: usize,
    frames: usize,
    sample_rate: u32,
    fft_size: usize,
    analysis_hop: usize,
    /// `data[bin][frame]`.
    data: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct TraceLine {
    frame: usize,
    source: usize,
    target: usize,
    direction: &'static str,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn json_error(path: &Path, e: serde_json::Error) -> CliError {
    CliError::io(path, e.into())
}

pub fn write_grid(
    path: &Path,
    emit: Emit,
    grid: &Grid,
    analysis: &Analysis,
    format: DiagFormat,
) -> CliResult<()> {
    let frames = &analysis.frames;
    let mut w = create(path)?;
    let row = |m: usize| (0..grid.frames()).map(move |n| grid.get(m, n));
    match format {
        DiagFormat::Csv => {
            let io = |e| CliError::io(path, e);
            writeln!(
                w,
                "# field={} unit={} bins={} frames={} sample_rate={} fft_size={} analysis_hop={} rows=bins cols=frames",
                emit.name(),
                emit.unit(),
                grid.bins(),
                grid.frames(),
                frames.sample_rate(),
                frames.fft_size(),
                frames.analysis_hop()
            )
            .map_err(io)?;
            let mut line = String::new();
            for m in 0..grid.bins() {
                line.clear();
                for (n, v) in row(m).enumerate() {
                    if n > 0 {
                        line.push(',');
                    }
                    line.push_str(&v.to_string());
                }
                writeln!(w, "{line}").map_err(io)?;
            }
        }
        DiagFormat::Json => {
            let doc = GridDoc {
                field: emit.name(),
                unit: emit.unit(),
                bins: grid.bins(),
                frames: grid.frames(),
                sample_rate: frames.sample_rate(),
                fft_size: frames.fft_size(),
                analysis_hop: frames.analysis_hop(),
                data: (0..grid.bins()).map(|m| row(m).collect()).collect(),
            };
            serde_json::to_writer(&mut w, &doc).map_err(|e| json_error(path, e))?;
            writeln!(w).map_err(|e| CliError::io(path, e))?;
        }
    }
    finish(path, w)
}

pub fn write_trace(path: &Path, trace: &PropagationTrace) -> CliResult<()> {
    let mut w = create(path)?;
    for s in &trace.steps {
        let line = TraceLine {
            frame: s.frame,
            source: s.source_bin,
            target: s.target_bin,
            direction: s.direction.name(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| json_error(path, e))?;
        writeln!(w).map_err(|e| CliError::io(path, e))?;
    }
    finish(path, w)
}

/// Writes every requested diagnostic as `<dir>/<stem>_<name>.<ext>` and
/// returns the paths in request order.
pub fn write_diagnostics(
    dir: &Path,
    stem: &str,
    emits: &[Emit],
    format: DiagFormat,
    analysis: &Analysis,
    trace: Option<&PropagationTrace>,
) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::with_capacity(emits.len());
    for &emit in emits {
        let path = match (emit, format) {
            (Emit::Trace, _) => dir.join(format!("{stem}_trace.jsonl")),
            (_, DiagFormat::Csv) => dir.join(format!("{stem}_{}.csv", emit.name())),
            (_, DiagFormat::Json) => dir.join(format!("{stem}_{}.json", emit.name())),
        };
        match scaled_field(emit, analysis) {
            Some(grid) => write_grid(&path, emit, &grid, analysis, format)?,
            None => write_trace(&path, trace.unwrap_or(&PropagationTrace::default()))?,
        }
        written.push(path);
    }
    Ok(written)
}

/// Comma-separated diagnostic selection, as given to `--emit`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmitList(pub Vec<Emit>);

impl FromStr for EmitList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_emit_list(s).map(EmitList)
    }
}

/// Parses a comma-separated `--emit` list, dropping duplicates.
pub fn parse_emit_list(s: &str) -> Result<Vec<Emit>, String> {
    let mut out: Vec<Emit> = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let e = part.parse()?;
        if !out.contains(&e) {
            out.push(e);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emit_list_parsing() {
        assert_eq!(
            parse_emit_list("spec,dt, df,dt").unwrap(),
            vec![Emit::Spec, Emit::Dt, Emit::Df]
        );
        assert!(parse_emit_list("spec,phase").is_err());
        assert!(parse_emit_list("").unwrap().is_empty());
    }
}
