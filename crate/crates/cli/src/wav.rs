//! RIFF/WAVE input and output through `hound`.
//!
//! Supported encodings are 16- and 24-bit integer PCM and 32-bit float.
//! Integer samples map to `[-1, 1)` by dividing by `2^(bits-1)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use gradvoc_core::Signal;
use hound::{SampleFormat as HoundFormat, WavReader, WavSpec, WavWriter};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Pcm24,
    Float32,
}

impl BitDepth {
    fn spec(self, channels: u16, sample_rate: u32) -> WavSpec {
        let (bits_per_sample, sample_format) = match self {
            BitDepth::Pcm16 => (16, HoundFormat::Int),
            BitDepth::Pcm24 => (24, HoundFormat::Int),
            BitDepth::Float32 => (32, HoundFormat::Float),
        };
        WavSpec {
            channels,
            sample_rate,
            bits_per_sample,
            sample_format,
        }
    }

    fn full_scale(self) -> f64 {
        match self {
            BitDepth::Pcm16 => 32_768.0,
            BitDepth::Pcm24 => 8_388_608.0,
            BitDepth::Float32 => 1.0,
        }
    }
}

impl fmt::Display for BitDepth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BitDepth::Pcm16 => "16",
            BitDepth::Pcm24 => "24",
            BitDepth::Float32 => "32f",
        })
    }
}

impl FromStr for BitDepth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "16" => Ok(BitDepth::Pcm16),
            "24" => Ok(BitDepth::Pcm24),
            "32f" | "32" | "float" => Ok(BitDepth::Float32),
            _ => Err(format!("unsupported bit depth '{s}' (use 16, 24 or 32f)")),
        }
    }
}

/// Deinterleaved audio; every channel has the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    pub bit_depth: BitDepth,
    pub channels: Vec<Vec<f64>>,
}

impl Audio {
    pub fn mono(signal: &Signal, bit_depth: BitDepth) -> Self {
        Self {
            sample_rate: signal.sample_rate(),
            bit_depth,
            channels: vec![signal.samples().to_vec()],
        }
    }

    /// Samples per channel.
    pub fn frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn channel(&self, index: usize) -> gradvoc_core::Result<Signal> {
        Signal::new(self.channels[index].clone(), self.sample_rate)
    }
}

fn format_error(path: &Path, err: hound::Error) -> CliError {
    match err {
        hound::Error::IoError(e) => CliError::io(path, e),
        other => CliError::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> CliResult<Audio> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| format_error(path, e))?;
    let spec = reader.spec();
    let bit_depth = match (spec.sample_format, spec.bits_per_sample) {
        (HoundFormat::Int, 16) => BitDepth::Pcm16,
        (HoundFormat::Int, 24) => BitDepth::Pcm24,
        (HoundFormat::Float, 32) => BitDepth::Float32,
        (fmt, bits) => {
            return Err(CliError::Format {
                path: path.to_path_buf(),
                message: format!("unsupported encoding: {bits}-bit {fmt:?}"),
            })
        }
    };
    let n_channels = usize::from(spec.channels);
    if n_channels == 0 {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            message: "zero channels".into(),
        });
    }
    let interleaved: Vec<f64> = match bit_depth {
        BitDepth::Float32 => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        _ => {
            let scale = bit_depth.full_scale();
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
        }
    }
    .map_err(|e| format_error(path, e))?;

    let frames = interleaved.len() / n_channels;
    let mut channels = vec![Vec::with_capacity(frames); n_channels];
    for frame in interleaved.chunks_exact(n_channels) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    Ok(Audio {
        sample_rate: spec.sample_rate,
        bit_depth,
        channels,
    })
}

/// Writes `audio` with the given encoding; integer formats are rounded and
/// clipped to the representable range.
pub fn write_wav(audio: &Audio, path: impl AsRef<Path>, bit_depth: BitDepth) -> CliResult<()> {
    let path = path.as_ref();
    let n_channels = u16::try_from(audio.channels.len())
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage("audio must have 1 to 65535 channels".into()))?;
    if audio.channels.iter().any(|c| c.len() != audio.frames()) {
        return Err(CliError::Usage("channels differ in length".into()));
    }
    let spec = bit_depth.spec(n_channels, audio.sample_rate);
    let mut writer = WavWriter::create(path, spec).map_err(|e| format_error(path, e))?;
    let scale = bit_depth.full_scale();
    for i in 0..audio.frames() {
        for ch in &audio.channels {
            let v = ch[i];
            let res = match bit_depth {
                BitDepth::Float32 => writer.write_sample(v as f32),
                _ => writer.write_sample((v * scale).round().clamp(-scale, scale - 1.0) as i32),
            };
            res.map_err(|e| format_error(path, e))?;
        }
    }
    writer.finalize().map_err(|e| format_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_depth_names_round_trip() {
        for b in [BitDepth::Pcm16, BitDepth::Pcm24, BitDepth::Float32] {
            assert_eq!(b.to_string().parse::<BitDepth>().unwrap(), b);
        }
        assert!("8".parse::<BitDepth>().is_err());
    }

    #[test]
    fn clipping_saturates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.wav");
        let audio = Audio {
            sample_rate: 8000,
            bit_depth: BitDepth::Pcm16,
            channels: vec![vec![2.0, -2.0, 1.0, -1.0]],
        };
        write_wav(&audio, &path, BitDepth::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(
            back.channels[0],
            vec![32_767.0 / 32_768.0, -1.0, 32_767.0 / 32_768.0, -1.0]
        );
    }
}
