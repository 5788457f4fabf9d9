use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gradvoc_cli::{read_wav, write_wav, Audio, BitDepth};

const FS: u32 = 44_100;

fn gradvoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradvoc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tone(freq: f64, len: usize, amp: f64) -> Vec<f64> {
    (0..len)
        .map(|i| amp * (TAU * freq * i as f64 / f64::from(FS)).sin())
        .collect()
}

fn write(path: &Path, channels: Vec<Vec<f64>>, depth: BitDepth) {
    let audio = Audio {
        sample_rate: FS,
        bit_depth: depth,
        channels,
    };
    write_wav(&audio, path, depth).unwrap();
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    dot(a, b) / (dot(a, a) * dot(b, b)).sqrt()
}

#[test]
fn float_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.wav");
    // Values exactly representable in f32.
    let x: Vec<f64> = (0..500)
        .map(|i| f64::from((i as f32 * 0.37).sin()))
        .collect();
    write(&path, vec![x.clone()], BitDepth::Float32);
    let back = read_wav(&path).unwrap();
    assert_eq!(back.bit_depth, BitDepth::Float32);
    assert_eq!(back.channels, vec![x]);
}

#[test]
fn integer_round_trips_are_within_half_a_step() {
    let dir = tempfile::tempdir().unwrap();
    let x = tone(997.0, 2000, 0.9);
    for (depth, bits) in [(BitDepth::Pcm16, 16), (BitDepth::Pcm24, 24)] {
        let path = dir.path().join(format!("{bits}.wav"));
        write(&path, vec![x.clone()], depth);
        let back = read_wav(&path).unwrap();
        assert_eq!(back.bit_depth, depth);
        let step = 2f64.powi(-(bits - 1));
        let err = x
            .iter()
            .zip(&back.channels[0])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= step / 2.0 + 1e-15, "{bits}-bit error {err}");
    }
}

#[test]
fn stretch_doubles_duration() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("in.wav"), dir.path().join("out.wav"));
    let n = FS as usize;
    write(&inp, vec![tone(440.0, n, 0.5)], BitDepth::Float32);
    let o = gradvoc(&["stretch", "--alpha", "2", s(&inp), s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let y = read_wav(&out).unwrap();
    assert_eq!(y.bit_depth, BitDepth::Float32);
    assert!(y.frames().abs_diff(2 * n) <= 1);
}

#[test]
fn unit_factor_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("in.wav"), dir.path().join("out.wav"));
    let x = tone(440.0, FS as usize, 0.5);
    write(&inp, vec![x.clone()], BitDepth::Float32);
    for algorithm in ["pghi", "classical-trap"] {
        let o = gradvoc(&[
            "stretch",
            "--alpha",
            "1",
            "--algorithm",
            algorithm,
            s(&inp),
            s(&out),
        ]);
        assert!(o.status.success());
        let y = read_wav(&out).unwrap();
        assert_eq!(y.frames(), x.len());
        // Skip one window at each end.
        let r = 4096..x.len() - 4096;
        let c = correlation(&x[r.clone()], &y.channels[0][r]);
        assert!(c > 0.999, "{algorithm}: correlation {c}");
    }
}

#[test]
fn stereo_channels_match_mono_runs() {
    let dir = tempfile::tempdir().unwrap();
    let n = FS as usize / 2;
    let (l, r) = (tone(330.0, n, 0.5), tone(2100.0, n, 0.3));
    let stereo = dir.path().join("st.wav");
    write(&stereo, vec![l.clone(), r.clone()], BitDepth::Float32);
    let o = gradvoc(&[
        "stretch",
        "--alpha",
        "1.3",
        s(&stereo),
        s(&dir.path().join("st_out.wav")),
    ]);
    assert!(o.status.success());
    let st = read_wav(dir.path().join("st_out.wav")).unwrap();
    assert_eq!(st.channels.len(), 2);
    for (i, ch) in [l, r].into_iter().enumerate() {
        let mono = dir.path().join(format!("m{i}.wav"));
        let mono_out = dir.path().join(format!("m{i}_out.wav"));
        write(&mono, vec![ch], BitDepth::Float32);
        assert!(
            gradvoc(&["stretch", "--alpha", "1.3", s(&mono), s(&mono_out)])
                .status
                .success()
        );
        assert_eq!(read_wav(&mono_out).unwrap().channels[0], st.channels[i]);
    }
}

#[test]
fn print_config_reports_defaults() {
    let o = gradvoc(&["stretch", "--print-config"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["window_len"], 4092);
    assert_eq!(v["fft_size"], 8192);
    assert_eq!(v["synthesis_hop"], 1024);
    assert_eq!(v["tol"], 1e-6);
    assert_eq!(v["algorithm"], "pghi");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.wav");
    let out = dir.path().join("out.wav");
    assert_eq!(gradvoc(&["--version"]).status.code(), Some(0));
    assert_eq!(gradvoc(&["stretch"]).status.code(), Some(1));
    assert_eq!(
        gradvoc(&["stretch", "--alpha", "-1", "a.wav", "b.wav"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        gradvoc(&["stretch", "--alpha", "2", s(&missing), s(&out)])
            .status
            .code(),
        Some(2)
    );
    let junk = dir.path().join("junk.wav");
    fs::write(&junk, b"not a wave file").unwrap();
    assert_eq!(
        gradvoc(&["stretch", "--alpha", "2", s(&junk), s(&out)])
            .status
            .code(),
        Some(2)
    );
    let inp = dir.path().join("in.wav");
    write(&inp, vec![tone(440.0, 8000, 0.5)], BitDepth::Pcm16);
    // Window longer than the FFT.
    let o = gradvoc(&[
        "stretch",
        "--alpha",
        "2",
        "--window",
        "9000",
        s(&inp),
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

/// Parsed CSV grid: header fields and `rows[bin][frame]`.
struct Csv {
    header: String,
    rows: Vec<Vec<f64>>,
}

fn read_csv(path: &Path) -> Csv {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    Csv { header, rows }
}

fn argmax(v: impl Iterator<Item = f64>) -> usize {
    v.enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |a, (i, x)| if x > a.1 { (i, x) } else { a },
        )
        .0
}

#[test]
fn diag_fig1_grids() {
    let dir = tempfile::tempdir().unwrap();
    let o = gradvoc(&[
        "diag",
        "--signal",
        "fig1",
        "--emit",
        "dt,df,spec",
        "--out-dir",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grids: Vec<Csv> = ["spec", "dt", "df"]
        .iter()
        .map(|f| read_csv(&dir.path().join(format!("fig1_{f}.csv"))))
        .collect();
    let frames = (2 * FS as usize + 4092).div_ceil(1024) - 1;
    for (g, (field, unit)) in grids
        .iter()
        .zip([("spec", "dB"), ("dt", "Hz"), ("df", "ms")])
    {
        assert!(g.header.starts_with(&format!(
            "# field={field} unit={unit} bins=4097 frames={frames} sample_rate=44100 fft_size=8192 analysis_hop=1024"
        )));
        assert_eq!(g.rows.len(), 4097);
        assert!(g.rows.iter().all(|r| r.len() == frames));
    }
    let (spec, dt) = (&grids[0].rows, &grids[1].rows);

    // The 1544 Hz partial: its bin reports its frequency in steady frames.
    let bin = (1544.0 * 8192.0 / 44_100.0_f64).round() as usize;
    let mut inst: Vec<f64> = (5..frames - 5).map(|n| dt[bin][n]).collect();
    inst.sort_by(f64::total_cmp);
    assert!(
        (inst[inst.len() / 2] - 1544.0).abs() < 1.0,
        "{}",
        inst[inst.len() / 2]
    );

    // The rising chirp: its ridge above the partial moves up over time.
    let ridge = |n: usize| bin + 20 + argmax((bin + 20..4097).map(|m| spec[m][n]));
    let (early, late) = (ridge(frames / 4), ridge(3 * frames / 4));
    assert!(late > early + 200, "ridge {early} -> {late}");

    // The impulse at 1 s: the loudest high-frequency column sits on it.
    let hf = 3500;
    let n_imp = argmax((0..frames).map(|n| spec[hf][n]));
    let centre = (n_imp + 1) as f64 * 1024.0 - 2046.0;
    assert!((centre - 44_100.0).abs() <= 2046.0, "impulse frame {n_imp}");
}
