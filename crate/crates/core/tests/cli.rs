use std::path::Path;
use std::process::{Command, Output};

use avse_core::cli::RunConfig;
use avse_core::data::load_wav;
use avse_core::metrics::si_sdr;
use avse_core::model::{count_parameters, ModelConfig};
use avse_core::training::TrainOptions;

fn avse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avse")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config_file(dir: &Path) -> std::path::PathBuf {
    let config = RunConfig {
        model: ModelConfig {
            frame_hw: [32, 32],
            ..ModelConfig::tiny()
        },
        training: TrainOptions::default(),
    };
    let path = dir.join("tiny.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn info_reports_the_default_total() {
    let o = avse(&["info"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let total: usize = stdout(&o)
        .lines()
        .last()
        .and_then(|l| l.strip_prefix("total parameters: "))
        .and_then(|n| n.parse().ok())
        .expect("total line");
    assert_eq!(total, count_parameters(&ModelConfig::default()));
    assert!((4_500_000..=5_700_000).contains(&total));
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        &["frobnicate"][..],
        &[][..],
        &["info", "--unknown-flag"][..],
        &["synth", "--out"][..],
        &["gradcheck", "--seed", "abc"][..],
        &["train", "--out", "x.avck"][..],
    ] {
        let o = avse(args);
        assert_eq!(code(&o), 1, "{args:?}");
        assert!(stderr(&o).contains("Usage"), "{args:?}: {}", stderr(&o));
    }
    let dir = tempfile::tempdir().unwrap();
    let o = avse(&["synth", "--out", s(dir.path()), "--duration", "0.1"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&avse(&["--help"])), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.wav");
    let o = avse(&["enhance", "--model", s(&missing), "--audio", "a.wav", "--frames", "f.avst", "--out", "o.wav"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing.wav"));

    let garbage = dir.path().join("garbage.wav");
    std::fs::write(&garbage, b"not a wav file at all").unwrap();
    let o = avse(&["evaluate", "--clean", s(&garbage), "--enhanced", s(&garbage)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let bad_config = dir.path().join("bad.json");
    std::fs::write(&bad_config, "{\"model\": {\"enc_chanels\": 3}}").unwrap();
    assert_eq!(code(&avse(&["info", "--config", s(&bad_config)])), 2);
}

#[test]
fn gradcheck_passes() {
    let o = avse(&["gradcheck", "--seed", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("max relative error: "));
}

#[test]
fn mix_hits_the_snr() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&avse(&["synth", "--out", s(&data), "--scenes", "2", "--seed", "3"])), 0);
    let out = dir.path().join("mixed.wav");
    let o = avse(&[
        "mix",
        "--target",
        s(&data.join("clean/S00001.wav")),
        "--interferer",
        s(&data.join("interferer/S00002.wav")),
        "--snr",
        "-3.5",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (target, _) = load_wav(data.join("clean/S00001.wav")).unwrap();
    let (mixed, _) = load_wav(&out).unwrap();
    let power = |x: &[f32]| x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
    let noise: Vec<f32> = mixed.data().iter().zip(target.data()).map(|(m, t)| m - t).collect();
    let snr = 10.0 * (power(target.data()) / power(&noise)).log10();
    // Quantization of the mixture moves the SNR slightly.
    assert!((snr + 3.5).abs() < 0.01, "{snr}");
}

#[test]
fn evaluate_directories_pair_by_stem() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&avse(&["synth", "--out", s(&data), "--scenes", "3", "--seed", "5"])), 0);
    std::fs::remove_file(data.join("noisy/S00002.wav")).unwrap();
    let report = dir.path().join("report.jsonl");
    let o = avse(&[
        "evaluate",
        "--clean",
        s(&data.join("clean")),
        "--enhanced",
        s(&data.join("noisy")),
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("S00002"));
    let text = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["id"], "S00001");
    assert_eq!(lines[1]["id"], "S00003");
    assert!(lines[0]["pesq"].is_null());
    assert_eq!(lines[2]["aggregate"]["count"], 2);
}

#[test]
fn trained_model_improves_on_the_noisy_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let config = tiny_config_file(dir.path());
    let ckpt = dir.path().join("model.avck");
    assert_eq!(code(&avse(&["synth", "--out", s(&data), "--scenes", "4", "--seed", "1"])), 0);
    let o = avse(&[
        "train", "--data", s(&data), "--config", s(&config), "--epochs", "120", "--seed", "0", "--out", s(&ckpt),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 120);

    let enhanced_dir = dir.path().join("enhanced");
    std::fs::create_dir(&enhanced_dir).unwrap();
    for id in ["S00001", "S00002", "S00003", "S00004"] {
        let o = avse(&[
            "enhance",
            "--model",
            s(&ckpt),
            "--audio",
            s(&data.join(format!("noisy/{id}.wav"))),
            "--frames",
            s(&data.join(format!("frames/{id}.avst"))),
            "--out",
            s(&enhanced_dir.join(format!("{id}.wav"))),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let mean_sisdr = |enhanced: &Path| {
        let o = avse(&["evaluate", "--clean", s(&data.join("clean")), "--enhanced", s(enhanced)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let last = stdout(&o).lines().last().unwrap().to_owned();
        let v: serde_json::Value = serde_json::from_str(&last).unwrap();
        v["aggregate"]["mean_sisdr_db"].as_f64().unwrap()
    };
    let (noisy, enhanced) = (mean_sisdr(&data.join("noisy")), mean_sisdr(&enhanced_dir));
    assert!(enhanced > noisy, "enhanced {enhanced} dB vs noisy {noisy} dB");

    // The file written by `enhance` is what the library computes.
    let (clean, _) = load_wav(data.join("clean/S00001.wav")).unwrap();
    let (out, _) = load_wav(enhanced_dir.join("S00001.wav")).unwrap();
    assert!(si_sdr(clean.data(), out.data()).unwrap() > -60.0);
}
