use std::path::Path;
use std::process::{Command, Output};

use mcwf_cli::dataset::{read_json, MANIFEST_FILE, MIXTURE_FILE, NOISE_FILE, SCENE_LIST, SPEECH_FILE};
use mcwf_cli::wav::{read_wav, write_wav};
use mcwf_core::metrics::{sdr, MetricReport};
use mcwf_core::scene::SceneManifest;
use mcwf_core::signal::TimeSignal;

fn mcwf(args: &[&str]) -> Output {
    mcwf_env(args, &[])
}

fn mcwf_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mcwf"));
    cmd.args(args).env_remove("MCWF_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", s(dir), "--duration", "0.5"];
    args.extend_from_slice(extra);
    ok(&mcwf(&args));
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn help_and_parse_errors_have_distinct_codes() {
    assert_eq!(mcwf(&["--help"]).status.code(), Some(0));
    assert_eq!(mcwf(&["--version"]).status.code(), Some(0));
    assert_eq!(mcwf(&[]).status.code(), Some(1));
    assert_eq!(mcwf(&["simulate"]).status.code(), Some(1));
    assert_eq!(mcwf(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn missing_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--count", "1"]);
    let input = dir.path().join("scene_0000").join(MIXTURE_FILE);
    let out = mcwf(&[
        "enhance",
        "--input",
        s(&input),
        "--out",
        s(&dir.path().join("y.wav")),
        "--checkpoint",
        s(&dir.path().join("nope.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
}

#[test]
fn gradcheck_prints_six_lines_and_fails_when_corrupted() {
    let out = mcwf(&["gradcheck"]);
    let text = ok(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6, "{text}");
    assert!(lines.iter().all(|l| l.ends_with("PASS")));
    let bad = mcwf(&["gradcheck", "--corrupt-gradient"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn zero_scenes_writes_an_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--count", "0"]);
    let names: Vec<String> = read_json(&dir.path().join(SCENE_LIST)).unwrap();
    assert!(names.is_empty());
}

#[test]
fn emitted_wavs_have_the_requested_snr() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--count", "3", "--snr-min", "-5", "--snr-max", "10"]);
    let names: Vec<String> = read_json(&dir.path().join(SCENE_LIST)).unwrap();
    assert_eq!(names.len(), 3);
    for name in names {
        let sub = dir.path().join(&name);
        let m: SceneManifest = read_json(&sub.join(MANIFEST_FILE)).unwrap();
        assert!((-5.0..=10.0).contains(&m.snr_db));
        let speech = read_wav(&sub.join(SPEECH_FILE)).unwrap();
        let noise = read_wav(&sub.join(NOISE_FILE)).unwrap();
        let mix = read_wav(&sub.join(MIXTURE_FILE)).unwrap();
        let k = m.ref_channel;
        let measured = 10.0 * (speech.energy(k) / noise.energy(k)).log10();
        assert!((measured - m.snr_db).abs() < 1e-6, "{measured} vs {}", m.snr_db);
        for (i, ((x, a), b)) in mix.samples.data().iter().zip(speech.samples.data()).zip(noise.samples.data()).enumerate() {
            assert!((x - (a + b)).abs() < 1e-6, "sample {i}");
        }
    }
}

#[test]
fn env_seed_is_overridden_by_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, args: &[&str], env: &[(&str, &str)]| {
        let out = dir.path().join(name);
        let mut all = vec!["simulate", "--out", s(&out), "--count", "1", "--duration", "0.5"];
        all.extend_from_slice(args);
        ok(&mcwf_env(&all, env));
        read(&out.join("scene_0000").join(MIXTURE_FILE))
    };
    let flag7 = run("a", &["--seed", "7"], &[]);
    let env7 = run("b", &[], &[("MCWF_SEED", "7")]);
    let env3_flag7 = run("c", &["--seed", "7"], &[("MCWF_SEED", "3")]);
    let env3 = run("d", &[], &[("MCWF_SEED", "3")]);
    assert_eq!(flag7, env7);
    assert_eq!(flag7, env3_flag7);
    assert_ne!(flag7, env3);
}

#[test]
fn identity_filter_reproduces_the_mixture() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--count", "1"]);
    let input = dir.path().join("scene_0000").join(MIXTURE_FILE);
    let target = dir.path().join("id.wav");
    ok(&mcwf(&["enhance", "--input", s(&input), "--out", s(&target), "--identity-filter"]));
    let x = read_wav(&input).unwrap();
    let y = read_wav(&target).unwrap();
    assert_eq!(x.samples.shape(), y.samples.shape());
    for (a, b) in x.samples.data().iter().zip(y.samples.data()) {
        assert!((a - b).abs() <= 1e-7 * a.abs().max(1e-3));
    }
}

#[test]
fn noiseless_oracle_mwf_is_nearly_perfect() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--count", "2", "--snr", "150"]);
    let enhanced = dir.path().join("enh");
    ok(&mcwf(&["enhance", "--scenes", s(dir.path()), "--out-dir", s(&enhanced), "--oracle"]));
    for name in ["scene_0000", "scene_0001"] {
        let clean = read_wav(&dir.path().join(name).join(SPEECH_FILE)).unwrap();
        let y = read_wav(&enhanced.join(format!("{name}.wav"))).unwrap();
        for k in 0..clean.channels() {
            let v = sdr(&clean.channel(k), &y.channel(k)).unwrap();
            assert!(v > 60.0, "{name} channel {k}: {v} dB");
        }
    }
}

#[test]
fn eval_json_means_match_the_rows() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--count", "3"]);
    let enhanced = dir.path().join("enh");
    ok(&mcwf(&["enhance", "--scenes", s(dir.path()), "--out-dir", s(&enhanced), "--oracle", "--method", "mask"]));
    let json = dir.path().join("report.json");
    let table = ok(&mcwf(&[
        "eval",
        "--scenes",
        s(dir.path()),
        "--enhanced-dir",
        s(&enhanced),
        "--label",
        "mask",
        "--json",
        s(&json),
    ]));
    assert!(table.contains("observed") && table.contains("mask"));
    let report: MetricReport = read_json(&json).unwrap();
    assert_eq!(report.rows.len(), 6);
    for mean in &report.means {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.method == mean.method).collect();
        assert_eq!(rows.len(), 3);
        let sdr_mean = rows.iter().map(|r| r.sdr_db).sum::<f64>() / 3.0;
        let cd_mean = rows.iter().map(|r| r.cd_db).sum::<f64>() / 3.0;
        assert!((sdr_mean - mean.sdr_db).abs() < 1e-12);
        assert!((cd_mean - mean.cd_db).abs() < 1e-12);
    }
    assert!(report.mean("mask").unwrap().sdr_db > report.mean("observed").unwrap().sdr_db);
}

#[test]
fn eval_lists_must_pair_up() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--count", "1"]);
    let sub = dir.path().join("scene_0000");
    let out = mcwf(&[
        "eval",
        "--clean",
        s(&sub.join(SPEECH_FILE)),
        "--enhanced",
        s(&sub.join(MIXTURE_FILE)),
        s(&sub.join(MIXTURE_FILE)),
        "--observed",
        s(&sub.join(MIXTURE_FILE)),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    simulate(&scenes, &["--count", "2"]);
    let common = ["--train-dir", s(&scenes), "--hidden", "8", "--segment-frames", "16", "--batch-size", "2"];
    let full = dir.path().join("full");
    let mut args = vec!["train", "--out", s(&full), "--epochs", "4"];
    args.extend_from_slice(&common);
    ok(&mcwf(&args));
    let part = dir.path().join("part");
    let mut args = vec!["train", "--out", s(&part), "--epochs", "2"];
    args.extend_from_slice(&common);
    ok(&mcwf(&args));
    let last = part.join("checkpoint_last.json");
    let mut args = vec!["train", "--out", s(&part), "--epochs", "4", "--resume", s(&last)];
    args.extend_from_slice(&common);
    ok(&mcwf(&args));
    for f in ["train_log.jsonl", "checkpoint_last.json", "checkpoint_best.json"] {
        assert_eq!(read(&full.join(f)), read(&part.join(f)), "{f}");
    }
    let log = String::from_utf8(read(&full.join("train_log.jsonl"))).unwrap();
    assert_eq!(log.lines().count(), 8);

    let mut args = vec!["train", "--out", s(&part), "--epochs", "5", "--lr", "0.5", "--resume", s(&last)];
    args.extend_from_slice(&common);
    assert_eq!(mcwf(&args).status.code(), Some(1));
}

#[test]
fn saved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    simulate(&scenes, &["--count", "2"]);
    let first = dir.path().join("first");
    ok(&mcwf(&[
        "train",
        "--train-dir",
        s(&scenes),
        "--out",
        s(&first),
        "--epochs",
        "2",
        "--hidden",
        "8",
        "--segment-frames",
        "16",
        "--seed",
        "5",
    ]));
    let cfg = first.join("config.json");
    let second = dir.path().join("second");
    ok(&mcwf(&["train", "--config", s(&cfg), "--out", s(&second)]));
    assert_eq!(read(&first.join("checkpoint_last.json")), read(&second.join("checkpoint_last.json")));
}

#[test]
fn rate_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let sig = TimeSignal::from_channels(&[vec![0.1; 4000], vec![0.2; 4000]], 8000).unwrap();
    write_wav(&path, &sig).unwrap();
    let out = mcwf(&["enhance", "--input", s(&path), "--out", s(&dir.path().join("y.wav")), "--identity-filter"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("8000"));
}

#[test]
fn oracle_without_manifest_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let sig = TimeSignal::from_channels(&[vec![0.1; 16000], vec![0.2; 16000]], 16000).unwrap();
    write_wav(&path, &sig).unwrap();
    let out = mcwf(&["enhance", "--input", s(&path), "--out", s(&dir.path().join("y.wav")), "--oracle"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(MANIFEST_FILE));
}

#[test]
fn projection_of_a_wav_is_already_consistent() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--count", "1"]);
    let input = dir.path().join("scene_0000").join(MIXTURE_FILE);
    let json = dir.path().join("p.json");
    let wav = dir.path().join("p.wav");
    let text = ok(&mcwf(&["project", "--input", s(&input), "--out", s(&json), "--wav-out", s(&wav)]));
    let report: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert!(report["inconsistency_before"].as_f64().unwrap() < 1e-9);
    assert!(report["inconsistency_after"].as_f64().unwrap() < 1e-9);
    let again = ok(&mcwf(&["project", "--input", s(&json)]));
    let report: serde_json::Value = serde_json::from_str(again.trim()).unwrap();
    assert!(report["inconsistency_before"].as_f64().unwrap() < 1e-9);
    assert_eq!(read_wav(&wav).unwrap().samples.shape(), read_wav(&input).unwrap().samples.shape());
}
