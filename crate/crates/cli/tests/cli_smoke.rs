//! End-to-end command tests: train a tiny model on synthetic clips, push
//! files through every subcommand, and check the exit-code contract.

use assert_cmd::Command;
use hcodec::synth;
use hcodec::wav::write_wav;
use predicates::prelude::*;
use std::fs;
use std::path::{Path, PathBuf};
use tempfile::TempDir;

fn hcodec() -> Command {
    Command::cargo_bin("hcodec").expect("binary builds")
}

/// Writes a couple of 1-second synthetic clips and a small codec config,
/// returning (dir, config path, clip paths).
fn corpus(dynamic: bool) -> (TempDir, PathBuf, Vec<PathBuf>) {
    let dir = TempDir::new().unwrap();
    let mut clips = Vec::new();
    for (i, seed) in [11u64, 22].iter().enumerate() {
        let w = synth::speech_like(*seed, 16_000, 1.0);
        let path = dir.path().join(format!("clip{i}.wav"));
        write_wav(&w, &path).unwrap();
        clips.push(path);
    }
    let dynamic_json = if dynamic {
        r#"{"threshold": 0.6, "d_max": 4, "window": 0}"#
    } else {
        "null"
    };
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        format!(
            r#"{{
  "stft": {{"frame_length": 512, "hop_length": 256}},
  "stack_factor": 1,
  "nq_acoustic": 2,
  "nq_semantic": 2,
  "k": 16,
  "dynamic": {dynamic_json},
  "semantic_source": "proxy"
}}"#
        ),
    )
    .unwrap();
    (dir, config, clips)
}

fn train(config: &Path, clips: &[PathBuf], model_dir: &Path, seed: u64) {
    let mut cmd = hcodec();
    cmd.arg("train")
        .args(clips)
        .arg("--model-dir")
        .arg(model_dir)
        .arg("--config")
        .arg(config)
        .arg("--seed")
        .arg(seed.to_string());
    cmd.assert()
        .success()
        .stdout(predicate::str::contains("residual energy after layer 1"))
        .stdout(predicate::str::contains("model written to"));
}

/// Residual energies printed by train must be non-increasing per stream.
#[test]
fn train_writes_model_and_reports_shrinking_residuals() {
    let (dir, config, clips) = corpus(false);
    let model = dir.path().join("model");
    let mut cmd = hcodec();
    cmd.arg("train")
        .args(&clips)
        .arg("--model-dir")
        .arg(&model)
        .arg("--config")
        .arg(&config);
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "train failed: {out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    for stream in ["acoustic", "semantic"] {
        let energies: Vec<f64> = stdout
            .lines()
            .filter(|l| l.starts_with(&format!("[{stream}] residual energy")))
            .map(|l| l.rsplit(' ').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(energies.len(), 2, "expected 2 layers in: {stdout}");
        assert!(
            energies[1] <= energies[0] + 1e-12,
            "{stream} residuals grew: {energies:?}"
        );
    }
    for file in ["config.json", "acoustic.hcbk", "semantic.hcbk"] {
        assert!(model.join(file).exists(), "missing {file}");
    }
    // The resolved config is echoed for reproducibility.
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("resolved config:"), "no echo in: {stderr}");
}

#[test]
fn encode_decode_round_trip_through_files() {
    let (dir, config, clips) = corpus(false);
    let model = dir.path().join("model");
    train(&config, &clips, &model, 42);

    let out_dir = dir.path().join("tokens");
    hcodec()
        .arg("encode")
        .args(&clips)
        .arg("--model-dir")
        .arg(&model)
        .arg("--out-dir")
        .arg(&out_dir)
        .arg("--jobs")
        .arg("2")
        .assert()
        .success()
        .stdout(predicate::str::contains("fps_eff"))
        .stdout(predicate::str::contains("stft_loss"));

    let tokens: Vec<PathBuf> = (0..2).map(|i| out_dir.join(format!("clip{i}.htok"))).collect();
    for t in &tokens {
        assert!(t.exists(), "missing {}", t.display());
    }

    let wav_dir = dir.path().join("decoded");
    hcodec()
        .arg("decode")
        .args(&tokens)
        .arg("--model-dir")
        .arg(&model)
        .arg("--out-dir")
        .arg(&wav_dir)
        .assert()
        .success()
        .stdout(predicate::str::contains("16000 Hz"));
    for i in 0..2 {
        let decoded: hcodec::Waveform64 =
            hcodec::wav::read_wav(&wav_dir.join(format!("clip{i}.wav"))).unwrap();
        assert_eq!(decoded.len(), 16_000, "decoded length must match original");
    }
}

#[test]
fn decoding_with_a_different_model_exits_with_code_three() {
    let (dir, config, clips) = corpus(false);
    let model_a = dir.path().join("model-a");
    let model_b = dir.path().join("model-b");
    train(&config, &clips, &model_a, 42);
    train(&config, &clips, &model_b, 7);

    let out_dir = dir.path().join("tokens");
    hcodec()
        .arg("encode")
        .arg(&clips[0])
        .arg("--model-dir")
        .arg(&model_a)
        .arg("--out-dir")
        .arg(&out_dir)
        .assert()
        .success();

    hcodec()
        .arg("decode")
        .arg(out_dir.join("clip0.htok"))
        .arg("--model-dir")
        .arg(&model_b)
        .assert()
        .code(3)
        .stderr(predicate::str::contains("codec mismatch"));
}

#[test]
fn missing_input_exits_with_code_two() {
    let (dir, config, clips) = corpus(false);
    let model = dir.path().join("model");
    train(&config, &clips, &model, 42);
    hcodec()
        .arg("encode")
        .arg(dir.path().join("no-such.wav"))
        .arg("--model-dir")
        .arg(&model)
        .assert()
        .code(2);
}

#[test]
fn inspect_reports_token_and_codebook_headers_and_rejects_garbage() {
    let (dir, config, clips) = corpus(true);
    let model = dir.path().join("model");
    train(&config, &clips, &model, 42);
    let out_dir = dir.path().join("tokens");
    hcodec()
        .arg("encode")
        .arg(&clips[0])
        .arg("--model-dir")
        .arg(&model)
        .arg("--out-dir")
        .arg(&out_dir)
        .assert()
        .success();

    hcodec()
        .arg("inspect")
        .arg(out_dir.join("clip0.htok"))
        .arg(model.join("acoustic.hcbk"))
        .assert()
        .success()
        .stdout(predicate::str::contains("frame rate: dynamic"))
        .stdout(predicate::str::contains("K=16, d_max=4"))
        .stdout(predicate::str::contains("Acoustic stream, 2 layers"));

    let junk = dir.path().join("junk.htok");
    fs::write(&junk, b"not a real file").unwrap();
    hcodec()
        .arg("inspect")
        .arg(&junk)
        .assert()
        .code(2)
        .stderr(predicate::str::contains("not a recognized file"));
}

#[test]
fn degrade_writes_manifest_and_replays_bit_identically() {
    let (dir, _config, clips) = corpus(false);
    let out_dir = dir.path().join("degraded");
    hcodec()
        .arg("degrade")
        .args(&clips)
        .arg("--out-dir")
        .arg(&out_dir)
        .arg("--seed")
        .arg("5")
        .arg("--task")
        .arg("tse")
        .assert()
        .success()
        .stdout(predicate::str::contains("manifest written to"))
        // The extraction preset always mixes an interfering speaker.
        .stdout(predicate::str::contains("interferer"));

    let manifest = out_dir.join("manifest.csv");
    assert!(manifest.exists());
    for i in 0..2 {
        assert!(out_dir.join(format!("clip{i}.degraded.wav")).exists());
    }

    hcodec()
        .arg("degrade")
        .arg("--replay")
        .arg(&manifest)
        .arg("--out-dir")
        .arg(dir.path().join("replayed"))
        .assert()
        .success()
        .stdout(predicate::str::contains("2 replays verified"))
        .stdout(predicate::str::contains("replay bit-identical"));
}

#[test]
fn eval_emits_the_fixed_csv_header() {
    let (dir, config, clips) = corpus(false);
    let model = dir.path().join("model");
    train(&config, &clips, &model, 42);
    let csv_path = dir.path().join("report.csv");
    hcodec()
        .arg("eval")
        .args(&clips)
        .arg("--model-dir")
        .arg(&model)
        .arg("--out")
        .arg(&csv_path)
        .assert()
        .success();
    let text = fs::read_to_string(&csv_path).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "path,seconds,sample_rate,frames,fps_nominal,fps_effective,nq_total,\
         bits_per_code,bps_simple,bps_duration_aware,stft_loss,mel_loss,snr_db,si_snr_db"
            .replace(" ", "")
    );
    assert_eq!(text.lines().count(), 3, "header + one row per clip");
}

#[test]
fn modes_prints_all_seven_rows_with_reserved_ids() {
    hcodec()
        .arg("modes")
        .assert()
        .success()
        .stdout(predicate::str::contains("PAD 8192"))
        .stdout(predicate::str::contains("generation marker 8200"))
        .stdout(predicate::str::contains("SR"))
        .stdout(predicate::str::contains("rTSE"))
        .stdout(predicate::str::contains("SS"))
        .stdout(predicate::str::contains("EDIT_A"))
        .stdout(predicate::str::contains("[Caption, MixtureAudio]"));
}
