use std::path::Path;
use std::process::{Command, Output};

use derev_core::dsp::{lps, read_wav, stft, write_wav, CmvnStats, FeatureKind, FrameConfig, Waveform, SAMPLE_RATE};
use derev_core::nn::{ArchConfig, Enhancer, LstmpConfig, ModelCheckpoint, Residual};
use derev_core::reverb::pseudo_speech;
use tempfile::TempDir;

fn derev(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_derev"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn derev")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_corpus(dir: &Path) {
    let o = derev(
        dir,
        &[
            "synth",
            "--out",
            "corpus",
            "--train",
            "4",
            "--dev",
            "2",
            "--test",
            "2",
            "--duration",
            "0.5",
            "--t60-mix",
            "0.3-0.5",
            "--seed",
            "9",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

/// LPS-to-LPS model that returns its input: all weights zero, so every LSTM
/// layer emits zero, the input residual carries the features through and the
/// output layer is the identity.
fn identity_checkpoint(path: &Path, speech: &[f64]) {
    let cfg = LstmpConfig {
        input_dim: 257,
        output_dim: 257,
        layers: 1,
        cells: 4,
        proj: 257,
        residual: Residual::Input,
    };
    let mut model: Enhancer<f32> = Enhancer::new(&ArchConfig::Lstm(cfg), 1).unwrap();
    model.zero_all();
    if let Enhancer::Lstm(net) = &mut model {
        for i in 0..257 {
            net.out.w.value.row_mut(i)[i] = 1.0;
        }
    }
    let wave = Waveform::new(speech.to_vec(), SAMPLE_RATE);
    let feats = lps(&stft(&wave, &FrameConfig::default()).unwrap()).unwrap();
    let stats = CmvnStats::fit(std::iter::once(&feats)).unwrap();
    ModelCheckpoint::new(model, FeatureKind::Lps, FeatureKind::Lps, Some(stats.clone()), stats)
        .unwrap()
        .save(path)
        .unwrap();
}

#[test]
fn identity_model_reconstructs_its_input() {
    let dir = TempDir::new().unwrap();
    let speech = pseudo_speech(1.0, SAMPLE_RATE, 4).unwrap();
    write_wav(&dir.path().join("in.wav"), &speech).unwrap();
    identity_checkpoint(&dir.path().join("id.ckpt"), &speech.samples);

    let o = derev(
        dir.path(),
        &[
            "reconstruct",
            "--model",
            "id.ckpt",
            "--in",
            "in.wav",
            "--out",
            "out.wav",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = read_wav(&dir.path().join("out.wav")).unwrap();
    assert_eq!(out.len(), speech.len());

    // WAV storage is 16-bit, which bounds the achievable error well below the limit.
    let frame = FrameConfig::default().frame_len;
    let (mut num, mut den) = (0.0, 0.0);
    for i in frame..speech.len() - frame {
        num += (out.samples[i] - speech.samples[i]).powi(2);
        den += speech.samples[i].powi(2);
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 1e-3, "relative L2 error {rel}");
    assert!(dir.path().join("out.wav.provenance.json").exists());
}

#[test]
fn exit_codes_follow_error_categories() {
    let dir = TempDir::new().unwrap();
    let ok = derev(dir.path(), &["verify", "--suite", "losses"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));

    let unknown_suite = derev(dir.path(), &["verify", "--suite", "nonsense"]);
    assert_eq!(unknown_suite.status.code(), Some(2));

    small_corpus(dir.path());
    let bad_key = derev(
        dir.path(),
        &[
            "train",
            "--manifest",
            "corpus/manifest.jsonl",
            "--out",
            "run",
            "--lstm.bogus",
            "3",
        ],
    );
    assert_eq!(bad_key.status.code(), Some(2));
    let msg = stderr(&bad_key);
    assert!(msg.starts_with("error[config]: "), "{msg}");
    assert_eq!(msg.trim_end().lines().count(), 1, "{msg}");

    let missing = derev(
        dir.path(),
        &[
            "eval",
            "--model",
            "absent.ckpt",
            "--manifest",
            "corpus/manifest.jsonl",
            "--report",
            "r.csv",
        ],
    );
    assert_eq!(missing.status.code(), Some(3));
    assert!(stderr(&missing).starts_with("error[data]: "));

    let bad_flag = derev(dir.path(), &["synth", "--no-such-flag"]);
    assert_eq!(bad_flag.status.code(), Some(2));
}

#[test]
fn runaway_training_exits_with_divergence() {
    let dir = TempDir::new().unwrap();
    small_corpus(dir.path());
    let o = derev(
        dir.path(),
        &[
            "train",
            "--manifest",
            "corpus/manifest.jsonl",
            "--out",
            "run",
            "--arch",
            "dnn",
            "--epochs",
            "6",
            "--patience",
            "0",
            "--mse.lr",
            "1000",
            "--dnn.batch-renorm",
            "false",
            "--dnn.hidden-units",
            "32",
            "--layers",
            "2",
        ],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let status = std::fs::read_to_string(dir.path().join("run/status.json")).unwrap();
    assert!(status.contains("divergence"), "{status}");
    assert!(!dir.path().join("run/model.ckpt").exists());
}

#[test]
fn adversarial_training_logs_two_generator_updates_per_discriminator_update() {
    let dir = TempDir::new().unwrap();
    small_corpus(dir.path());
    let o = derev(
        dir.path(),
        &[
            "train",
            "--manifest",
            "corpus/manifest.jsonl",
            "--out",
            "run",
            "--trainer",
            "gan",
            "--epochs",
            "1",
            "--layers",
            "1",
            "--lstm.cells",
            "8",
            "--lstm.proj",
            "6",
            "--gan.lambda",
            "200",
            "--gan.batch",
            "2",
            "--gan.d-cells",
            "6",
            "--gan.d-proj",
            "4",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(dir.path().join("run/train_log.jsonl")).unwrap();
    let iters: Vec<serde_json::Value> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["type"] == "iter")
        .collect();
    assert!(!iters.is_empty());
    for it in &iters {
        assert_eq!(it["g_updates"], 2);
        assert_eq!(it["d_updates"], 1);
    }
    let config = std::fs::read_to_string(dir.path().join("run/config.txt")).unwrap();
    assert!(
        config.lines().any(|l| l.replace(' ', "") == "gan.lambda=200"),
        "{config}"
    );
}

#[test]
fn every_command_leaves_provenance() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_corpus(d);
    let prov: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("corpus/provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["command"], "synth");
    assert_eq!(prov["config"]["seed"], 9);

    let o = derev(
        d,
        &[
            "train",
            "--manifest",
            "corpus/manifest.jsonl",
            "--out",
            "run",
            "--epochs",
            "1",
            "--layers",
            "1",
            "--lstm.cells",
            "8",
            "--lstm.proj",
            "6",
            "--mse.batch",
            "2",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let prov: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/provenance.json")).unwrap()).unwrap();
    let inputs = prov["inputs"].as_array().unwrap();
    // The manifest plus a clean and a reverberant file per utterance.
    assert_eq!(inputs.len(), 1 + 2 * 8);
    assert!(inputs.iter().all(|i| i["hash"].as_str().unwrap().len() == 64));

    let o = derev(
        d,
        &[
            "eval",
            "--model",
            "run/model.ckpt",
            "--manifest",
            "corpus/manifest.jsonl",
            "--report",
            "r.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("r.csv.provenance.json").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("no enhancement"));

    let o = derev(
        d,
        &[
            "features",
            "--manifest",
            "corpus/manifest.jsonl",
            "--kind",
            "mfcc",
            "--out",
            "f",
            "--cmvn",
            "fit",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("f/provenance.json").exists());
    assert!(d.join("f/cmvn.ftrm").exists());

    let o = derev(
        d,
        &[
            "enhance",
            "--model",
            "run/model.ckpt",
            "--in",
            "corpus/reverb/test-0000.wav",
            "--out",
            "e.ftrm",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("e.ftrm.provenance.json").exists());
}
