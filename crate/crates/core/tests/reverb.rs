use std::fs;

use derev_core::dsp::{read_wav, Waveform};
use derev_core::reverb::{
    build_dataset, convolve_rir, generate_rir, schroeder_t60, CorpusConfig, DatasetManifest, RoomCategory, Split,
    T60Mix, MANIFEST_FILE,
};
use proptest::prelude::*;

fn small_corpus() -> CorpusConfig {
    CorpusConfig {
        train: 20,
        dev: 5,
        test: 5,
        duration_sec: 0.5,
        t60_mix: T60Mix::Range { min: 0.3, max: 0.8 },
        master_seed: 11,
    }
}

#[test]
fn dataset_partitions_and_separates_rirs() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_dataset(&small_corpus(), dir.path()).unwrap();
    assert_eq!(m.records.len(), 30);
    assert_eq!(m.count(Split::Train), 20);
    assert_eq!(m.count(Split::Dev), 5);
    assert_eq!(m.count(Split::Test), 5);
    let train = m.rir_ids(Split::Train);
    let dev = m.rir_ids(Split::Dev);
    let test = m.rir_ids(Split::Test);
    assert!(train.is_disjoint(&test));
    assert!(dev.is_disjoint(&test));
    assert!(train.is_disjoint(&dev));

    let loaded = DatasetManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded.records, m.records);
    assert!(loaded.metadata.is_some());
    for r in &loaded.records {
        assert!(loaded.rir_t60(&r.rir_id).is_some());
    }
}

#[test]
fn manifest_lines_have_exact_fields() {
    let dir = tempfile::tempdir().unwrap();
    build_dataset(&small_corpus(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    let line = text.lines().next().unwrap();
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    keys.sort();
    assert_eq!(keys, ["clean_path", "duration_sec", "reverb_path", "rir_id", "split"]);
}

#[test]
fn rebuild_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    build_dataset(&small_corpus(), a.path()).unwrap();
    build_dataset(&small_corpus(), b.path()).unwrap();
    for f in [
        MANIFEST_FILE,
        "corpus.json",
        "reverb/test-0004.wav",
        "clean/train-0019.wav",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn pairs_are_aligned_and_reverb_adds_energy() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_dataset(&small_corpus(), dir.path()).unwrap();
    for r in &m.records {
        let c = read_wav(&m.resolve(&r.clean_path)).unwrap();
        let y = read_wav(&m.resolve(&r.reverb_path)).unwrap();
        assert_eq!(c.len(), y.len());
        assert!(y.energy() >= 0.99 * c.energy(), "{}", r.reverb_path);
    }
}

#[test]
fn schroeder_t60_over_twenty_rirs() {
    for seed in 0..20u64 {
        let t60 = 0.3 + 0.05 * (seed % 10) as f64;
        let len = (t60 * 16000.0) as usize;
        let rir = generate_rir(t60, len, RoomCategory::for_t60(t60), seed).unwrap();
        let est = schroeder_t60(&rir.samples, 16000).unwrap();
        assert!((est / t60 - 1.0).abs() <= 0.2, "seed {seed}: {t60} -> {est}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn convolution_is_linear(
        x in prop::collection::vec(-1.0f64..1.0, 64..256),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        seed in 0u64..1000,
    ) {
        let y: Vec<f64> = x.iter().rev().map(|v| v * 0.5 - 0.1).collect();
        let rir = generate_rir(0.1, 800, RoomCategory::Small, seed).unwrap();
        let w = |s: Vec<f64>| Waveform::new(s, 16000);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = convolve_rir(&w(mix), &rir);
        let cx = convolve_rir(&w(x.clone()), &rir);
        let cy = convolve_rir(&w(y.clone()), &rir);
        for i in 0..x.len() {
            let rhs = a * cx.samples[i] + b * cy.samples[i];
            prop_assert!((lhs.samples[i] - rhs).abs() < 1e-6);
        }
    }
}
