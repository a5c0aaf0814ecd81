use derev_core::dsp::{CmvnStats, FeatureKind};
use derev_core::nn::{
    ArchConfig, Discriminator, DiscriminatorConfig, DnnConfig, Enhancer, LstmpConfig, LstmpNet, Mode, ModelCheckpoint,
    RcedConfig, Residual, SeqBatch,
};
use derev_core::numeric::{Parameterized, Tensor};
use derev_core::verify::gradient_suite;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec(
        &[rows, cols],
        (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .unwrap()
}

fn small_lstm(residual: Residual, input: usize) -> LstmpConfig {
    LstmpConfig {
        input_dim: input,
        output_dim: 4,
        layers: 3,
        cells: 6,
        proj: 5,
        residual,
    }
}

#[test]
fn every_layer_and_architecture_passes_gradient_check() {
    let results = gradient_suite();
    assert!(results.len() >= 15);
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn res_l_with_zero_parameters_is_identity_per_layer() {
    let mut net = LstmpNet::<f32>::new("lstm", small_lstm(Residual::Layer, 5), 1).unwrap();
    for p in net.params_mut() {
        p.value.fill(0.0);
    }
    let x = random(12, 5, 2);
    let (top, _) = net.forward_hidden(&x, 6, 2).unwrap();
    assert_eq!(top, x);
}

#[test]
fn res_i_with_zero_parameters_emits_input() {
    let mut net = LstmpNet::<f32>::new("lstm", small_lstm(Residual::Input, 5), 1).unwrap();
    for p in net.params_mut() {
        p.value.fill(0.0);
    }
    let x = random(8, 5, 3);
    let (top, _) = net.forward_hidden(&x, 8, 1).unwrap();
    assert_eq!(top, x);
}

#[test]
fn residual_width_mismatch_fails_at_construction() {
    assert!(LstmpNet::<f32>::new("lstm", small_lstm(Residual::Layer, 7), 1).is_err());
    assert!(LstmpNet::<f32>::new("lstm", small_lstm(Residual::Input, 7), 1).is_err());
    assert!(LstmpNet::<f32>::new("lstm", small_lstm(Residual::None, 7), 1).is_ok());
}

fn archs() -> Vec<ArchConfig> {
    vec![
        ArchConfig::Dnn(DnnConfig {
            input_dim: 6,
            output_dim: 4,
            hidden_units: 8,
            hidden_layers: 2,
            ..DnnConfig::default()
        }),
        ArchConfig::Rced(RcedConfig {
            input_dim: 6,
            output_dim: 4,
            channels: vec![3, 4, 3],
            widths: vec![5, 3, 5],
            ..RcedConfig::default()
        }),
        ArchConfig::Lstm(small_lstm(Residual::None, 6)),
    ]
}

#[test]
fn zero_parameters_give_zero_output() {
    for arch in archs() {
        let mut m = Enhancer::<f32>::new(&arch, 4).unwrap();
        m.zero_all();
        let y = m.enhance(&random(9, 6, 5)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0), "{}", arch.name());
    }
}

#[test]
fn one_output_frame_per_input_frame() {
    for arch in archs() {
        let m = Enhancer::<f32>::new(&arch, 4).unwrap();
        for t in [1, 2, 17] {
            let y = m.enhance(&random(t, 6, t as u64)).unwrap();
            assert_eq!(y.shape(), &[t, 4], "{}", arch.name());
        }
        let a = random(7, 6, 1);
        let b = random(3, 6, 2);
        let batch = SeqBatch::from_sequences(&[&a, &b]).unwrap();
        let (y, _) = m.forward(&batch, Mode::Eval).unwrap();
        let parts = batch.unpack(&y);
        assert_eq!(parts[0].rows(), 7);
        assert_eq!(parts[1].rows(), 3);
    }
}

#[test]
fn lstm_is_causal_and_padding_is_harmless() {
    let m = Enhancer::<f32>::new(&ArchConfig::Lstm(small_lstm(Residual::Layer, 5)), 9).unwrap();
    let x = random(20, 5, 6);
    let full = m.enhance(&x).unwrap();
    let k = 8;
    let head = m.enhance(&x.gather_rows(&(0..k).collect::<Vec<_>>())).unwrap();
    assert_eq!(head.data(), &full.data()[..k * 4]);

    let other = random(20, 5, 7);
    let batch = SeqBatch::from_sequences(&[&head_input(&x, k), &other]).unwrap();
    let (y, _) = m.forward(&batch, Mode::Eval).unwrap();
    let parts = batch.unpack(&y);
    for (a, b) in parts[0].data().iter().zip(head.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

fn head_input(x: &Tensor<f32>, k: usize) -> Tensor<f32> {
    x.gather_rows(&(0..k).collect::<Vec<_>>())
}

#[test]
fn discriminator_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let feats = SeqBatch::from_sequences(&[&random(6, 40, 1), &random(4, 40, 2)]).unwrap();
    let mut d = Discriminator::<f32>::new(DiscriminatorConfig::default(), 3).unwrap();
    let (s1, _) = d.score(&feats, None, 0.0, &mut rng).unwrap();
    let (s2, _) = d.score(&feats, None, 0.0, &mut rng).unwrap();
    assert_eq!(s1, s2);
    for p in d.params_mut() {
        p.value.fill(0.0);
    }
    let (s, _) = d.score(&feats, None, 0.3, &mut rng).unwrap();
    assert!(s.iter().all(|&v| v == 0.0));

    let cd = DiscriminatorConfig {
        condition_dim: 257,
        ..DiscriminatorConfig::default()
    };
    assert_eq!(cd.input_dim(), 297);
    let d = Discriminator::<f32>::new(cd, 3).unwrap();
    assert!(d.score(&feats, None, 0.0, &mut rng).is_err());
    let cond = SeqBatch::from_sequences(&[&random(6, 257, 3), &random(4, 257, 4)]).unwrap();
    assert!(d.score(&feats, Some(&cond), 0.0, &mut rng).is_ok());
}

fn stats(kind: FeatureKind, shift: f64) -> CmvnStats {
    let d = kind.dim();
    CmvnStats {
        kind,
        mean: (0..d).map(|i| i as f64 * 0.1 + shift).collect(),
        var: (0..d).map(|i| 1.0 + i as f64 * 0.01).collect(),
        frame_count: 1234,
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for arch in [
        ArchConfig::Dnn(DnnConfig {
            hidden_units: 16,
            hidden_layers: 2,
            ..DnnConfig::default()
        }),
        ArchConfig::Rced(RcedConfig {
            channels: vec![2, 3],
            widths: vec![3, 5],
            ..RcedConfig::default()
        }),
        ArchConfig::Lstm(LstmpConfig {
            cells: 8,
            proj: 257,
            layers: 2,
            residual: Residual::Layer,
            ..LstmpConfig::default()
        }),
    ] {
        let mut model = Enhancer::<f32>::new(&arch, 5).unwrap();
        for (_, b) in model.buffers_mut() {
            b.data_mut()
                .iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v = 1.0 + i as f32 * 0.01);
        }
        let ckpt = ModelCheckpoint::new(
            model,
            FeatureKind::Lps,
            FeatureKind::Mfcc,
            Some(stats(FeatureKind::Lps, 0.3)),
            stats(FeatureKind::Mfcc, -1.0),
        )
        .unwrap();
        let path = dir.path().join(format!("{}.ckpt", arch.name()));
        ckpt.save(&path).unwrap();
        let back = ModelCheckpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        let x = random(6, 257, 8);
        assert_eq!(back.model.enhance(&x).unwrap(), ckpt.model.enhance(&x).unwrap());

        let bytes = std::fs::read(&path).unwrap();
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(ModelCheckpoint::from_bytes(&bytes[..cut]).is_err());
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ModelCheckpoint::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(ModelCheckpoint::from_bytes(&bad).is_err());
    }
}

#[test]
fn paper_size_lstm_inventory_matches_parameter_formula() {
    let cfg = LstmpConfig {
        layers: 4,
        cells: 760,
        proj: 257,
        input_dim: 257,
        output_dim: 40,
        residual: Residual::Layer,
    };
    let model = Enhancer::<f32>::new(&ArchConfig::Lstm(cfg.clone()), 1).unwrap();
    let ckpt = ModelCheckpoint::new(
        model,
        FeatureKind::Lps,
        FeatureKind::Mfcc,
        None,
        stats(FeatureKind::Mfcc, 0.0),
    )
    .unwrap();
    let per_layer = 4 * 760 * (257 + 257) + 4 * 760 + 257 * 760;
    let expected = 4 * per_layer + 257 * 40 + 40;
    let stored: usize = ckpt
        .inventory()
        .iter()
        .filter(|(n, _)| !n.starts_with("cmvn."))
        .map(|(_, s)| s.iter().product::<usize>())
        .sum();
    assert_eq!(stored, expected);
    assert_eq!(cfg.param_count(), expected);
    assert_eq!(
        ckpt.inventory().iter().filter(|(n, _)| n.starts_with("lstm.l")).count(),
        16
    );
}

#[test]
fn checkpoint_rejects_mismatched_kinds() {
    let model = Enhancer::<f32>::new(&ArchConfig::Lstm(small_lstm(Residual::None, 6)), 1).unwrap();
    assert!(ModelCheckpoint::new(
        model,
        FeatureKind::Lps,
        FeatureKind::Mfcc,
        None,
        stats(FeatureKind::Mfcc, 0.0)
    )
    .is_err());
}
