use std::cell::Cell;
use std::path::Path;

use derev_core::config::{RunConfig, UpdateOrder};
use derev_core::nn::{ArchConfig, DiscriminatorConfig, Enhancer, EnhancerCache, LstmpConfig, Residual, SeqBatch};
use derev_core::numeric::{gradient_check, param_hash, Parameter, Parameterized, Real, Tensor};
use derev_core::reverb::{build_dataset, CorpusConfig, T60Mix};
use derev_core::train::{
    mse_loss, train, FeatureCorpus, GanState, GanTrainerConfig, LrSchedule, RawCorpus, TrainLog, UttBatch,
    CHECKPOINT_FILE, LOG_FILE, STATUS_FILE,
};
use derev_core::verify::{FD_EPSILON, MAX_REL_ERROR, PROBES};
use derev_core::{Error, ErrorCategory};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IN_DIM: usize = 6;
const OUT_DIM: usize = 4;

fn random<F: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<F> {
    Tensor::from_vec(
        &[rows, cols],
        (0..rows * cols)
            .map(|_| F::from_f64(rng.random_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

fn random_batch<F: Real>(id: &str, lengths: &[usize], seed: u64) -> UttBatch<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Tensor<F>> = lengths.iter().map(|&t| random(t, IN_DIM, &mut rng)).collect();
    let ys: Vec<Tensor<F>> = lengths.iter().map(|&t| random(t, OUT_DIM, &mut rng)).collect();
    let input = SeqBatch::from_sequences(&xs.iter().collect::<Vec<_>>()).unwrap();
    let target = SeqBatch::from_sequences(&ys.iter().collect::<Vec<_>>()).unwrap();
    UttBatch::new(id, input, target).unwrap()
}

fn tiny_generator<F: Real>(seed: u64) -> Enhancer<F> {
    let arch = ArchConfig::Lstm(LstmpConfig {
        input_dim: IN_DIM,
        output_dim: OUT_DIM,
        layers: 2,
        cells: 5,
        proj: 4,
        residual: Residual::None,
    });
    Enhancer::new(&arch, seed).unwrap()
}

fn gan_config(conditional: bool) -> GanTrainerConfig {
    GanTrainerConfig {
        lambda: 2.0,
        lr_g: 1e-3,
        lr_d: 1e-3,
        g_steps: 2,
        d_steps: 1,
        same_minibatch: true,
        conditional_d: conditional,
        noise_sigma0: 0.3,
        batch: 2,
        order: UpdateOrder::DFirst,
        epochs: 1,
        final_ratio: 1e-5,
        grad_clip: Some(5.0),
        disc: DiscriminatorConfig {
            feature_dim: OUT_DIM,
            condition_dim: if conditional { IN_DIM } else { 0 },
            layers: 2,
            cells: 5,
            proj: 3,
        },
        seed: 7,
    }
}

fn gan_state<F: Real>(cfg: GanTrainerConfig, iterations: usize) -> GanState<F> {
    GanState::new(tiny_generator(3), cfg, iterations).unwrap()
}

#[test]
fn two_generator_updates_and_one_discriminator_update_per_iteration() {
    let mut state = gan_state::<f32>(gan_config(false), 5);
    let draws = Cell::new(0u64);
    for i in 0..5 {
        let rec = state
            .iterate(1, || {
                draws.set(draws.get() + 1);
                Ok(random_batch("b", &[7, 5], draws.get()))
            })
            .unwrap();
        assert_eq!((rec.g_updates, rec.d_updates), (2, 1));
        assert_eq!(rec.step, i);
        assert!(rec.d_loss.is_some_and(f64::is_finite));
    }
    assert_eq!(state.opt_g.steps(), 10);
    assert_eq!(state.opt_d.steps(), 5);
    assert_eq!(draws.get(), 5, "one batch per iteration in same-minibatch mode");
}

#[test]
fn different_batch_mode_draws_before_every_update() {
    let mut cfg = gan_config(false);
    cfg.same_minibatch = false;
    let mut state = gan_state::<f32>(cfg, 2);
    let draws = Cell::new(0u64);
    let rec = state
        .iterate(1, || {
            draws.set(draws.get() + 1);
            Ok(random_batch(&format!("b{}", draws.get()), &[6, 4], draws.get()))
        })
        .unwrap();
    assert_eq!(draws.get(), 3);
    assert_eq!(rec.batch_id, "b1+b2+b3");
}

#[test]
fn update_order_decides_which_generator_the_discriminator_sees() {
    for order in [UpdateOrder::DFirst, UpdateOrder::GFirst] {
        let mut cfg = gan_config(false);
        cfg.order = order;
        cfg.lr_d = 0.0;
        cfg.noise_sigma0 = 0.0;
        let mut state = gan_state::<f64>(cfg, 1);
        let batch = random_batch::<f64>("b", &[6, 4], 2);
        let before = state.d_grads(&batch, 0.0).unwrap();
        let rec = state.iterate(1, || Ok(batch.clone())).unwrap();
        let after = state.d_grads(&batch, 0.0).unwrap();
        assert_ne!(before, after);
        let want = match order {
            UpdateOrder::DFirst => before,
            UpdateOrder::GFirst => after,
        };
        assert_eq!(rec.d_loss, Some(want), "{order}");
    }
}

#[test]
fn zero_discriminator_rate_leaves_discriminator_bit_identical() {
    let mut cfg = gan_config(false);
    cfg.lr_d = 0.0;
    let mut state = gan_state::<f32>(cfg, 4);
    let d0 = param_hash(&state.d.params());
    let g0 = param_hash(&state.g.params());
    for i in 0..4 {
        state.iterate(1, || Ok(random_batch("b", &[6, 3], i))).unwrap();
    }
    assert_eq!(param_hash(&state.d.params()), d0);
    assert_ne!(param_hash(&state.g.params()), g0);
    assert_eq!(state.opt_d.steps(), 4);
}

#[test]
fn discriminator_pass_leaves_generator_untouched_and_vice_versa() {
    let mut state = gan_state::<f64>(gan_config(true), 3);
    let batch = random_batch::<f64>("b", &[6, 4, 2], 9);
    state.g.zero_grads();
    let g_values = param_hash(&state.g.params());
    state.d_grads(&batch, 0.1).unwrap();
    assert_eq!(param_hash(&state.g.params()), g_values);
    assert!(state.g.params().iter().all(|p| p.grad.data().iter().all(|&v| v == 0.0)));
    assert!(state.d.params().iter().any(|p| p.grad.data().iter().any(|&v| v != 0.0)));

    state.g_grads(&batch, 0.1).unwrap();
    assert!(state.d.params().iter().all(|p| p.grad.data().iter().all(|&v| v == 0.0)));
    assert!(state.g.params().iter().any(|p| p.grad.data().iter().any(|&v| v != 0.0)));
}

#[test]
fn instance_noise_anneals_linearly_to_zero() {
    let mut state = gan_state::<f32>(gan_config(false), 4);
    let mut sigmas = Vec::new();
    for i in 0..4 {
        let rec = state.iterate(1, || Ok(random_batch("b", &[5, 5], i))).unwrap();
        sigmas.push(rec.noise_sigma.unwrap());
    }
    for (i, s) in sigmas.iter().enumerate() {
        assert!((s - 0.3 * (1.0 - i as f64 / 4.0)).abs() < 1e-12, "{sigmas:?}");
    }
    assert_eq!(state.noise_sigma(), 0.0);
}

#[test]
fn non_finite_loss_names_the_batch() {
    let mut state = gan_state::<f32>(gan_config(false), 1);
    let mut batch = random_batch::<f32>("poisoned", &[5, 5], 1);
    batch.utterances = vec!["utt-a".into(), "utt-b".into()];
    batch.target.data.data_mut()[3] = f32::NAN;
    let err = state.iterate(1, || Ok(batch.clone())).unwrap_err();
    match &err {
        Error::NonFiniteLoss { batch_id, .. } => {
            assert!(
                batch_id.contains("poisoned") && batch_id.contains("utt-b"),
                "{batch_id}"
            );
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert_eq!(err.category(), ErrorCategory::Divergence);
}

/// Presents one player of a GAN state to the gradient checker.
struct Player<'a> {
    state: &'a mut GanState<f64>,
    generator: bool,
}

impl Parameterized<f64> for Player<'_> {
    fn params(&self) -> Vec<&Parameter<f64>> {
        if self.generator {
            self.state.g.params()
        } else {
            self.state.d.params()
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        if self.generator {
            self.state.g.params_mut()
        } else {
            self.state.d.params_mut()
        }
    }
}

#[test]
fn adversarial_gradients_match_finite_differences() {
    for conditional in [false, true] {
        let mut state = gan_state::<f64>(gan_config(conditional), 1);
        let batch = random_batch::<f64>("b", &[5, 3], 4);
        let mut g = Player {
            state: &mut state,
            generator: true,
        };
        let report = gradient_check(
            &mut g,
            |p: &mut Player| {
                p.state
                    .g_grads(&batch, 0.0)
                    .map(|(l, _): (_, EnhancerCache<f64>)| l.total)
            },
            PROBES,
            FD_EPSILON,
            1,
        )
        .unwrap();
        assert!(report.max_rel_error < MAX_REL_ERROR, "generator: {report:?}");

        let mut d = Player {
            state: &mut state,
            generator: false,
        };
        let report = gradient_check(
            &mut d,
            |p: &mut Player| p.state.d_grads(&batch, 0.0),
            PROBES,
            FD_EPSILON,
            2,
        )
        .unwrap();
        assert!(report.max_rel_error < MAX_REL_ERROR, "discriminator: {report:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masked_rows_never_change_the_error(
        rows in 1usize..8,
        cols in 1usize..5,
        pad in 1usize..8,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Tensor<f64> = random(rows, cols, &mut rng);
        let t: Tensor<f64> = random(rows, cols, &mut rng);
        let (base, dbase) = mse_loss(&p, &t, None).unwrap();
        let junk_p: Tensor<f64> = random(pad, cols, &mut rng);
        let junk_t: Tensor<f64> = random(pad, cols, &mut rng);
        let stack = |a: &Tensor<f64>, b: &Tensor<f64>| {
            let mut v = a.data().to_vec();
            v.extend_from_slice(b.data());
            Tensor::from_vec(&[rows + pad, cols], v).unwrap()
        };
        let mask: Vec<bool> = (0..rows + pad).map(|r| r < rows).collect();
        let (padded, dpad) = mse_loss(&stack(&p, &junk_p), &stack(&t, &junk_t), Some(&mask)).unwrap();
        prop_assert!((base - padded).abs() <= 1e-12 * base.max(1.0));
        prop_assert_eq!(&dpad.data()[..rows * cols], dbase.data());
        prop_assert!(dpad.data()[rows * cols..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn learning_rate_decays_monotonically_between_its_endpoints(
        lr in 1e-6f64..1.0,
        total in 1usize..5000,
        a in 0usize..6000,
        b in 0usize..6000,
    ) {
        let s = LrSchedule::new(lr, total);
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(s.lr_at(hi) <= s.lr_at(lo));
        prop_assert!(s.lr_at(lo) <= lr * (1.0 + 1e-12));
        prop_assert!(s.lr_at(hi) >= lr * 1e-5 * (1.0 - 1e-9));
        prop_assert!((s.lr_at(0) - lr).abs() <= 1e-15 * lr);
    }
}

fn tiny_corpus(dir: &Path) -> RawCorpus {
    let cfg = CorpusConfig {
        train: 6,
        dev: 2,
        test: 2,
        duration_sec: 0.5,
        t60_mix: T60Mix::Range { min: 0.3, max: 0.5 },
        master_seed: 5,
    };
    RawCorpus::extract(&build_dataset(&cfg, dir).unwrap()).unwrap()
}

fn tiny_run(overrides: &[&str]) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(&[
        "epochs=2",
        "layers=2",
        "lstm.cells=8",
        "lstm.proj=6",
        "dnn.hidden_units=16",
        "gan.d_cells=6",
        "gan.d_proj=4",
        "gan.batch=3",
        "mse.batch=3",
    ])
    .unwrap();
    cfg.apply_overrides(overrides).unwrap();
    cfg
}

#[test]
fn runs_are_bit_reproducible_and_leave_their_artifacts() {
    let data = tempfile::tempdir().unwrap();
    let raw = tiny_corpus(data.path());
    for overrides in [&["trainer=mse"][..], &["trainer=gan"], &["arch=dnn", "mse.batch=64"]] {
        let cfg = tiny_run(overrides);
        let corpus = FeatureCorpus::prepare(&raw, cfg.input, cfg.target, true).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let first = train(&corpus, &cfg, Some(a.path())).unwrap();
        let second = train(&corpus, &cfg, Some(b.path())).unwrap();
        assert_eq!(
            first.log.to_jsonl().unwrap(),
            second.log.to_jsonl().unwrap(),
            "{overrides:?}"
        );
        assert_eq!(
            std::fs::read(a.path().join(CHECKPOINT_FILE)).unwrap(),
            std::fs::read(b.path().join(CHECKPOINT_FILE)).unwrap()
        );
        assert!(first.log.iterations().count() > 0);
        assert!(first.log.iterations().all(|r| r.wall_time == 0.0));
        let reloaded = TrainLog::load(&a.path().join(LOG_FILE)).unwrap();
        assert_eq!(reloaded, first.log);
        let status: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(a.path().join(STATUS_FILE)).unwrap()).unwrap();
        assert_eq!(status["status"], "ok");
    }
}

#[test]
fn adversarial_log_records_update_counts() {
    let data = tempfile::tempdir().unwrap();
    let raw = tiny_corpus(data.path());
    let cfg = tiny_run(&["trainer=gan", "gan.lambda=200"]);
    let corpus = FeatureCorpus::prepare(&raw, cfg.input, cfg.target, true).unwrap();
    let out = train(&corpus, &cfg, None).unwrap();
    let iters: Vec<_> = out.log.iterations().collect();
    assert_eq!(iters.len(), 2 * 2, "two batches of three per epoch");
    assert!(iters.iter().all(|r| r.g_updates == 2 && r.d_updates == 1));
}

#[test]
fn runaway_training_is_reported_as_divergence() {
    let data = tempfile::tempdir().unwrap();
    let raw = tiny_corpus(data.path());
    let cfg = tiny_run(&[
        "arch=dnn",
        "dnn.batch_renorm=false",
        "mse.lr=1000",
        "epochs=6",
        "patience=0",
    ]);
    let corpus = FeatureCorpus::prepare(&raw, cfg.input, cfg.target, true).unwrap();
    let out = tempfile::tempdir().unwrap();
    let err = train(&corpus, &cfg, Some(out.path())).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Divergence, "{err}");
    let status: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join(STATUS_FILE)).unwrap()).unwrap();
    assert_eq!(status["status"], "divergence");
    assert!(!out.path().join(CHECKPOINT_FILE).exists());
}

/// Mean regression error of each epoch's updates.
fn regression_curve(log: &TrainLog, epochs: usize) -> Vec<f64> {
    let mut per_epoch = vec![(0.0, 0usize); epochs];
    for r in log.iterations() {
        per_epoch[r.epoch - 1].0 += r.g_mse_loss;
        per_epoch[r.epoch - 1].1 += 1;
    }
    per_epoch.iter().map(|(s, n)| s / *n as f64).collect()
}

#[test]
fn frozen_discriminator_training_follows_the_regression_curve() {
    let data = tempfile::tempdir().unwrap();
    let raw = tiny_corpus(data.path());
    let common = [
        "epochs=8",
        "patience=8",
        "mse.lr=0.01",
        "gan.lr_g=0.01",
        "gan.lambda=200",
    ];
    let mse_cfg = tiny_run(&common);
    let gan_cfg = tiny_run(&[&common[..], &["trainer=gan", "gan.lr_d=0"]].concat());
    let corpus = FeatureCorpus::prepare(&raw, mse_cfg.input, mse_cfg.target, true).unwrap();
    let mse = regression_curve(&train(&corpus, &mse_cfg, None).unwrap().log, 8);
    let gan_run = train(&corpus, &gan_cfg, None).unwrap();
    let gan = regression_curve(&gan_run.log, 8);

    for curve in [&mse, &gan] {
        assert!(curve.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-3)), "{curve:?}");
        assert!(curve[7] < curve[0], "{curve:?}");
    }
    // Progress made by each epoch, as a fraction of the total.
    let shape = |c: &[f64]| -> Vec<f64> { c.iter().map(|v| (v - c[7]) / (c[0] - c[7])).collect() };
    for (a, b) in shape(&mse).iter().zip(shape(&gan)) {
        assert!((a - b).abs() < 0.25, "mse {mse:?}\ngan {gan:?}");
    }
    assert!(gan_run.best_dev_mse < gan_run.initial_dev_mse);
}
