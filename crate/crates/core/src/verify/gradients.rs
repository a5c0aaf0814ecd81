use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CheckOutcome;
use crate::error::Result;
use crate::nn::{
    Activation, Affine, ArchConfig, BatchRenorm, BrnConfig, Conv1d, Discriminator, DiscriminatorConfig, DnnConfig,
    Enhancer, LstmpConfig, LstmpLayer, Mode, RcedConfig, Residual, SeqBatch,
};
use crate::numeric::{gradient_check, GradCheckReport, Parameter, Parameterized, Tensor};

pub const PROBES: usize = 64;
pub const FD_EPSILON: f64 = 1e-4;
pub const MAX_REL_ERROR: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `sum(c * y)`, with `dy = c`.
fn linear_probe(y: &Tensor<f64>, c: &Tensor<f64>) -> f64 {
    y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
}

fn outcome(name: &str, report: Result<GradCheckReport>) -> CheckOutcome {
    match report {
        Ok(r) => CheckOutcome::at_most(
            name,
            r.max_rel_error,
            MAX_REL_ERROR,
            format!("{} probes, worst {:?}", r.probes, r.worst),
        ),
        Err(e) => CheckOutcome::failed(name, e.to_string()),
    }
}

/// Hides some parameters from the checker. A bias feeding straight into a
/// training-mode normalization has an identically zero gradient, and finite
/// differences of it only measure rounding noise.
struct Masked<M> {
    inner: M,
    skip: fn(&str) -> bool,
}

impl<M: Parameterized<f64>> Parameterized<f64> for Masked<M> {
    fn params(&self) -> Vec<&Parameter<f64>> {
        self.inner
            .params()
            .into_iter()
            .filter(|p| !(self.skip)(&p.name))
            .collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        let skip = self.skip;
        self.inner.params_mut().into_iter().filter(|p| !skip(&p.name)).collect()
    }
    fn zero_grads(&mut self) {
        self.inner.zero_grads();
    }
}

fn keep_all(_: &str) -> bool {
    false
}

fn pre_norm_bias(name: &str) -> bool {
    name.ends_with(".b") && !name.contains(".out.")
}

struct ActNet {
    a1: Affine<f64>,
    a2: Affine<f64>,
    act: Activation,
}

impl Parameterized<f64> for ActNet {
    fn params(&self) -> Vec<&Parameter<f64>> {
        let mut v = self.a1.params();
        v.extend(self.a2.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        let mut v = self.a1.params_mut();
        v.extend(self.a2.params_mut());
        v
    }
}

fn check_activation(act: Activation, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = ActNet {
        a1: Affine::new("a1", 5, 6, seed)?,
        a2: Affine::new("a2", 6, 3, seed)?,
        act,
    };
    for p in net.params_mut() {
        let r = random(p.value.shape(), &mut rng);
        p.value = r;
    }
    let x = random(&[7, 5], &mut rng);
    let c = random(&[7, 3], &mut rng);
    gradient_check(
        &mut net,
        |m: &mut ActNet| {
            let h = m.a1.forward(&x)?;
            let a = m.act.forward(&h);
            let y = m.a2.forward(&a)?;
            let da = m.a2.backward(&a, &c)?;
            let dh = m.act.backward(&a, &da);
            m.a1.backward(&x, &dh)?;
            Ok(linear_probe(&y, &c))
        },
        PROBES,
        FD_EPSILON,
        seed,
    )
}

struct ConvNet(Conv1d<f64>);

impl Parameterized<f64> for ConvNet {
    fn params(&self) -> Vec<&Parameter<f64>> {
        self.0.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        self.0.params_mut()
    }
}

fn check_conv(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = ConvNet(Conv1d::new("conv", 3, 4, 5, seed)?);
    net.0.b.value = random(&[4], &mut rng);
    let x = random(&[2, 9, 3], &mut rng);
    let c = random(&[2, 9, 4], &mut rng);
    // The input gradient is checked through a second convolution.
    let mut second = Conv1d::<f64>::new("conv2", 4, 2, 3, seed + 1)?;
    let c2 = random(&[2, 9, 2], &mut rng);
    gradient_check(
        &mut net,
        |m: &mut ConvNet| {
            let y = m.0.forward(&x)?;
            let z = second.forward(&y)?;
            let dy2 = second.backward(&y, &c2)?;
            let mut dy = c.clone();
            dy.add_assign(&dy2);
            m.0.backward(&x, &dy)?;
            Ok(linear_probe(&y, &c) + linear_probe(&z, &c2))
        },
        PROBES,
        FD_EPSILON,
        seed,
    )
}

struct BrnNet {
    pre: Affine<f64>,
    brn: BatchRenorm<f64>,
}

impl Parameterized<f64> for BrnNet {
    fn params(&self) -> Vec<&Parameter<f64>> {
        let mut v = self.pre.params();
        v.extend(self.brn.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        let mut v = self.pre.params_mut();
        v.extend(self.brn.params_mut());
        v
    }
}

/// In training mode the renormalization terms are constants of the backward
/// pass, so only the uncorrected configuration has an exact gradient.
fn check_brn(mode: Mode, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = match mode {
        Mode::Eval => BrnConfig::default(),
        Mode::Train => BrnConfig {
            r_max: 1.0,
            d_max: 0.0,
            ..BrnConfig::default()
        },
    };
    let mut net = Masked {
        inner: BrnNet {
            pre: Affine::new("pre", 4, 5, seed)?,
            brn: BatchRenorm::new("brn", 5, cfg),
        },
        skip: if mode == Mode::Train { pre_norm_bias } else { keep_all },
    };
    let inner = &mut net.inner;
    inner.pre.b.value = random(&[5], &mut rng);
    inner.brn.gamma.value = random(&[5], &mut rng);
    inner.brn.beta.value = random(&[5], &mut rng);
    inner.brn.running_mean = random(&[5], &mut rng);
    inner.brn.running_var = Tensor::from_vec(&[5], (0..5).map(|_| rng.random_range(0.5..2.0)).collect())?;
    let x = random(&[8, 4], &mut rng);
    let c = random(&[8, 5], &mut rng);
    // A quadratic term keeps the batch-mean direction observable.
    gradient_check(
        &mut net,
        |m: &mut Masked<BrnNet>| {
            let m = &mut m.inner;
            let h = m.pre.forward(&x)?;
            let (y, cache) = m.brn.forward(&h, mode)?;
            let mut dy = c.clone();
            for (d, v) in dy.data_mut().iter_mut().zip(y.data()) {
                *d += v;
            }
            let loss = linear_probe(&y, &c) + 0.5 * y.sum_sq();
            let dh = m.brn.backward(&cache, &dy)?;
            m.pre.backward(&x, &dh)?;
            Ok(loss)
        },
        PROBES,
        FD_EPSILON,
        seed,
    )
}

struct LayerNet(LstmpLayer<f64>);

impl Parameterized<f64> for LayerNet {
    fn params(&self) -> Vec<&Parameter<f64>> {
        self.0.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        self.0.params_mut()
    }
}

fn check_lstmp_layer(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = LayerNet(LstmpLayer::new("lstmp", 3, 3, 2, seed)?);
    net.0.b.value = random(&[12], &mut rng);
    let (steps, batch) = (4, 2);
    let x = random(&[steps * batch, 3], &mut rng);
    let c = random(&[steps * batch, 2], &mut rng);
    gradient_check(
        &mut net,
        |m: &mut LayerNet| {
            let (y, cache) = m.0.forward(&x, steps, batch)?;
            m.0.backward(&cache, &c)?;
            Ok(linear_probe(&y, &c))
        },
        PROBES,
        FD_EPSILON,
        seed,
    )
}

/// Full enhancer on a padded batch of unequal lengths, loss over valid rows.
fn check_enhancer(arch: ArchConfig, mode: Mode, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let has_norm = match &arch {
        ArchConfig::Dnn(c) => c.batch_renorm,
        ArchConfig::Rced(c) => c.batch_renorm,
        ArchConfig::Lstm(_) => false,
    };
    let mut model = Masked {
        inner: Enhancer::<f64>::new(&arch, seed)?,
        skip: if has_norm && mode == Mode::Train {
            pre_norm_bias
        } else {
            keep_all
        },
    };
    for p in model.inner.params_mut() {
        if p.name.ends_with(".b") || p.name.ends_with(".beta") {
            p.value = random(p.value.shape(), &mut rng);
        }
    }
    for (_, b) in model.inner.buffers_mut() {
        let n = b.len();
        *b = Tensor::from_vec(&[n], (0..n).map(|_| rng.random_range(0.5..1.5)).collect())?;
    }
    let d = arch.input_dim();
    let seqs = [random(&[5, d], &mut rng), random(&[3, d], &mut rng)];
    let batch = SeqBatch::from_sequences(&[&seqs[0], &seqs[1]])?;
    let mut c = random(&[batch.data.rows(), arch.output_dim()], &mut rng);
    batch.zero_padding(&mut c);
    gradient_check(
        &mut model,
        |m: &mut Masked<Enhancer<f64>>| {
            let m = &mut m.inner;
            let (y, cache) = m.forward(&batch, mode)?;
            m.backward(&cache, &c)?;
            Ok(linear_probe(&y, &c))
        },
        PROBES,
        FD_EPSILON,
        seed,
    )
}

fn check_discriminator(condition_dim: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = DiscriminatorConfig {
        feature_dim: 3,
        condition_dim,
        layers: 2,
        cells: 4,
        proj: 2,
    };
    let mut d = Discriminator::<f64>::new(cfg, seed)?;
    let feats = [random(&[4, 3], &mut rng), random(&[2, 3], &mut rng)];
    let fb = SeqBatch::from_sequences(&[&feats[0], &feats[1]])?;
    let cond = if condition_dim > 0 {
        let cs = [
            random(&[4, condition_dim], &mut rng),
            random(&[2, condition_dim], &mut rng),
        ];
        Some(SeqBatch::from_sequences(&[&cs[0], &cs[1]])?)
    } else {
        None
    };
    let w = [0.7, -1.3];
    gradient_check(
        &mut d,
        |m: &mut Discriminator<f64>| {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(0);
            let (s, cache) = m.score(&fb, cond.as_ref(), 0.0, &mut noise_rng)?;
            m.backward(&cache, &w)?;
            Ok(s[0] * w[0] + s[1] * w[1])
        },
        PROBES,
        FD_EPSILON,
        seed,
    )
}

struct InputProbe {
    x: Parameter<f64>,
}

impl Parameterized<f64> for InputProbe {
    fn params(&self) -> Vec<&Parameter<f64>> {
        vec![&self.x]
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        vec![&mut self.x]
    }
}

/// Gradient of the discriminator score with respect to its feature input,
/// which is what carries the adversarial signal back into the generator.
fn check_discriminator_input(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = DiscriminatorConfig {
        feature_dim: 3,
        condition_dim: 2,
        layers: 2,
        cells: 4,
        proj: 2,
    };
    let mut d = Discriminator::<f64>::new(cfg, seed)?;
    let lengths = [4usize, 2];
    let steps = 4;
    let mut probe = InputProbe {
        x: Parameter::new("x", random(&[steps * 2, 3], &mut rng)),
    };
    let cs = [random(&[4, 2], &mut rng), random(&[2, 2], &mut rng)];
    let cond = SeqBatch::from_sequences(&[&cs[0], &cs[1]])?;
    let w = [1.1, 0.4];
    gradient_check(
        &mut probe,
        |p: &mut InputProbe| {
            let fb = SeqBatch {
                data: p.x.value.clone(),
                lengths: lengths.to_vec(),
            };
            let mut noise_rng = ChaCha8Rng::seed_from_u64(0);
            let (s, cache) = d.score(&fb, Some(&cond), 0.0, &mut noise_rng)?;
            let mut dx = d.backward(&cache, &w)?;
            d.zero_grads();
            fb.zero_padding(&mut dx);
            p.x.grad.add_assign(&dx);
            Ok(s[0] * w[0] + s[1] * w[1])
        },
        PROBES,
        FD_EPSILON,
        seed,
    )
}

fn tiny_lstm(residual: Residual, layers: usize) -> ArchConfig {
    ArchConfig::Lstm(LstmpConfig {
        input_dim: 3,
        output_dim: 2,
        layers,
        cells: 3,
        proj: 3,
        residual,
    })
}

fn tiny_dnn(batch_renorm: bool) -> ArchConfig {
    ArchConfig::Dnn(DnnConfig {
        input_dim: 10,
        output_dim: 4,
        context: 1,
        hidden_layers: 1,
        hidden_units: 8,
        batch_renorm,
        brn: BrnConfig {
            r_max: 1.0,
            d_max: 0.0,
            ..BrnConfig::default()
        },
    })
}

fn tiny_rced() -> ArchConfig {
    ArchConfig::Rced(RcedConfig {
        input_dim: 6,
        output_dim: 4,
        context: 1,
        channels: vec![3, 2],
        widths: vec![3, 3],
        batch_renorm: true,
        brn: BrnConfig {
            r_max: 1.0,
            d_max: 0.0,
            ..BrnConfig::default()
        },
    })
}

/// Finite-difference checks of every layer type and every architecture at
/// tiny sizes, in 64-bit precision.
pub fn gradient_suite() -> Vec<CheckOutcome> {
    let dnn_5_4_3 = ArchConfig::Dnn(DnnConfig {
        input_dim: 5,
        output_dim: 3,
        context: 0,
        hidden_layers: 1,
        hidden_units: 4,
        batch_renorm: false,
        brn: BrnConfig::default(),
    });
    vec![
        outcome("grad/affine+relu", check_activation(Activation::Relu, 11)),
        outcome("grad/affine+sigmoid", check_activation(Activation::Sigmoid, 12)),
        outcome("grad/affine+tanh", check_activation(Activation::Tanh, 13)),
        outcome("grad/conv1d", check_conv(14)),
        outcome("grad/brn-eval", check_brn(Mode::Eval, 15)),
        outcome("grad/brn-train", check_brn(Mode::Train, 16)),
        outcome("grad/lstmp-layer", check_lstmp_layer(17)),
        outcome("grad/dnn-5-4-3", check_enhancer(dnn_5_4_3, Mode::Train, 18)),
        outcome("grad/dnn-10-8-4", check_enhancer(tiny_dnn(false), Mode::Train, 19)),
        outcome("grad/dnn-brn-train", check_enhancer(tiny_dnn(true), Mode::Train, 20)),
        outcome("grad/dnn-brn-eval", check_enhancer(tiny_dnn(true), Mode::Eval, 21)),
        outcome("grad/rced-train", check_enhancer(tiny_rced(), Mode::Train, 22)),
        outcome("grad/rced-eval", check_enhancer(tiny_rced(), Mode::Eval, 23)),
        outcome(
            "grad/lstm",
            check_enhancer(tiny_lstm(Residual::None, 2), Mode::Train, 24),
        ),
        outcome(
            "grad/lstm-res-i",
            check_enhancer(tiny_lstm(Residual::Input, 3), Mode::Train, 25),
        ),
        outcome(
            "grad/lstm-res-l",
            check_enhancer(tiny_lstm(Residual::Layer, 3), Mode::Train, 26),
        ),
        outcome("grad/discriminator", check_discriminator(0, 27)),
        outcome("grad/discriminator-cd", check_discriminator(2, 28)),
        outcome("grad/discriminator-input", check_discriminator_input(29)),
    ]
}
