use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{apply_update, check_loss, tag_batch, UttBatch};
use super::log::IterRecord;
use super::losses::{d_loss_batch, g_adv_batch, mse_loss};
use super::schedule::LrSchedule;
use crate::config::UpdateOrder;
use crate::error::{Error, Result};
use crate::nn::{Discriminator, DiscriminatorConfig, Enhancer, EnhancerCache, Mode, SeqBatch};
use crate::numeric::{derive_seed, Adam, AdamConfig, Parameterized, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanTrainerConfig {
    /// Weight of the regression term in the generator objective.
    pub lambda: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub g_steps: usize,
    pub d_steps: usize,
    /// Reuse one batch for every update of an iteration; otherwise draw a
    /// fresh batch before each update.
    pub same_minibatch: bool,
    /// Feed the generator input to the discriminator as a condition.
    pub conditional_d: bool,
    /// Instance noise at the first iteration, annealed linearly to zero.
    pub noise_sigma0: f64,
    /// Utterances per batch.
    pub batch: usize,
    pub order: UpdateOrder,
    pub epochs: usize,
    pub final_ratio: f64,
    pub grad_clip: Option<f64>,
    pub disc: DiscriminatorConfig,
    pub seed: u64,
}

impl GanTrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.g_steps == 0 || self.d_steps == 0 {
            return Err(Error::Config("step counts per iteration must be at least 1".into()));
        }
        if !(self.lr_g >= 0.0 && self.lr_d >= 0.0) || self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "adversarial trainer needs non-negative rates and positive batch and epochs".into(),
            ));
        }
        if !(self.noise_sigma0 >= 0.0) {
            return Err(Error::Config("instance noise must be non-negative".into()));
        }
        if self.conditional_d != self.disc.is_conditional() {
            return Err(Error::Config(
                "conditional flag disagrees with the discriminator condition width".into(),
            ));
        }
        Ok(())
    }
}

/// Both players, their optimizers and the annealing state.
pub struct GanState<F: Real = f32> {
    pub g: Enhancer<F>,
    pub d: Discriminator<F>,
    pub opt_g: Adam<F>,
    pub opt_d: Adam<F>,
    pub sched_g: LrSchedule,
    pub sched_d: LrSchedule,
    pub config: GanTrainerConfig,
    pub iteration: usize,
    pub total_iterations: usize,
    noise_rng: ChaCha8Rng,
}

/// Generator loss terms of one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GLoss {
    pub adv: f64,
    pub mse: f64,
    pub total: f64,
}

fn to_f64<F: Real>(v: &[F]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64<F: Real>(v: &[f64]) -> Vec<F> {
    v.iter().map(|&x| F::from_f64(x)).collect()
}

impl<F: Real> GanState<F> {
    pub fn new(g: Enhancer<F>, config: GanTrainerConfig, total_iterations: usize) -> Result<Self> {
        config.validate()?;
        if config.disc.feature_dim != g.output_dim() {
            return Err(Error::Config(format!(
                "discriminator scores {}-dim features but the generator emits {}",
                config.disc.feature_dim,
                g.output_dim()
            )));
        }
        if config.conditional_d && config.disc.condition_dim != g.input_dim() {
            return Err(Error::Config(format!(
                "condition width {} differs from the generator input width {}",
                config.disc.condition_dim,
                g.input_dim()
            )));
        }
        let d = Discriminator::new(config.disc.clone(), derive_seed(config.seed, "discriminator"))?;
        let opt_g = Adam::new(&g.params(), AdamConfig::default());
        let opt_d = Adam::new(&d.params(), AdamConfig::default());
        let sched = |lr| LrSchedule {
            lr_init: lr,
            total_steps: total_iterations,
            final_ratio: config.final_ratio,
        };
        Ok(GanState {
            sched_g: sched(config.lr_g),
            sched_d: sched(config.lr_d),
            noise_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "instance-noise")),
            g,
            d,
            opt_g,
            opt_d,
            config,
            iteration: 0,
            total_iterations,
        })
    }

    /// Instance-noise standard deviation at the current iteration.
    pub fn noise_sigma(&self) -> f64 {
        if self.total_iterations == 0 {
            return self.config.noise_sigma0;
        }
        let frac = self.iteration.min(self.total_iterations) as f64 / self.total_iterations as f64;
        self.config.noise_sigma0 * (1.0 - frac)
    }

    fn condition<'a>(&self, batch: &'a UttBatch<F>) -> Option<&'a SeqBatch<F>> {
        self.config.conditional_d.then_some(&batch.input)
    }

    /// Discriminator loss on one batch with gradients accumulated into the
    /// (zeroed) discriminator parameters. The generator is only read.
    pub fn d_grads(&mut self, batch: &UttBatch<F>, sigma: f64) -> Result<f64> {
        let (fake, _) = self.g.forward(&batch.input, Mode::Train)?;
        let fake = batch.target.with_data(fake)?;
        let cond = self.condition(batch);
        self.d.zero_grads();
        let (real_s, real_c) = self.d.score(&batch.target, cond, sigma, &mut self.noise_rng)?;
        let (fake_s, fake_c) = self.d.score(&fake, cond, sigma, &mut self.noise_rng)?;
        let (loss, dr, df) = d_loss_batch(&to_f64(&real_s), &to_f64(&fake_s))?;
        check_loss(loss, "d_loss", self.iteration, &batch.describe())?;
        self.d.backward(&real_c, &from_f64(&dr))?;
        self.d.backward(&fake_c, &from_f64(&df))?;
        Ok(loss)
    }

    /// Generator loss on one batch with gradients accumulated into the
    /// (zeroed) generator parameters. The generator output is computed from
    /// the current parameters; the discriminator is left without gradients.
    pub fn g_grads(&mut self, batch: &UttBatch<F>, sigma: f64) -> Result<(GLoss, EnhancerCache<F>)> {
        self.g.zero_grads();
        let (y, g_cache) = self.g.forward(&batch.input, Mode::Train)?;
        let mask = batch.input.mask();
        let (mse, mut dy) = mse_loss(&y, &batch.target.data, Some(&mask))?;
        let fake = batch.target.with_data(y)?;
        let cond = self.condition(batch);
        let (scores, d_cache) = self.d.score(&fake, cond, sigma, &mut self.noise_rng)?;
        let (adv, ds) = g_adv_batch(&to_f64(&scores))?;
        let total = adv + 0.5 * self.config.lambda * mse;
        check_loss(total, "g_loss", self.iteration, &batch.describe())?;
        let dfake = self.d.backward(&d_cache, &from_f64(&ds))?;
        // The discriminator's gradients from this pass must never be applied.
        self.d.zero_grads();
        let half_lambda = F::from_f64(0.5 * self.config.lambda);
        let dim = fake.dim();
        for ((g, a), &valid) in dy.data_mut().chunks_mut(dim).zip(dfake.data().chunks(dim)).zip(&mask) {
            for (gv, &av) in g.iter_mut().zip(a) {
                *gv = if valid { half_lambda * *gv + av } else { F::zero() };
            }
        }
        self.g.backward(&g_cache, &dy)?;
        Ok((GLoss { adv, mse, total }, g_cache))
    }

    fn d_step(&mut self, batch: &UttBatch<F>, sigma: f64, lr: f64) -> Result<f64> {
        let loss = self.d_grads(batch, sigma)?;
        apply_update(&mut self.d, &mut self.opt_d, lr, self.config.grad_clip)?;
        self.d.zero_grads();
        Ok(loss)
    }

    fn g_step(&mut self, batch: &UttBatch<F>, sigma: f64, lr: f64) -> Result<GLoss> {
        let (loss, cache) = self.g_grads(batch, sigma)?;
        apply_update(&mut self.g, &mut self.opt_g, lr, self.config.grad_clip)?;
        self.g.update_running(&cache);
        self.g.zero_grads();
        Ok(loss)
    }

    /// One adversarial iteration: `d_steps` discriminator updates and
    /// `g_steps` generator updates in the configured order. `next_batch` is
    /// called once per iteration in same-minibatch mode and once per update
    /// otherwise.
    pub fn iterate<S>(&mut self, epoch: usize, mut next_batch: S) -> Result<IterRecord>
    where
        S: FnMut() -> Result<UttBatch<F>>,
    {
        let sigma = self.noise_sigma();
        let lr_g = self.sched_g.lr_at(self.iteration);
        let lr_d = self.sched_d.lr_at(self.iteration);
        let (g0, d0) = (self.opt_g.steps(), self.opt_d.steps());
        let shared = if self.config.same_minibatch {
            Some(next_batch()?)
        } else {
            None
        };
        let mut ids: Vec<String> = Vec::new();
        let mut d_loss = f64::NAN;
        let mut g_last = GLoss {
            adv: f64::NAN,
            mse: f64::NAN,
            total: f64::NAN,
        };
        let phases = match self.config.order {
            UpdateOrder::DFirst => [true, false],
            UpdateOrder::GFirst => [false, true],
        };
        for is_d in phases {
            let n = if is_d { self.config.d_steps } else { self.config.g_steps };
            for _ in 0..n {
                let owned;
                let batch = match &shared {
                    Some(b) => b,
                    None => {
                        owned = next_batch()?;
                        &owned
                    }
                };
                if ids.last() != Some(&batch.id) {
                    ids.push(batch.id.clone());
                }
                let step = self.iteration;
                let desc = batch.describe();
                if is_d {
                    d_loss = tag_batch(self.d_step(batch, sigma, lr_d), step, &desc)?;
                } else {
                    g_last = tag_batch(self.g_step(batch, sigma, lr_g), step, &desc)?;
                }
            }
        }
        let record = IterRecord {
            step: self.iteration,
            epoch,
            batch_id: ids.join("+"),
            d_loss: Some(d_loss),
            g_adv_loss: Some(g_last.adv),
            g_mse_loss: g_last.mse,
            lr_g,
            lr_d: Some(lr_d),
            g_updates: (self.opt_g.steps() - g0) as u32,
            d_updates: (self.opt_d.steps() - d0) as u32,
            noise_sigma: Some(sigma),
            wall_time: 0.0,
        };
        self.iteration += 1;
        Ok(record)
    }
}

/// Runs one adversarial iteration on `state`; see [`GanState::iterate`].
pub fn gan_train_iteration<F, S>(state: &mut GanState<F>, epoch: usize, next_batch: S) -> Result<IterRecord>
where
    F: Real,
    S: FnMut() -> Result<UttBatch<F>>,
{
    state.iterate(epoch, next_batch)
}
