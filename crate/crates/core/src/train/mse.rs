use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{
    apply_update, check_loss, frame_batch_count, frame_batches, spliced_frames, tag_batch, Clock, UttBatch,
};
use super::data::Example;
use super::log::{IterRecord, TrainLog};
use super::losses::mse_loss;
use super::schedule::LrSchedule;
use crate::error::{Error, Result};
use crate::nn::{Enhancer, Mode};
use crate::numeric::{Adam, AdamConfig, Parameterized, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseTrainerConfig {
    pub lr_init: f64,
    /// Spliced frames per batch for frame models, utterances for recurrent ones.
    pub batch: usize,
    pub epochs: usize,
    pub final_ratio: f64,
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl MseTrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_init > 0.0) || self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "mse trainer needs a positive learning rate, batch size and epoch count".into(),
            ));
        }
        if self.batch < 2 {
            return Err(Error::Config("mse batch must hold at least two items".into()));
        }
        Ok(())
    }
}

/// Plain regression training of an enhancer.
pub struct MseTrainer {
    pub model: Enhancer<f32>,
    pub opt: Adam<f32>,
    pub schedule: LrSchedule,
    pub config: MseTrainerConfig,
    pub step: usize,
}

impl MseTrainer {
    pub fn new(model: Enhancer<f32>, config: MseTrainerConfig, train: &[Example]) -> Result<Self> {
        config.validate()?;
        let per_epoch = Self::steps_per_epoch(&model, &config, train);
        if per_epoch == 0 {
            return Err(Error::Config("training split yields no batches".into()));
        }
        let opt = Adam::new(&model.params(), AdamConfig::default());
        let schedule = LrSchedule {
            lr_init: config.lr_init,
            total_steps: per_epoch * config.epochs,
            final_ratio: config.final_ratio,
        };
        Ok(MseTrainer {
            model,
            opt,
            schedule,
            config,
            step: 0,
        })
    }

    pub fn steps_per_epoch(model: &Enhancer<f32>, config: &MseTrainerConfig, train: &[Example]) -> usize {
        if model.arch().is_recurrent() {
            train.len().div_ceil(config.batch)
        } else {
            frame_batch_count(train, config.batch)
        }
    }

    /// One update on a padded utterance batch. Returns the batch loss.
    pub fn step_utterances(&mut self, batch: &UttBatch) -> Result<f64> {
        let step = self.step;
        let r = self.step_utterances_inner(batch);
        tag_batch(r, step, &batch.describe())
    }

    fn step_utterances_inner(&mut self, batch: &UttBatch) -> Result<f64> {
        self.model.zero_grads();
        let (y, cache) = self.model.forward(&batch.input, Mode::Train)?;
        let (loss, dy) = mse_loss(&y, &batch.target.data, Some(&batch.input.mask()))?;
        check_loss(loss, "mse", self.step, &batch.describe())?;
        self.model.backward(&cache, &dy)?;
        self.finish_step(&cache)?;
        Ok(loss)
    }

    /// One update on spliced frames `[N, span * D]` with targets `[N, out]`.
    pub fn step_frames(&mut self, x: &Tensor<f32>, target: &Tensor<f32>, batch_id: &str) -> Result<f64> {
        let step = self.step;
        let r = (|| {
            self.model.zero_grads();
            let (y, cache) = self.model.forward_spliced(x, Mode::Train)?;
            let (loss, dy) = mse_loss(&y, target, None)?;
            check_loss(loss, "mse", self.step, batch_id)?;
            self.model.backward(&cache, &dy)?;
            self.finish_step(&cache)?;
            Ok(loss)
        })();
        tag_batch(r, step, batch_id)
    }

    fn finish_step(&mut self, cache: &crate::nn::EnhancerCache<f32>) -> Result<()> {
        let lr = self.schedule.lr_at(self.step);
        apply_update(&mut self.model, &mut self.opt, lr, self.config.grad_clip)?;
        self.model.update_running(cache);
        self.step += 1;
        Ok(())
    }

    /// One pass over the training split. Returns the mean batch loss.
    pub fn run_epoch(
        &mut self,
        train: &[Example],
        epoch: usize,
        rng: &mut ChaCha8Rng,
        log: &mut TrainLog,
        clock: &Clock,
    ) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        let record = |s: &Self, loss: f64, id: String, log: &mut TrainLog| {
            log.push_iter(IterRecord {
                step: s.step - 1,
                epoch,
                batch_id: id,
                d_loss: None,
                g_adv_loss: None,
                g_mse_loss: loss,
                lr_g: s.schedule.lr_at(s.step - 1),
                lr_d: None,
                g_updates: 1,
                d_updates: 0,
                noise_sigma: None,
                wall_time: clock.elapsed(),
            });
        };
        if self.model.arch().is_recurrent() {
            let mut stream = super::batch::BatchStream::new(train.len(), self.config.batch)?;
            let per_epoch = train.len().div_ceil(self.config.batch);
            for b in 0..per_epoch {
                let (_, idx) = stream.next_indices(rng);
                let batch = UttBatch::gather(train, &idx, format!("e{epoch}-b{b}"))?;
                let loss = self.step_utterances(&batch)?;
                record(self, loss, batch.id.clone(), log);
                total += loss;
                count += 1;
            }
        } else {
            let half = self.model.context();
            for (b, pairs) in frame_batches(train, self.config.batch, rng).iter().enumerate() {
                let (x, y) = spliced_frames(train, pairs, half);
                let id = format!("e{epoch}-b{b}");
                let loss = self.step_frames(&x, &y, &id)?;
                record(self, loss, id, log);
                total += loss;
                count += 1;
            }
        }
        Ok(total / count.max(1) as f64)
    }
}
