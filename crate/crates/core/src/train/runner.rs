use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::batch::{BatchStream, Clock, UttBatch};
use super::data::{Example, FeatureCorpus, RawCorpus};
use super::gan::GanState;
use super::log::{EpochRecord, TrainLog};
use super::mse::MseTrainer;
use crate::config::{RunConfig, TrainerKind};
use crate::error::{Error, Result};
use crate::nn::{Enhancer, Mode, ModelCheckpoint};
use crate::numeric::derive_seed;
use crate::reverb::DatasetManifest;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const CONFIG_FILE: &str = "config.txt";
pub const STATUS_FILE: &str = "status.json";

/// Utterances per evaluation batch.
const EVAL_BATCH: usize = 8;

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest dev error.
    pub checkpoint: ModelCheckpoint,
    pub log: TrainLog,
    pub initial_dev_mse: f64,
    pub best_dev_mse: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Frame-pooled mean squared error of eval-mode predictions, in the
/// normalized target domain.
pub fn dev_mse(model: &Enhancer<f32>, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Config("no utterances to evaluate".into()));
    }
    let idx: Vec<usize> = (0..examples.len()).collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in idx.chunks(EVAL_BATCH) {
        let b = UttBatch::gather(examples, chunk, String::new())?;
        let (y, _) = model.forward(&b.input, Mode::Eval)?;
        for (r, valid) in b.input.mask().into_iter().enumerate() {
            if valid {
                for (p, t) in y.row(r).iter().zip(b.target.data.row(r)) {
                    let d = (*p - *t) as f64;
                    sum += d * d;
                }
                count += y.cols();
            }
        }
    }
    Ok(sum / count as f64)
}

enum Trainer {
    Mse(MseTrainer),
    Gan {
        state: Box<GanState<f32>>,
        stream: BatchStream,
        per_epoch: usize,
    },
}

impl Trainer {
    fn model(&self) -> &Enhancer<f32> {
        match self {
            Trainer::Mse(t) => &t.model,
            Trainer::Gan { state, .. } => &state.g,
        }
    }
}

fn config_json(cfg: &RunConfig) -> Value {
    Value::Object(
        cfg.entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), Value::String(v)))
            .collect::<Map<_, _>>(),
    )
}

fn persist(out_dir: Option<&Path>, cfg: &RunConfig, log: &TrainLog, status: &Value) -> Result<()> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        log.save(&dir.join(LOG_FILE))?;
        let p = dir.join(CONFIG_FILE);
        fs::write(&p, cfg.to_text()).map_err(|e| Error::io(&p, e))?;
        let p = dir.join(STATUS_FILE);
        fs::write(&p, serde_json::to_string_pretty(status)? + "\n").map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Trains an enhancer on a prepared corpus. With `out_dir`, the effective
/// configuration, the full log, a status record and (on success) the best
/// checkpoint are written there; a failed run still leaves its log behind.
pub fn train(corpus: &FeatureCorpus, cfg: &RunConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.input_kind != cfg.input || corpus.target_kind != cfg.target {
        return Err(Error::Config(format!(
            "corpus maps {} to {} but the run expects {} to {}",
            corpus.input_kind, corpus.target_kind, cfg.input, cfg.target
        )));
    }
    if corpus.train.is_empty() || corpus.dev.is_empty() {
        return Err(Error::Config("training and dev splits must be non-empty".into()));
    }
    let mut log = TrainLog::default();
    match run(corpus, cfg, &mut log) {
        Ok(outcome) => {
            let status = json!({
                "status": "ok",
                "best_epoch": outcome.best_epoch,
                "best_dev_mse": outcome.best_dev_mse,
                "initial_dev_mse": outcome.initial_dev_mse,
                "epochs_run": outcome.epochs_run,
                "stopped_early": outcome.stopped_early,
            });
            persist(out_dir, cfg, &log, &status)?;
            if let Some(dir) = out_dir {
                outcome.checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
            }
            Ok(TrainOutcome { log, ..outcome })
        }
        Err(e) => {
            let status = json!({
                "status": if e.category() == crate::ErrorCategory::Divergence { "divergence" } else { "error" },
                "detail": e.to_string(),
            });
            persist(out_dir, cfg, &log, &status)?;
            Err(e)
        }
    }
}

/// Extracts features from a manifest, fits normalization on its training
/// split and trains.
pub fn train_manifest(manifest: &DatasetManifest, cfg: &RunConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let raw = RawCorpus::extract(manifest)?;
    let corpus = FeatureCorpus::prepare(&raw, cfg.input, cfg.target, cfg.normalize_input)?;
    train(&corpus, cfg, out_dir)
}

fn run(corpus: &FeatureCorpus, cfg: &RunConfig, log: &mut TrainLog) -> Result<TrainOutcome> {
    let arch = cfg.arch_config()?;
    let g = Enhancer::<f32>::new(&arch, derive_seed(cfg.seed, "generator"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "batches"));
    let clock = Clock::new(cfg.deterministic);
    let train = &corpus.train;
    let mut trainer = match cfg.trainer {
        TrainerKind::Mse => Trainer::Mse(MseTrainer::new(g, cfg.mse_trainer(), train)?),
        TrainerKind::Gan => {
            let gc = cfg.gan_trainer();
            let per_epoch = train.len().div_ceil(gc.batch);
            let stream = BatchStream::new(train.len(), gc.batch)?;
            let state = GanState::new(g, gc, per_epoch * cfg.epochs)?;
            Trainer::Gan {
                state: Box::new(state),
                stream,
                per_epoch,
            }
        }
    };

    let eval = |m: &Enhancer<f32>| match dev_mse(m, &corpus.dev) {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) | Err(Error::NonFinite(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let initial =
        eval(trainer.model())?.ok_or_else(|| Error::Divergence("untrained model output is not finite".into()))?;
    log.push_epoch(EpochRecord {
        epoch: 0,
        train_loss: None,
        dev_mse: Some(initial),
        best: true,
        wall_time: clock.elapsed(),
    });
    let mut best = (initial, 0usize, trainer.model().clone());
    let mut since_best = 0usize;
    let mut bad_epochs = 0usize;
    let mut epochs_run = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let train_loss = match &mut trainer {
            Trainer::Mse(t) => t.run_epoch(train, epoch, &mut rng, log, &clock)?,
            Trainer::Gan {
                state,
                stream,
                per_epoch,
            } => {
                let mut total = 0.0;
                for _ in 0..*per_epoch {
                    let mut draw = || {
                        let (n, idx) = stream.next_indices(&mut rng);
                        UttBatch::gather(train, &idx, format!("b{n}"))
                    };
                    let mut rec = state.iterate(epoch, &mut draw)?;
                    rec.wall_time = clock.elapsed();
                    total += rec.g_mse_loss;
                    log.push_iter(rec);
                }
                total / *per_epoch as f64
            }
        };
        epochs_run = epoch;
        let dev = eval(trainer.model())?;
        let improved = dev.is_some_and(|d| d < best.0);
        if dev.is_some_and(|d| d < best.0 * (1.0 - cfg.min_improvement)) {
            since_best = 0;
        } else {
            since_best += 1;
        }
        if improved {
            best = (dev.expect("checked"), epoch, trainer.model().clone());
        }
        log.push_epoch(EpochRecord {
            epoch,
            train_loss: Some(train_loss),
            dev_mse: dev,
            best: improved,
            wall_time: clock.elapsed(),
        });
        if dev.is_none_or(|d| d > cfg.divergence_factor * initial) {
            bad_epochs += 1;
            if bad_epochs >= cfg.divergence_epochs {
                return Err(Error::Divergence(format!(
                    "dev mse non-finite or above {}x the initial {initial:.4} for {bad_epochs} consecutive epochs (last epoch {epoch})",
                    cfg.divergence_factor
                )));
            }
        } else {
            bad_epochs = 0;
        }
        if cfg.patience > 0 && since_best >= cfg.patience {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }

    let (best_dev, best_epoch, model) = best;
    let mut checkpoint = ModelCheckpoint::new(
        model,
        corpus.input_kind,
        corpus.target_kind,
        corpus.input_cmvn.clone(),
        corpus.target_cmvn.clone(),
    )?;
    checkpoint.info = json!({
        "trainer": cfg.trainer.as_str(),
        "best_epoch": best_epoch,
        "best_dev_mse": best_dev,
        "initial_dev_mse": initial,
        "config": config_json(cfg),
    });
    Ok(TrainOutcome {
        checkpoint,
        log: TrainLog::default(),
        initial_dev_mse: initial,
        best_dev_mse: best_dev,
        best_epoch,
        epochs_run,
        stopped_early,
    })
}
