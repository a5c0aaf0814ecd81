use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use super::data::Example;
use crate::error::{Error, Result};
use crate::nn::SeqBatch;
use crate::numeric::{clip_grad_norm, Adam, Parameterized, Real, Tensor};

/// Padded utterance batch with its identifier for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct UttBatch<F: Real = f32> {
    pub id: String,
    pub utterances: Vec<String>,
    pub input: SeqBatch<F>,
    pub target: SeqBatch<F>,
}

impl<F: Real> UttBatch<F> {
    pub fn new(id: impl Into<String>, input: SeqBatch<F>, target: SeqBatch<F>) -> Result<Self> {
        if input.lengths != target.lengths {
            return Err(Error::InvalidArgument(
                "input and target batches are not aligned".into(),
            ));
        }
        Ok(UttBatch {
            id: id.into(),
            utterances: Vec::new(),
            input,
            target,
        })
    }

    pub fn describe(&self) -> String {
        format!("{} [{}]", self.id, self.utterances.join(","))
    }
}

impl UttBatch<f32> {
    pub fn gather(examples: &[Example], idx: &[usize], id: String) -> Result<Self> {
        let inputs: Vec<&Tensor<f32>> = idx.iter().map(|&i| &examples[i].input).collect();
        let targets: Vec<&Tensor<f32>> = idx.iter().map(|&i| &examples[i].target).collect();
        Ok(UttBatch {
            id,
            utterances: idx.iter().map(|&i| examples[i].id.clone()).collect(),
            input: SeqBatch::from_sequences(&inputs)?,
            target: SeqBatch::from_sequences(&targets)?,
        })
    }
}

/// Endless stream of utterance index batches; every pass over the data is a
/// fresh permutation.
#[derive(Clone, Debug)]
pub struct BatchStream {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    drawn: usize,
}

impl BatchStream {
    pub fn new(n: usize, batch: usize) -> Result<Self> {
        if n == 0 || batch == 0 {
            return Err(Error::InvalidArgument("batch stream over nothing".into()));
        }
        Ok(BatchStream {
            order: (0..n).collect(),
            pos: n,
            batch,
            drawn: 0,
        })
    }

    pub fn next_indices<R: Rng>(&mut self, rng: &mut R) -> (usize, Vec<usize>) {
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let idx = self.order[self.pos..end].to_vec();
        self.pos = end;
        self.drawn += 1;
        (self.drawn - 1, idx)
    }
}

/// Shuffled `(utterance, frame)` pairs cut into batches; a trailing batch of
/// fewer than two frames is dropped since batch statistics need two rows.
pub fn frame_batches<R: Rng>(examples: &[Example], size: usize, rng: &mut R) -> Vec<Vec<(usize, usize)>> {
    let mut pairs: Vec<(usize, usize)> = examples
        .iter()
        .enumerate()
        .flat_map(|(u, e)| (0..e.frames()).map(move |t| (u, t)))
        .collect();
    pairs.shuffle(rng);
    pairs
        .chunks(size)
        .filter(|c| c.len() >= 2)
        .map(|c| c.to_vec())
        .collect()
}

pub fn frame_batch_count(examples: &[Example], size: usize) -> usize {
    let total: usize = examples.iter().map(|e| e.frames()).sum();
    total / size + usize::from(total % size >= 2)
}

/// Context-spliced inputs and aligned targets for arbitrary frames.
pub fn spliced_frames(examples: &[Example], pairs: &[(usize, usize)], half: usize) -> (Tensor<f32>, Tensor<f32>) {
    let d = examples[0].input.cols();
    let od = examples[0].target.cols();
    let span = 2 * half + 1;
    let mut x = Vec::with_capacity(pairs.len() * d * span);
    let mut y = Vec::with_capacity(pairs.len() * od);
    for &(u, t) in pairs {
        let e = &examples[u];
        let last = e.frames() - 1;
        for off in 0..span {
            let src = (t + off).saturating_sub(half).min(last);
            x.extend_from_slice(e.input.row(src));
        }
        y.extend_from_slice(e.target.row(t));
    }
    (
        Tensor::from_vec(&[pairs.len(), d * span], x).expect("exact length"),
        Tensor::from_vec(&[pairs.len(), od], y).expect("exact length"),
    )
}

/// Optional clip followed by one Adam update.
pub fn apply_update<F: Real, M: Parameterized<F>>(
    model: &mut M,
    opt: &mut Adam<F>,
    lr: f64,
    clip: Option<f64>,
) -> Result<()> {
    let mut params = model.params_mut();
    if let Some(c) = clip {
        clip_grad_norm(&mut params, c);
    }
    opt.step(&mut params, lr)
}

/// Elapsed seconds, or always zero when runs must be reproducible bit for bit.
#[derive(Clone, Copy, Debug)]
pub struct Clock {
    start: Option<Instant>,
}

impl Clock {
    pub fn new(deterministic: bool) -> Self {
        Clock {
            start: (!deterministic).then(Instant::now),
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.start.map_or(0.0, |s| s.elapsed().as_secs_f64())
    }
}

/// Rewrites numeric failures inside one step as a non-finite-loss error that
/// names the batch.
pub fn tag_batch<T>(r: Result<T>, step: usize, batch: &str) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite(what) => Error::NonFiniteLoss {
            step,
            batch_id: batch.to_string(),
            detail: format!("non-finite {what}"),
        },
        other => other,
    })
}

pub fn check_loss(loss: f64, what: &str, step: usize, batch: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            step,
            batch_id: batch.to_string(),
            detail: format!("{what} = {loss}"),
        })
    }
}
