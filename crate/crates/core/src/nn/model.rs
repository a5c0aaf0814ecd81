use serde::{Deserialize, Serialize};

use super::brn::Mode;
use super::discriminator::Discriminator;
use super::dnn::{Dnn, DnnCache, DnnConfig};
use super::lstm::{LstmpConfig, LstmpNet, LstmpNetCache};
use super::rced::{Rced, RcedCache, RcedConfig};
use super::seq::{splice_context, SeqBatch};
use crate::error::{Error, Result};
use crate::numeric::{Parameter, Parameterized, Real, Tensor};

/// Architecture descriptor of an enhancer; persisted in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum ArchConfig {
    Dnn(DnnConfig),
    Rced(RcedConfig),
    Lstm(LstmpConfig),
}

impl ArchConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ArchConfig::Dnn(_) => "dnn",
            ArchConfig::Rced(_) => "rced",
            ArchConfig::Lstm(_) => "lstm",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ArchConfig::Dnn(c) => c.input_dim,
            ArchConfig::Rced(c) => c.input_dim,
            ArchConfig::Lstm(c) => c.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            ArchConfig::Dnn(c) => c.output_dim,
            ArchConfig::Rced(c) => c.output_dim,
            ArchConfig::Lstm(c) => c.output_dim,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, ArchConfig::Lstm(_))
    }
}

/// A dereverberation generator. Every variant maps a batch of per-frame
/// feature sequences to one output frame per input frame.
#[derive(Clone, Debug, PartialEq)]
pub enum Enhancer<F: Real = f32> {
    Dnn(Dnn<F>),
    Rced(Rced<F>),
    Lstm(LstmpNet<F>),
}

#[derive(Clone, Debug)]
enum Inner<F: Real> {
    Dnn(DnnCache<F>),
    Rced(RcedCache<F>),
    Lstm(LstmpNetCache<F>),
}

#[derive(Clone, Debug)]
pub struct EnhancerCache<F: Real> {
    inner: Inner<F>,
    /// Packed rows that carry real frames, in the order the frame model saw them.
    rows: Vec<usize>,
    total_rows: usize,
}

impl<F: Real> Enhancer<F> {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        Ok(match arch {
            ArchConfig::Dnn(c) => Enhancer::Dnn(Dnn::new(c.clone(), seed)?),
            ArchConfig::Rced(c) => Enhancer::Rced(Rced::new(c.clone(), seed)?),
            ArchConfig::Lstm(c) => Enhancer::Lstm(LstmpNet::new("lstm", c.clone(), seed)?),
        })
    }

    pub fn arch(&self) -> ArchConfig {
        match self {
            Enhancer::Dnn(m) => ArchConfig::Dnn(m.config.clone()),
            Enhancer::Rced(m) => ArchConfig::Rced(m.config.clone()),
            Enhancer::Lstm(m) => ArchConfig::Lstm(m.config.clone()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.arch().input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.arch().output_dim()
    }

    /// Context half-width for frame models, 0 for recurrent ones.
    pub fn context(&self) -> usize {
        match self {
            Enhancer::Dnn(m) => m.config.context,
            Enhancer::Rced(m) => m.config.context,
            Enhancer::Lstm(_) => 0,
        }
    }

    /// Splices each utterance's valid frames independently and stacks them.
    fn spliced_valid(&self, batch: &SeqBatch<F>) -> (Tensor<F>, Vec<usize>) {
        let half = self.context();
        let mut rows = Vec::with_capacity(batch.valid_frames());
        let mut data = Vec::new();
        let mut width = 0;
        for b in 0..batch.batch() {
            let r = batch.rows_of(b);
            let s = splice_context(&batch.data.gather_rows(&r), half);
            width = s.cols();
            data.extend_from_slice(s.data());
            rows.extend(r);
        }
        let t = Tensor::from_vec(&[rows.len(), width], data).expect("consistent splice widths");
        (t, rows)
    }

    /// Packed output `[T*B, output_dim]`; padded rows are zero.
    pub fn forward(&self, batch: &SeqBatch<F>, mode: Mode) -> Result<(Tensor<F>, EnhancerCache<F>)> {
        if batch.dim() != self.input_dim() {
            return Err(Error::shape(
                format!("{} input", self.arch().name()),
                &[self.input_dim()],
                &[batch.dim()],
            ));
        }
        let total_rows = batch.data.rows();
        let out_dim = self.output_dim();
        let (y, inner, rows) = match self {
            Enhancer::Lstm(m) => {
                let (mut y, c) = m.forward_seq(&batch.data, batch.steps(), batch.batch())?;
                batch.zero_padding(&mut y);
                (y, Inner::Lstm(c), Vec::new())
            }
            Enhancer::Dnn(m) => {
                let (x, rows) = self.spliced_valid(batch);
                let (yv, c) = m.forward_frames(&x, mode)?;
                (scatter(&yv, &rows, total_rows, out_dim), Inner::Dnn(c), rows)
            }
            Enhancer::Rced(m) => {
                let (x, rows) = self.spliced_valid(batch);
                let (yv, c) = m.forward_frames(&x, mode)?;
                (scatter(&yv, &rows, total_rows, out_dim), Inner::Rced(c), rows)
            }
        };
        y.ensure_finite("enhancer output")?;
        Ok((
            y,
            EnhancerCache {
                inner,
                rows,
                total_rows,
            },
        ))
    }

    /// Frame models only: rows already spliced to `[N, span * input_dim]`,
    /// drawn from any mix of utterances.
    pub fn forward_spliced(&self, x: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, EnhancerCache<F>)> {
        let n = x.rows();
        let (y, inner) = match self {
            Enhancer::Dnn(m) => {
                let (y, c) = m.forward_frames(x, mode)?;
                (y, Inner::Dnn(c))
            }
            Enhancer::Rced(m) => {
                let (y, c) = m.forward_frames(x, mode)?;
                (y, Inner::Rced(c))
            }
            Enhancer::Lstm(_) => {
                return Err(Error::InvalidArgument(
                    "recurrent models consume whole utterances".into(),
                ))
            }
        };
        y.ensure_finite("enhancer output")?;
        Ok((
            y,
            EnhancerCache {
                inner,
                rows: (0..n).collect(),
                total_rows: n,
            },
        ))
    }

    /// Accumulates parameter gradients for a packed output gradient.
    pub fn backward(&mut self, cache: &EnhancerCache<F>, dy: &Tensor<F>) -> Result<()> {
        if dy.rows() != cache.total_rows || dy.cols() != self.output_dim() {
            return Err(Error::shape(
                "enhancer output gradient",
                &[cache.total_rows, self.output_dim()],
                dy.shape(),
            ));
        }
        match (self, &cache.inner) {
            (Enhancer::Lstm(m), Inner::Lstm(c)) => {
                m.backward_seq(c, dy)?;
            }
            (Enhancer::Dnn(m), Inner::Dnn(c)) => {
                m.backward_frames(c, &dy.gather_rows(&cache.rows))?;
            }
            (Enhancer::Rced(m), Inner::Rced(c)) => {
                m.backward_frames(c, &dy.gather_rows(&cache.rows))?;
            }
            _ => return Err(Error::InvalidArgument("cache from a different architecture".into())),
        }
        Ok(())
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// statistics of any batch renormalization layers.
    pub fn update_running(&mut self, cache: &EnhancerCache<F>) {
        match (self, &cache.inner) {
            (Enhancer::Dnn(m), Inner::Dnn(c)) => m.update_running(c),
            (Enhancer::Rced(m), Inner::Rced(c)) => m.update_running(c),
            _ => {}
        }
    }

    /// Eval-mode enhancement of one utterance `[T, input_dim]`.
    pub fn enhance(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let batch = SeqBatch::from_sequences(&[x])?;
        Ok(self.forward(&batch, Mode::Eval)?.0)
    }

    /// Non-trainable state (batch renormalization running statistics).
    pub fn buffers(&self) -> Vec<(String, &Tensor<F>)> {
        match self {
            Enhancer::Dnn(m) => m.buffers(),
            Enhancer::Rced(m) => m.buffers(),
            Enhancer::Lstm(_) => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        match self {
            Enhancer::Dnn(m) => m.buffers_mut(),
            Enhancer::Rced(m) => m.buffers_mut(),
            Enhancer::Lstm(_) => Vec::new(),
        }
    }

    /// Sets every trainable parameter to zero.
    pub fn zero_all(&mut self) {
        for p in self.params_mut() {
            p.value.fill(F::zero());
            p.grad.fill(F::zero());
        }
    }

    pub fn cast<G: Real>(&self) -> Result<Enhancer<G>> {
        let mut out = Enhancer::<G>::new(&self.arch(), 0)?;
        copy_params(&mut out, self);
        for ((_, dst), (_, src)) in out.buffers_mut().into_iter().zip(self.buffers()) {
            *dst = src.cast();
        }
        Ok(out)
    }
}

fn scatter<F: Real>(rows_data: &Tensor<F>, rows: &[usize], total: usize, cols: usize) -> Tensor<F> {
    let mut out = Tensor::zeros(&[total, cols]);
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(r).copy_from_slice(rows_data.row(i));
    }
    out
}

/// Copies parameter values between two identically structured models.
pub fn copy_params<F: Real, G: Real>(dst: &mut impl Parameterized<G>, src: &impl Parameterized<F>) {
    for (d, s) in dst.params_mut().into_iter().zip(src.params()) {
        d.value = s.value.cast();
        d.grad = Tensor::zeros(s.value.shape());
    }
}

impl<F: Real> Discriminator<F> {
    pub fn cast<G: Real>(&self) -> Result<Discriminator<G>> {
        let mut out = Discriminator::<G>::new(self.config.clone(), 0)?;
        copy_params(&mut out, self);
        Ok(out)
    }
}

impl<F: Real> Parameterized<F> for Enhancer<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        match self {
            Enhancer::Dnn(m) => m.params(),
            Enhancer::Rced(m) => m.params(),
            Enhancer::Lstm(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        match self {
            Enhancer::Dnn(m) => m.params_mut(),
            Enhancer::Rced(m) => m.params_mut(),
            Enhancer::Lstm(m) => m.params_mut(),
        }
    }
}
