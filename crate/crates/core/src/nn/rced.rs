use serde::{Deserialize, Serialize};

use super::brn::{BatchRenorm, BrnCache, BrnConfig, Mode};
use super::conv::Conv1d;
use super::dnn::{brn_buffers, brn_buffers_mut};
use super::layers::{Activation, Affine};
use super::seq::DEFAULT_CONTEXT;
use crate::error::{Error, Result};
use crate::numeric::{Parameter, Parameterized, Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcedConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub context: usize,
    pub channels: Vec<usize>,
    pub widths: Vec<usize>,
    pub batch_renorm: bool,
    #[serde(default)]
    pub brn: BrnConfig,
}

impl Default for RcedConfig {
    fn default() -> Self {
        RcedConfig {
            input_dim: 257,
            output_dim: 40,
            context: DEFAULT_CONTEXT,
            channels: vec![12, 16, 20, 24, 32, 24, 20, 16, 12],
            widths: vec![13, 11, 9, 7, 7, 7, 9, 11, 13],
            batch_renorm: true,
            brn: BrnConfig::default(),
        }
    }
}

impl RcedConfig {
    pub fn span(&self) -> usize {
        2 * self.context + 1
    }
}

/// Convolutional encoder-decoder without pooling. Convolutions run along the
/// frequency axis; the spliced context frames form the input channels. A fully
/// connected layer maps the last feature map to the output.
#[derive(Clone, Debug, PartialEq)]
pub struct Rced<F: Real = f32> {
    pub config: RcedConfig,
    pub convs: Vec<Conv1d<F>>,
    pub norms: Vec<BatchRenorm<F>>,
    pub out: Affine<F>,
}

#[derive(Clone, Debug)]
pub struct RcedCache<F: Real> {
    inputs: Vec<Tensor<F>>,
    norms: Vec<BrnCache<F>>,
    acts: Vec<Tensor<F>>,
    flat: Tensor<F>,
}

impl<F: Real> Rced<F> {
    pub fn new(config: RcedConfig, seed: u64) -> Result<Self> {
        if config.channels.len() != config.widths.len() || config.channels.is_empty() {
            return Err(Error::Config(format!(
                "rced needs equally long, nonempty channel and width lists (got {} and {})",
                config.channels.len(),
                config.widths.len()
            )));
        }
        if config.input_dim == 0 || config.output_dim == 0 || config.channels.contains(&0) {
            return Err(Error::Config("rced dimensions must be positive".into()));
        }
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let mut cin = config.span();
        for (i, (&c, &w)) in config.channels.iter().zip(&config.widths).enumerate() {
            convs.push(Conv1d::new(&format!("rced.c{i}"), cin, c, w, seed)?);
            if config.batch_renorm {
                norms.push(BatchRenorm::new(&format!("rced.c{i}.brn"), c, config.brn));
            }
            cin = c;
        }
        let out = Affine::new("rced.out", config.input_dim * cin, config.output_dim, seed)?;
        Ok(Rced {
            config,
            convs,
            norms,
            out,
        })
    }

    /// `[N, span * D]` spliced rows to `[N, D, span]` channels-last maps.
    fn to_maps(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (d, span) = (self.config.input_dim, self.config.span());
        if x.cols() != d * span {
            return Err(Error::shape("rced input", &[x.rows(), d * span], x.shape()));
        }
        let n = x.rows();
        let mut out = Tensor::zeros(&[n, d, span]);
        let od = out.data_mut();
        for s in 0..n {
            let row = x.row(s);
            for c in 0..span {
                for w in 0..d {
                    od[(s * d + w) * span + c] = row[c * d + w];
                }
            }
        }
        Ok(out)
    }

    fn from_maps(&self, m: &Tensor<F>) -> Result<Tensor<F>> {
        let (d, span) = (self.config.input_dim, self.config.span());
        let n = m.shape()[0];
        let mut out = Tensor::zeros(&[n, d * span]);
        let md = m.data();
        for s in 0..n {
            let row = out.row_mut(s);
            for c in 0..span {
                for w in 0..d {
                    row[c * d + w] = md[(s * d + w) * span + c];
                }
            }
        }
        Ok(out)
    }

    pub fn forward_frames(&self, x: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, RcedCache<F>)> {
        let n = x.rows();
        let d = self.config.input_dim;
        let mut h = self.to_maps(x)?;
        let mut cache = RcedCache {
            inputs: Vec::new(),
            norms: Vec::new(),
            acts: Vec::new(),
            flat: Tensor::zeros(&[0]),
        };
        for (i, conv) in self.convs.iter().enumerate() {
            let c = conv.out_channels();
            let mut z = conv.forward(&h)?.reshape(&[n * d, c])?;
            cache.inputs.push(h);
            if let Some(norm) = self.norms.get(i) {
                let (zn, nc) = norm.forward(&z, mode)?;
                cache.norms.push(nc);
                z = zn;
            }
            let a = Activation::Relu.forward(&z);
            cache.acts.push(a.clone());
            h = a.reshape(&[n, d, c])?;
        }
        let c = h.shape()[2];
        let flat = h.reshape(&[n, d * c])?;
        let y = self.out.forward(&flat)?;
        cache.flat = flat;
        Ok((y, cache))
    }

    pub fn backward_frames(&mut self, cache: &RcedCache<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let n = dy.rows();
        let d = self.config.input_dim;
        let mut g = self.out.backward(&cache.flat, dy)?;
        for i in (0..self.convs.len()).rev() {
            let c = self.convs[i].out_channels();
            g = g.reshape(&[n * d, c])?;
            g = Activation::Relu.backward(&cache.acts[i], &g);
            if let Some(norm) = self.norms.get_mut(i) {
                g = norm.backward(&cache.norms[i], &g)?;
            }
            g = g.reshape(&[n, d, c])?;
            g = self.convs[i].backward(&cache.inputs[i], &g)?;
        }
        self.from_maps(&g)
    }

    pub fn update_running(&mut self, cache: &RcedCache<F>) {
        for (norm, c) in self.norms.iter_mut().zip(&cache.norms) {
            norm.update_running(c);
        }
    }

    pub fn buffers(&self) -> Vec<(String, &Tensor<F>)> {
        brn_buffers(&self.norms)
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        brn_buffers_mut(&mut self.norms)
    }
}

impl<F: Real> Parameterized<F> for Rced<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        let mut v = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            v.extend(c.params());
            if let Some(n) = self.norms.get(i) {
                v.extend(n.params());
            }
        }
        v.extend(self.out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        let mut v = Vec::new();
        let mut norms = self.norms.iter_mut();
        for c in self.convs.iter_mut() {
            v.extend(c.params_mut());
            if let Some(n) = norms.next() {
                v.extend(n.params_mut());
            }
        }
        v.extend(self.out.params_mut());
        v
    }
}
