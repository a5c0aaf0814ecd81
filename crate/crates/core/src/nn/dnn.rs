use serde::{Deserialize, Serialize};

use super::brn::{BatchRenorm, BrnCache, BrnConfig, Mode};
use super::layers::{Activation, Affine};
use super::seq::DEFAULT_CONTEXT;
use crate::error::{Error, Result};
use crate::numeric::{Parameter, Parameterized, Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DnnConfig {
    /// Per-frame feature width before context splicing.
    pub input_dim: usize,
    pub output_dim: usize,
    pub context: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub batch_renorm: bool,
    #[serde(default)]
    pub brn: BrnConfig,
}

impl Default for DnnConfig {
    fn default() -> Self {
        DnnConfig {
            input_dim: 257,
            output_dim: 40,
            context: DEFAULT_CONTEXT,
            hidden_layers: 4,
            hidden_units: 1024,
            batch_renorm: true,
            brn: BrnConfig::default(),
        }
    }
}

impl DnnConfig {
    pub fn spliced_dim(&self) -> usize {
        self.input_dim * (2 * self.context + 1)
    }
}

/// Feed-forward ReLU network over spliced frames with a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Dnn<F: Real = f32> {
    pub config: DnnConfig,
    pub hidden: Vec<Affine<F>>,
    pub norms: Vec<BatchRenorm<F>>,
    pub out: Affine<F>,
}

#[derive(Clone, Debug)]
pub struct DnnCache<F: Real> {
    inputs: Vec<Tensor<F>>,
    norms: Vec<BrnCache<F>>,
    acts: Vec<Tensor<F>>,
}

impl<F: Real> Dnn<F> {
    pub fn new(config: DnnConfig, seed: u64) -> Result<Self> {
        if config.input_dim == 0 || config.output_dim == 0 || config.hidden_units == 0 {
            return Err(Error::Config("dnn dimensions must be positive".into()));
        }
        let mut hidden = Vec::new();
        let mut norms = Vec::new();
        let mut width = config.spliced_dim();
        for i in 0..config.hidden_layers {
            hidden.push(Affine::new(&format!("dnn.h{i}"), width, config.hidden_units, seed)?);
            if config.batch_renorm {
                norms.push(BatchRenorm::new(
                    &format!("dnn.h{i}.brn"),
                    config.hidden_units,
                    config.brn,
                ));
            }
            width = config.hidden_units;
        }
        let out = Affine::new("dnn.out", width, config.output_dim, seed)?;
        Ok(Dnn {
            config,
            hidden,
            norms,
            out,
        })
    }

    pub fn forward_frames(&self, x: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, DnnCache<F>)> {
        let mut cache = DnnCache {
            inputs: Vec::new(),
            norms: Vec::new(),
            acts: Vec::new(),
        };
        let mut h = x.clone();
        for (i, layer) in self.hidden.iter().enumerate() {
            let mut z = layer.forward(&h)?;
            cache.inputs.push(h);
            if let Some(norm) = self.norms.get(i) {
                let (zn, nc) = norm.forward(&z, mode)?;
                cache.norms.push(nc);
                z = zn;
            }
            let a = Activation::Relu.forward(&z);
            cache.acts.push(a.clone());
            h = a;
        }
        let y = self.out.forward(&h)?;
        cache.inputs.push(h);
        Ok((y, cache))
    }

    pub fn backward_frames(&mut self, cache: &DnnCache<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let n = self.hidden.len();
        let mut d = self.out.backward(&cache.inputs[n], dy)?;
        for i in (0..n).rev() {
            d = Activation::Relu.backward(&cache.acts[i], &d);
            if let Some(norm) = self.norms.get_mut(i) {
                d = norm.backward(&cache.norms[i], &d)?;
            }
            d = self.hidden[i].backward(&cache.inputs[i], &d)?;
        }
        Ok(d)
    }

    pub fn update_running(&mut self, cache: &DnnCache<F>) {
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

pub(crate) fn brn_buffers<F: Real>(norms: &[BatchRenorm<F>]) -> Vec<(String, &Tensor<F>)> {
    norms
        .iter()
        .flat_map(|n| {
            let [m, v] = n.buffer_names();
            [(m, &n.running_mean), (v, &n.running_var)]
        })
        .collect()
}

pub(crate) fn brn_buffers_mut<F: Real>(norms: &mut [BatchRenorm<F>]) -> Vec<(String, &mut Tensor<F>)> {
    norms
        .iter_mut()
        .flat_map(|n| {
            let [m, v] = n.buffer_names();
            [(m, &mut n.running_mean), (v, &mut n.running_var)]
        })
        .collect()
}

impl<F: Real> Parameterized<F> for Dnn<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        let mut v = Vec::new();
        for (i, l) in self.hidden.iter().enumerate() {
            v.extend(l.params());
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
        for l in self.hidden.iter_mut() {
            v.extend(l.params_mut());
            if let Some(n) = norms.next() {
                v.extend(n.params_mut());
            }
        }
        v.extend(self.out.params_mut());
        v
    }
}
