use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layers::Affine;
use super::lstmp::{LstmpCache, LstmpLayer};
use crate::error::{Error, Result};
use crate::numeric::{Parameter, Parameterized, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Residual {
    #[default]
    #[serde(rename = "none")]
    None,
    /// Each layer's output gets the network input added.
    #[serde(rename = "res-i")]
    Input,
    /// Each layer's output gets that layer's input added.
    #[serde(rename = "res-l")]
    Layer,
}

impl Residual {
    pub fn as_str(&self) -> &'static str {
        match self {
            Residual::None => "none",
            Residual::Input => "res-i",
            Residual::Layer => "res-l",
        }
    }
}

impl fmt::Display for Residual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Residual {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "none" => Ok(Residual::None),
            "res-i" | "resi" => Ok(Residual::Input),
            "res-l" | "resl" => Ok(Residual::Layer),
            other => Err(Error::Config(format!("unknown residual mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: usize,
    pub cells: usize,
    pub proj: usize,
    pub residual: Residual,
}

impl Default for LstmpConfig {
    fn default() -> Self {
        LstmpConfig {
            input_dim: 257,
            output_dim: 40,
            layers: 4,
            cells: 760,
            proj: 257,
            residual: Residual::None,
        }
    }
}

impl LstmpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.cells == 0 || self.proj == 0 {
            return Err(Error::Config("lstm dimensions must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("lstm needs at least one layer".into()));
        }
        if self.residual != Residual::None && self.proj != self.input_dim {
            return Err(Error::Config(format!(
                "{} residual connections need proj ({}) equal to the input width ({})",
                self.residual, self.proj, self.input_dim
            )));
        }
        Ok(())
    }

    /// Total parameters of the stack and its output layer.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut input = self.input_dim;
        for _ in 0..self.layers {
            n += LstmpLayer::<f32>::param_count(input, self.cells, self.proj);
            input = self.proj;
        }
        n + self.proj * self.output_dim + self.output_dim
    }
}

/// Stack of LSTMP layers with optional residual connections and a linear
/// output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmpNet<F: Real = f32> {
    pub config: LstmpConfig,
    pub layers: Vec<LstmpLayer<F>>,
    pub out: Affine<F>,
}

#[derive(Clone, Debug)]
pub struct LstmpNetCache<F: Real> {
    layers: Vec<LstmpCache<F>>,
    top: Tensor<F>,
}

impl<F: Real> LstmpNet<F> {
    pub fn new(prefix: &str, config: LstmpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.layers);
        let mut input = config.input_dim;
        for i in 0..config.layers {
            layers.push(LstmpLayer::new(
                &format!("{prefix}.l{i}"),
                input,
                config.cells,
                config.proj,
                seed,
            )?);
            input = config.proj;
        }
        let out = Affine::new(&format!("{prefix}.out"), config.proj, config.output_dim, seed)?;
        Ok(LstmpNet { config, layers, out })
    }

    /// Output of the last recurrent layer (after residuals), before the
    /// output layer.
    pub fn forward_hidden(&self, x: &Tensor<F>, steps: usize, batch: usize) -> Result<(Tensor<F>, Vec<LstmpCache<F>>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (mut r, c) = layer.forward(&h, steps, batch)?;
            match self.config.residual {
                Residual::None => {}
                Residual::Layer => r.add_assign(&h),
                Residual::Input => r.add_assign(x),
            }
            caches.push(c);
            h = r;
        }
        Ok((h, caches))
    }

    pub fn forward_seq(&self, x: &Tensor<F>, steps: usize, batch: usize) -> Result<(Tensor<F>, LstmpNetCache<F>)> {
        let (top, layers) = self.forward_hidden(x, steps, batch)?;
        let y = self.out.forward(&top)?;
        Ok((y, LstmpNetCache { layers, top }))
    }

    pub fn backward_seq(&mut self, cache: &LstmpNetCache<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let mut d = self.out.backward(&cache.top, dy)?;
        let mut dx_res: Option<Tensor<F>> = None;
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers).rev() {
            let mut dh = layer.backward(c, &d)?;
            match self.config.residual {
                Residual::None => {}
                Residual::Layer => dh.add_assign(&d),
                Residual::Input => match dx_res.as_mut() {
                    Some(acc) => acc.add_assign(&d),
                    None => dx_res = Some(d.clone()),
                },
            }
            d = dh;
        }
        if let Some(acc) = dx_res {
            d.add_assign(&acc);
        }
        Ok(d)
    }
}

impl<F: Real> Parameterized<F> for LstmpNet<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        let mut v: Vec<&Parameter<F>> = self.layers.iter().flat_map(|l| l.params()).collect();
        v.extend(self.out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        let mut v: Vec<&mut Parameter<F>> = self.layers.iter_mut().flat_map(|l| l.params_mut()).collect();
        v.extend(self.out.params_mut());
        v
    }
}
