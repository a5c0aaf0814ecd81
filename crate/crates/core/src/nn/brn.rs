use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Parameter, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrnConfig {
    pub r_max: f64,
    pub d_max: f64,
    pub momentum: f64,
    pub epsilon: f64,
}

impl Default for BrnConfig {
    fn default() -> Self {
        BrnConfig {
            r_max: 3.0,
            d_max: 5.0,
            momentum: 0.99,
            epsilon: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch renormalization over the rows of a 2-D view, per column.
///
/// Training mode normalizes with batch statistics and corrects towards the
/// running statistics with `r` and `d`, which are held constant in the
/// backward pass. Eval mode is a fixed per-column affine map.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchRenorm<F: Real = f32> {
    pub gamma: Parameter<F>,
    pub beta: Parameter<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
    pub config: BrnConfig,
}

#[derive(Clone, Debug)]
pub enum BrnCache<F: Real> {
    Train {
        xhat_raw: Tensor<F>,
        xhat: Tensor<F>,
        inv_std: Vec<F>,
        r: Vec<F>,
        batch_mean: Vec<f64>,
        batch_var: Vec<f64>,
    },
    Eval {
        xhat: Tensor<F>,
        inv_std: Vec<F>,
    },
}

impl<F: Real> BatchRenorm<F> {
    pub fn new(name: &str, dim: usize, config: BrnConfig) -> Self {
        BatchRenorm {
            gamma: Parameter::new(format!("{name}.gamma"), Tensor::full(&[dim], F::one())),
            beta: Parameter::zeros(format!("{name}.beta"), &[dim]),
            running_mean: Tensor::zeros(&[dim]),
            running_var: Tensor::full(&[dim], F::one()),
            config,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn buffer_names(&self) -> [String; 2] {
        let prefix = self.gamma.name.trim_end_matches(".gamma");
        [format!("{prefix}.running_mean"), format!("{prefix}.running_var")]
    }

    pub fn forward(&self, x: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, BrnCache<F>)> {
        let d = self.dim();
        if x.cols() != d {
            return Err(Error::shape("batch renorm input", &[x.rows(), d], x.shape()));
        }
        let n = x.rows();
        let eps = self.config.epsilon;
        match mode {
            Mode::Eval => {
                let inv_std: Vec<F> = self
                    .running_var
                    .data()
                    .iter()
                    .map(|&v| F::from_f64(1.0 / (v.as_f64() + eps).sqrt()))
                    .collect();
                let mut xhat = x.clone();
                let mean = self.running_mean.data();
                for row in xhat.data_mut().chunks_mut(d) {
                    for j in 0..d {
                        row[j] = (row[j] - mean[j]) * inv_std[j];
                    }
                }
                let y = self.scale_shift(&xhat);
                Ok((y, BrnCache::Eval { xhat, inv_std }))
            }
            Mode::Train => {
                if n < 2 {
                    return Err(Error::InvalidArgument(
                        "batch renorm needs at least two rows in training mode".into(),
                    ));
                }
                let mut mean = vec![0.0f64; d];
                for row in x.data().chunks(d) {
                    for j in 0..d {
                        mean[j] += row[j].as_f64();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0f64; d];
                for row in x.data().chunks(d) {
                    for j in 0..d {
                        let c = row[j].as_f64() - mean[j];
                        var[j] += c * c;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                let (rmax, dmax) = (self.config.r_max, self.config.d_max);
                let mut inv_std = Vec::with_capacity(d);
                let mut r = Vec::with_capacity(d);
                let mut dd = Vec::with_capacity(d);
                for j in 0..d {
                    let sb = (var[j] + eps).sqrt();
                    let sr = (self.running_var.data()[j].as_f64() + eps).sqrt();
                    let mr = self.running_mean.data()[j].as_f64();
                    inv_std.push(F::from_f64(1.0 / sb));
                    r.push(F::from_f64((sb / sr).clamp(1.0 / rmax, rmax)));
                    dd.push(F::from_f64(((mean[j] - mr) / sr).clamp(-dmax, dmax)));
                }
                let fmean: Vec<F> = mean.iter().map(|&m| F::from_f64(m)).collect();
                let mut xhat_raw = x.clone();
                for row in xhat_raw.data_mut().chunks_mut(d) {
                    for j in 0..d {
                        row[j] = (row[j] - fmean[j]) * inv_std[j];
                    }
                }
                let mut xhat = xhat_raw.clone();
                for row in xhat.data_mut().chunks_mut(d) {
                    for j in 0..d {
                        row[j] = row[j] * r[j] + dd[j];
                    }
                }
                let y = self.scale_shift(&xhat);
                Ok((
                    y,
                    BrnCache::Train {
                        xhat_raw,
                        xhat,
                        inv_std,
                        r,
                        batch_mean: mean,
                        batch_var: var,
                    },
                ))
            }
        }
    }

    fn scale_shift(&self, xhat: &Tensor<F>) -> Tensor<F> {
        let d = self.dim();
        let g = self.gamma.value.data();
        let b = self.beta.value.data();
        let mut y = xhat.clone();
        for row in y.data_mut().chunks_mut(d) {
            for j in 0..d {
                row[j] = row[j] * g[j] + b[j];
            }
        }
        y
    }

    /// Moves the running statistics towards the batch statistics of a
    /// training-mode forward pass.
    pub fn update_running(&mut self, cache: &BrnCache<F>) {
        if let BrnCache::Train {
            batch_mean, batch_var, ..
        } = cache
        {
            let a = 1.0 - self.config.momentum;
            for (m, &bm) in self.running_mean.data_mut().iter_mut().zip(batch_mean) {
                *m = F::from_f64(m.as_f64() + a * (bm - m.as_f64()));
            }
            for (v, &bv) in self.running_var.data_mut().iter_mut().zip(batch_var) {
                *v = F::from_f64(v.as_f64() + a * (bv - v.as_f64()));
            }
        }
    }

    pub fn backward(&mut self, cache: &BrnCache<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let d = self.dim();
        let n = dy.rows();
        let g = self.gamma.value.data().to_vec();
        let xhat = match cache {
            BrnCache::Train { xhat, .. } | BrnCache::Eval { xhat, .. } => xhat,
        };
        {
            let gg = self.gamma.grad.data_mut();
            for (row, xr) in dy.data().chunks(d).zip(xhat.data().chunks(d)) {
                for j in 0..d {
                    gg[j] += row[j] * xr[j];
                }
            }
        }
        dy.accumulate_col_sums(self.beta.grad.data_mut());
        let mut dx = dy.clone();
        match cache {
            BrnCache::Eval { inv_std, .. } => {
                for row in dx.data_mut().chunks_mut(d) {
                    for j in 0..d {
                        row[j] *= g[j] * inv_std[j];
                    }
                }
            }
            BrnCache::Train {
                xhat_raw, inv_std, r, ..
            } => {
                // dxr = dy * gamma * r, then the usual batch-norm backward on xhat_raw.
                for row in dx.data_mut().chunks_mut(d) {
                    for j in 0..d {
                        row[j] *= g[j] * r[j];
                    }
                }
                let mut mean_d = vec![F::zero(); d];
                let mut mean_dx = vec![F::zero(); d];
                for (row, xr) in dx.data().chunks(d).zip(xhat_raw.data().chunks(d)) {
                    for j in 0..d {
                        mean_d[j] += row[j];
                        mean_dx[j] += row[j] * xr[j];
                    }
                }
                let inv_n = F::from_f64(1.0 / n as f64);
                mean_d.iter_mut().for_each(|v| *v *= inv_n);
                mean_dx.iter_mut().for_each(|v| *v *= inv_n);
                for (row, xr) in dx.data_mut().chunks_mut(d).zip(xhat_raw.data().chunks(d)) {
                    for j in 0..d {
                        row[j] = inv_std[j] * (row[j] - mean_d[j] - xr[j] * mean_dx[j]);
                    }
                }
            }
        }
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
