use super::param::Parameter;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F = f32> {
    pub m: Tensor<F>,
    pub v: Tensor<F>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<F: Real> AdamState<F> {
    pub fn new(shape: &[usize], cfg: AdamConfig) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }
}

/// Applies one bias-corrected Adam update to `param` using its accumulated gradient.
pub fn adam_step<F: Real>(param: &mut Parameter<F>, state: &mut AdamState<F>, lr: f64) -> Result<()> {
    if state.m.shape() != param.value.shape() || param.grad.shape() != param.value.shape() {
        return Err(Error::shape(
            format!("adam state for {}", param.name),
            param.value.shape(),
            state.m.shape(),
        ));
    }
    param.grad.ensure_finite(&format!("gradient of {}", param.name))?;
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let (fb1, fb2) = (F::from_f64(b1), F::from_f64(b2));
    let (gb1, gb2) = (F::from_f64(1.0 - b1), F::from_f64(1.0 - b2));
    let step = F::from_f64(lr / bc1);
    let inv_bc2 = F::from_f64(1.0 / bc2);
    let eps = F::from_f64(state.epsilon);
    let w = param.value.data_mut();
    let g = param.grad.data();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for i in 0..w.len() {
        m[i] = fb1 * m[i] + gb1 * g[i];
        v[i] = fb2 * v[i] + gb2 * g[i] * g[i];
        w[i] -= step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
    }
    Ok(())
}

/// Adam over an ordered parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<F = f32> {
    pub config: AdamConfig,
    pub states: Vec<AdamState<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(params: &[&Parameter<F>], config: AdamConfig) -> Self {
        Adam {
            config,
            states: params.iter().map(|p| AdamState::new(p.value.shape(), config)).collect(),
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }

    pub fn step(&mut self, params: &mut [&mut Parameter<F>], lr: f64) -> Result<()> {
        if params.len() != self.states.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} parameters, got {}",
                self.states.len(),
                params.len()
            )));
        }
        // Reject the whole step before touching anything.
        for p in params.iter() {
            p.grad.ensure_finite(&format!("gradient of {}", p.name))?;
        }
        for (p, s) in params.iter_mut().zip(self.states.iter_mut()) {
            adam_step(p, s, lr)?;
        }
        Ok(())
    }
}
