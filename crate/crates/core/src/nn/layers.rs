use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{derive_seed, gemm_acc, xavier_init, Parameter, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(F::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<F: Real>(self, y: F) -> F {
        match self {
            Activation::Linear => F::one(),
            Activation::Relu => {
                if y > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Sigmoid => y * (F::one() - y),
            Activation::Tanh => F::one() - y * y,
        }
    }

    pub fn forward<F: Real>(self, x: &Tensor<F>) -> Tensor<F> {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = self.apply(*v));
        y
    }

    /// `dx = dy * f'(x)` given the forward output `y`.
    pub fn backward<F: Real>(self, y: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
        let mut dx = dy.clone();
        for (d, &o) in dx.data_mut().iter_mut().zip(y.data()) {
            *d *= self.derivative_from_output(o);
        }
        dx
    }
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// `y = x W^T + b` with `W` of shape `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine<F: Real = f32> {
    pub w: Parameter<F>,
    pub b: Parameter<F>,
}

impl<F: Real> Affine<F> {
    pub fn new(name: &str, input: usize, output: usize, seed: u64) -> Result<Self> {
        let wname = format!("{name}.w");
        let w = xavier_init(&[output, input], derive_seed(seed, &wname))?;
        Ok(Affine {
            w: Parameter::new(wname, w),
            b: Parameter::zeros(format!("{name}.b"), &[output]),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                format!("input of {}", self.w.name),
                &[x.rows(), self.input_dim()],
                x.shape(),
            ));
        }
        let mut y = x.matmul(false, &self.w.value, true)?;
        y.add_row_vector(self.b.value.data());
        Ok(y)
    }

    /// Accumulates parameter gradients; returns `dx`.
    pub fn backward(&mut self, x: &Tensor<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        gemm_acc(&mut self.w.grad, F::one(), dy, true, x, false)?;
        dy.accumulate_col_sums(self.b.grad.data_mut());
        dy.matmul(false, &self.w.value, false)
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.w, &mut self.b]
    }
}
