use sha2::{Digest, Sha256};

use super::tensor::{Real, Tensor};

/// A trainable tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<F = f32> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
}

impl<F: Real> Parameter<F> {
    pub fn new(name: impl Into<String>, value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, Tensor::zeros(shape))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn cast<G: Real>(&self) -> Parameter<G> {
        Parameter {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.cast(),
        }
    }
}

/// Anything that owns an ordered list of named parameters.
///
/// The order is stable for the lifetime of the object; optimizers rely on it.
pub trait Parameterized<F: Real> {
    fn params(&self) -> Vec<&Parameter<F>>;
    fn params_mut(&mut self) -> Vec<&mut Parameter<F>>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<F: Real>(params: &mut [&mut Parameter<F>], max_norm: f64) -> f64 {
    let norm = params.iter().map(|p| p.grad.sum_sq()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = F::from_f64(max_norm / norm);
        for p in params.iter_mut() {
            p.grad.scale(s);
        }
    }
    norm
}

/// Content hash over parameter names, shapes and values.
pub fn param_hash<F: Real>(params: &[&Parameter<F>]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.name.as_bytes());
        for &d in p.value.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            h.update(v.as_f64().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_bounds_global_norm() {
        let mut a = Parameter::<f64>::zeros("a", &[2]);
        let mut b = Parameter::<f64>::zeros("b", &[1]);
        a.grad.data_mut().copy_from_slice(&[3.0, 0.0]);
        b.grad.data_mut()[0] = 4.0;
        let norm = clip_grad_norm(&mut [&mut a, &mut b], 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let after = (a.grad.sum_sq() + b.grad.sum_sq()).sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_leaves_small_gradients() {
        let mut a = Parameter::<f64>::zeros("a", &[2]);
        a.grad.data_mut().copy_from_slice(&[0.3, 0.4]);
        clip_grad_norm(&mut [&mut a], 5.0);
        assert_eq!(a.grad.data(), &[0.3, 0.4]);
    }

    #[test]
    fn hash_changes_with_values() {
        let a = Parameter::<f32>::zeros("a", &[3]);
        let mut b = a.clone();
        assert_eq!(param_hash(&[&a]), param_hash(&[&b]));
        b.value.data_mut()[1] = 1e-7;
        assert_ne!(param_hash(&[&a]), param_hash(&[&b]));
    }
}
