use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::param::Parameterized;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: usize,
    /// Parameter name and flat index of the worst probe.
    pub worst: Option<(String, usize)>,
}

/// Compares analytic gradients against central differences
/// `(f(w + eps) - f(w - eps)) / 2 eps` on randomly chosen coordinates.
///
/// `loss` must compute the scalar loss and accumulate gradients into the
/// model's parameters; gradients are zeroed before every call. Every parameter
/// tensor receives at least one probe in addition to `probe_count` uniform ones.
pub fn gradient_check<M, L>(
    model: &mut M,
    mut loss: L,
    probe_count: usize,
    fd_epsilon: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    M: Parameterized<f64>,
    L: FnMut(&mut M) -> Result<f64>,
{
    model.zero_grads();
    let base = loss(model)?;
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.data().to_vec()).collect();
    model.zero_grads();
    let again = loss(model)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic {
            first: base,
            second: again,
        });
    }

    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("model has no parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes: Vec<(usize, usize)> = Vec::with_capacity(probe_count + sizes.len());
    for (pi, &n) in sizes.iter().enumerate() {
        if n > 0 {
            probes.push((pi, rng.random_range(0..n)));
        }
    }
    for _ in 0..probe_count {
        let mut flat = rng.random_range(0..total);
        let mut pi = 0;
        while flat >= sizes[pi] {
            flat -= sizes[pi];
            pi += 1;
        }
        probes.push((pi, flat));
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        probes: probes.len(),
        worst: None,
    };
    for (pi, idx) in probes {
        let orig = model.params()[pi].value.data()[idx];
        model.params_mut()[pi].value.data_mut()[idx] = orig + fd_epsilon;
        model.zero_grads();
        let plus = loss(model)?;
        model.params_mut()[pi].value.data_mut()[idx] = orig - fd_epsilon;
        model.zero_grads();
        let minus = loss(model)?;
        model.params_mut()[pi].value.data_mut()[idx] = orig;

        let numeric = (plus - minus) / (2.0 * fd_epsilon);
        let a = analytic[pi][idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        let rel = if rel.is_nan() { f64::INFINITY } else { rel };
        if rel >= report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((model.params()[pi].name.clone(), idx));
        }
    }
    model.zero_grads();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Parameter, Tensor};

    struct Quad {
        w: Parameter<f64>,
    }

    impl Parameterized<f64> for Quad {
        fn params(&self) -> Vec<&Parameter<f64>> {
            vec![&self.w]
        }
        fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
            vec![&mut self.w]
        }
    }

    fn quad_loss(m: &mut Quad) -> Result<f64> {
        let w = m.w.value.data().to_vec();
        m.w.grad.data_mut().copy_from_slice(&w);
        Ok(0.5 * w.iter().map(|v| v * v).sum::<f64>())
    }

    #[test]
    fn quadratic_is_exact() {
        let w = Tensor::from_vec(&[20], (0..20).map(|i| (i as f64 - 9.5) * 0.3).collect()).unwrap();
        let mut m = Quad {
            w: Parameter::new("w", w),
        };
        let r = gradient_check(&mut m, quad_loss, 50, 1e-4, 1).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.probes, 51);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let w = Tensor::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut m = Quad {
            w: Parameter::new("w", w),
        };
        let r = gradient_check(
            &mut m,
            |m: &mut Quad| {
                let l = quad_loss(m)?;
                m.w.grad.scale(1.1);
                Ok(l)
            },
            10,
            1e-4,
            1,
        )
        .unwrap();
        assert!(r.max_rel_error > 0.05);
    }

    #[test]
    fn nondeterministic_loss_rejected() {
        let mut m = Quad {
            w: Parameter::new("w", Tensor::zeros(&[2])),
        };
        let mut calls = 0.0;
        let err = gradient_check(
            &mut m,
            |_m: &mut Quad| {
                calls += 1.0;
                Ok(calls)
            },
            4,
            1e-4,
            1,
        );
        assert!(matches!(err, Err(Error::NonDeterministic { .. })));
    }

    #[test]
    fn parameters_restored_after_check() {
        let w = Tensor::from_vec(&[3], vec![0.1, 0.2, 0.3]).unwrap();
        let mut m = Quad {
            w: Parameter::new("w", w.clone()),
        };
        gradient_check(&mut m, quad_loss, 10, 1e-3, 9).unwrap();
        assert_eq!(m.w.value, w);
    }
}
