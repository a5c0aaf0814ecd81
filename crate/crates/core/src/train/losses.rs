use crate::error::{Error, Result};
use crate::numeric::{Real, Tensor};

/// Mean squared error over the valid rows, with its gradient with respect to
/// `pred`. Rows where `mask` is false contribute nothing to either.
pub fn mse_loss<F: Real>(pred: &Tensor<F>, target: &Tensor<F>, mask: Option<&[bool]>) -> Result<(f64, Tensor<F>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse operands", target.shape(), pred.shape()));
    }
    let (rows, cols) = (pred.rows(), pred.cols());
    if let Some(m) = mask {
        if m.len() != rows {
            return Err(Error::shape("mse mask", &[rows], &[m.len()]));
        }
    }
    let valid = |r: usize| mask.is_none_or(|m| m[r]);
    let n_rows = (0..rows).filter(|&r| valid(r)).count();
    if n_rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("mse over an empty mask".into()));
    }
    let n = (n_rows * cols) as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let scale = F::from_f64(2.0 / n);
    let mut sum = 0.0f64;
    for r in 0..rows {
        if !valid(r) {
            continue;
        }
        let (p, t) = (pred.row(r), target.row(r));
        let g = grad.row_mut(r);
        for j in 0..cols {
            let d = p[j] - t[j];
            sum += d.as_f64() * d.as_f64();
            g[j] = scale * d;
        }
    }
    Ok((sum / n, grad))
}

/// Discriminator objective for one real and one generated score:
/// `1/2 (d_real - 1)^2 + 1/2 d_fake^2`.
pub fn d_loss(d_real: f64, d_fake: f64) -> f64 {
    0.5 * (d_real - 1.0).powi(2) + 0.5 * d_fake.powi(2)
}

/// Generator objective: `1/2 (d_fake - 1)^2 + 1/2 lambda mse`.
pub fn g_loss(d_fake: f64, mse: f64, lambda: f64) -> f64 {
    0.5 * (d_fake - 1.0).powi(2) + 0.5 * lambda * mse
}

/// [`g_loss`] with the error term computed from predicted and target features.
pub fn g_loss_from<F: Real>(
    d_fake: f64,
    pred: &Tensor<F>,
    target: &Tensor<F>,
    mask: Option<&[bool]>,
    lambda: f64,
) -> Result<f64> {
    let (mse, _) = mse_loss(pred, target, mask)?;
    Ok(g_loss(d_fake, mse, lambda))
}

/// Batch discriminator loss: the mean over utterances of [`d_loss`].
/// Returns the loss and its derivatives with respect to each score.
pub fn d_loss_batch(real: &[f64], fake: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "score batches of {} real and {} generated utterances",
            real.len(),
            fake.len()
        )));
    }
    let b = real.len() as f64;
    let loss = real.iter().zip(fake).map(|(&r, &f)| d_loss(r, f)).sum::<f64>() / b;
    let dr = real.iter().map(|&r| (r - 1.0) / b).collect();
    let df = fake.iter().map(|&f| f / b).collect();
    Ok((loss, dr, df))
}

/// Batch adversarial generator term: mean over utterances of
/// `1/2 (d_fake - 1)^2`, with derivatives.
pub fn g_adv_batch(fake: &[f64]) -> Result<(f64, Vec<f64>)> {
    if fake.is_empty() {
        return Err(Error::InvalidArgument("empty score batch".into()));
    }
    let b = fake.len() as f64;
    let loss = fake.iter().map(|&f| 0.5 * (f - 1.0).powi(2)).sum::<f64>() / b;
    Ok((loss, fake.iter().map(|&f| (f - 1.0) / b).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        assert_eq!(d_loss(1.0, 0.0), 0.0);
        assert_eq!(d_loss(0.5, 0.5), 0.25);
        assert_eq!(g_loss(1.0, 0.0, 200.0), 0.0);
        assert_eq!(g_loss(0.0, 0.01, 200.0), 1.5);
        assert_eq!(g_loss(0.3, 123.0, 0.0), 0.5 * 0.7 * 0.7);
    }

    #[test]
    fn mse_examples() {
        let p = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(mse_loss(&p, &p, None).unwrap().0, 0.0);
        let mut q = p.clone();
        q.data_mut().iter_mut().for_each(|v| *v += 0.5);
        assert!((mse_loss(&q, &p, None).unwrap().0 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn masked_rows_are_ignored() {
        let p = Tensor::<f64>::from_vec(&[3, 1], vec![1.0, 5.0, 100.0]).unwrap();
        let t = Tensor::<f64>::from_vec(&[3, 1], vec![0.0, 5.0, 0.0]).unwrap();
        let (l, g) = mse_loss(&p, &t, Some(&[true, true, false])).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g.data()[2], 0.0);
        assert!(mse_loss(&p, &t, Some(&[false, false, false])).is_err());
    }

    #[test]
    fn batch_losses_average_per_utterance_forms() {
        let (l, dr, df) = d_loss_batch(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(dr, vec![0.0, -0.5]);
        assert_eq!(df, vec![0.0, 0.5]);
        let (l, d) = g_adv_batch(&[1.0, 0.0]).unwrap();
        assert_eq!(l, 0.25);
        assert_eq!(d, vec![0.0, -0.5]);
    }
}
