use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CheckOutcome;
use crate::numeric::Tensor;
use crate::train::{d_loss, d_loss_batch, g_adv_batch, g_loss, g_loss_from};

pub const LOSS_TOL: f64 = 1e-7;
pub const LOSS_SAMPLES: usize = 1000;

/// Closed forms of the least-squares objectives, expanded differently from the
/// trainer's implementation.
fn d_oracle(r: f64, f: f64) -> f64 {
    0.5 * (r * r - 2.0 * r + 1.0) + 0.5 * f * f
}

fn g_adv_oracle(f: f64) -> f64 {
    0.5 * (f * f - 2.0 * f + 1.0)
}

fn mse_oracle(p: &[f64], t: &[f64]) -> f64 {
    p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
}

/// Discriminator and generator losses against their closed forms on random
/// inputs, including the pure adversarial case `lambda = 0`.
pub fn losses_suite() -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let (mut d_err, mut g_err, mut g0_err, mut batch_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut failure = None;
    for _ in 0..LOSS_SAMPLES {
        let r = rng.random_range(-3.0..3.0);
        let f = rng.random_range(-3.0..3.0);
        let lambda = rng.random_range(0.0..400.0);
        let (rows, cols) = (rng.random_range(1..6usize), rng.random_range(1..5usize));
        let p: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
        d_err = d_err.max((d_loss(r, f) - d_oracle(r, f)).abs());
        let pt = Tensor::from_vec(&[rows, cols], p.clone()).expect("sized");
        let tt = Tensor::from_vec(&[rows, cols], t.clone()).expect("sized");
        match (
            g_loss_from(f, &pt, &tt, None, lambda),
            g_loss_from(f, &pt, &tt, None, 0.0),
        ) {
            (Ok(g), Ok(g0)) => {
                let want = g_adv_oracle(f) + 0.5 * lambda * mse_oracle(&p, &t);
                g_err = g_err.max((g - want).abs() / want.abs().max(1.0));
                g0_err = g0_err.max((g0 - g_adv_oracle(f)).abs());
                g0_err = g0_err.max((g_loss(f, 123.0, 0.0) - g_adv_oracle(f)).abs());
            }
            (Err(e), _) | (_, Err(e)) => failure = Some(e.to_string()),
        }
        let n = rng.random_range(1..5usize);
        let reals: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let fakes: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let want_d = reals.iter().zip(&fakes).map(|(&a, &b)| d_oracle(a, b)).sum::<f64>() / n as f64;
        let want_g = fakes.iter().map(|&b| g_adv_oracle(b)).sum::<f64>() / n as f64;
        match (d_loss_batch(&reals, &fakes), g_adv_batch(&fakes)) {
            (Ok((d, _, _)), Ok((g, _))) => {
                batch_err = batch_err.max((d - want_d).abs()).max((g - want_g).abs());
            }
            (Err(e), _) | (_, Err(e)) => failure = Some(e.to_string()),
        }
    }
    if let Some(e) = failure {
        return vec![CheckOutcome::failed("losses/evaluation", e)];
    }
    let n = format!("{LOSS_SAMPLES} random inputs");
    vec![
        CheckOutcome::at_most("losses/d-loss", d_err, LOSS_TOL, n.clone()),
        CheckOutcome::at_most(
            "losses/g-loss",
            g_err,
            LOSS_TOL,
            format!("{n}, relative to max(1, |g|)"),
        ),
        CheckOutcome::at_most(
            "losses/g-loss-lambda-0",
            g0_err,
            LOSS_TOL,
            "reduces to the adversarial term",
        ),
        CheckOutcome::at_most("losses/batch-mean", batch_err, LOSS_TOL, "mean of per-utterance losses"),
    ]
}
