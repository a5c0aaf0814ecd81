use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CheckOutcome;
use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::error::Result;
use crate::reverb::{convolve_rir, fft_convolve_truncated, generate_rir, schroeder_t60, Rir, RoomCategory};

pub const CONVOLUTION_TOL: f64 = 1e-6;
pub const T60_REL_TOL: f64 = 0.2;
pub const T60_RIRS: u64 = 20;

fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn quadratic(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| (0..h.len().min(n + 1)).map(|k| h[k] * x[n - k]).sum())
        .collect()
}

fn delta_identity() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Waveform::new(random(4000, &mut rng), SAMPLE_RATE);
    let delta = Rir {
        samples: vec![1.0, 0.0, 0.0, 0.0],
        t60: 0.1,
        category: RoomCategory::Small,
        seed: 0,
    };
    let y = convolve_rir(&x, &delta);
    CheckOutcome::exact(
        "reverb/delta-identity",
        y == x,
        "unit impulse reproduces the input bit for bit",
    )
}

fn fft_vs_quadratic() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let x = random(200, &mut rng);
        let h = random(50, &mut rng);
        for (a, b) in fft_convolve_truncated(&x, &h).iter().zip(quadratic(&x, &h)) {
            worst = worst.max((a - b).abs());
        }
    }
    CheckOutcome::at_most(
        "reverb/fft-convolution",
        worst,
        CONVOLUTION_TOL,
        "max |fft - direct|, 200 x 50",
    )
}

fn schroeder() -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for seed in 0..T60_RIRS {
        let t60 = 0.3 + 0.5 * seed as f64 / (T60_RIRS - 1) as f64;
        let len = (t60 * SAMPLE_RATE as f64).ceil() as usize;
        let rir = generate_rir(t60, len, RoomCategory::for_t60(t60), 1000 + seed)?;
        let err = match schroeder_t60(&rir.samples, SAMPLE_RATE) {
            Some(est) => (est / t60 - 1.0).abs(),
            None => f64::INFINITY,
        };
        if err > worst {
            worst = err;
            detail = format!("worst at requested {t60:.3} s (seed {})", 1000 + seed);
        }
    }
    Ok(CheckOutcome::at_most(
        "reverb/schroeder-t60",
        worst,
        T60_REL_TOL,
        detail,
    ))
}

/// Convolution and RIR checks.
pub fn reverb_suite() -> Vec<CheckOutcome> {
    vec![
        delta_identity(),
        fft_vs_quadratic(),
        schroeder().unwrap_or_else(|e| CheckOutcome::failed("reverb/schroeder-t60", e.to_string())),
    ]
}
