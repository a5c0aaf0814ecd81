use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CheckOutcome;
use crate::dsp::{
    lps, reconstruct, stft, CmvnStats, FeatureKind, FeatureMatrix, FrameConfig, MfccExtractor, Waveform, MEL_HIGH_HZ,
    MEL_LOW_HZ, MFCC_DIM, POWER_FLOOR, SAMPLE_RATE,
};
use crate::error::Result;

pub const ROUND_TRIP_TOL: f64 = 1e-5;
pub const MFCC_FLAT_TOL: f64 = 1e-6;
pub const MFCC_ORACLE_TOL: f64 = 1e-5;
pub const CMVN_MEAN_TOL: f64 = 1e-6;
pub const CMVN_VAR_TOL: f64 = 1e-4;
pub const CMVN_INVERT_TOL: f64 = 1e-6;

fn noise(n: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), SAMPLE_RATE)
}

fn run(name: &str, check: impl FnOnce() -> Result<CheckOutcome>) -> CheckOutcome {
    check().unwrap_or_else(|e| CheckOutcome::failed(name, e.to_string()))
}

fn sine_peak() -> Result<CheckOutcome> {
    let cfg = FrameConfig::default();
    let wave = Waveform::new(
        (0..16_000)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / SAMPLE_RATE as f64).sin())
            .collect(),
        SAMPLE_RATE,
    );
    let spec = stft(&wave, &cfg)?;
    let expected = 1000 * cfg.fft_size / SAMPLE_RATE as usize;
    let misses = (0..spec.frames())
        .filter(|&t| {
            let f = spec.frame(t);
            let arg = (0..f.len())
                .max_by(|&a, &b| f[a].norm().total_cmp(&f[b].norm()))
                .unwrap_or(0);
            arg != expected
        })
        .count();
    Ok(CheckOutcome::exact(
        "dsp/stft-sine-peak",
        misses == 0 && spec.frames() == 98,
        format!("{} frames, {misses} without the peak at bin {expected}", spec.frames()),
    ))
}

fn direct_dft() -> Result<CheckOutcome> {
    let cfg = FrameConfig::default();
    let wave = noise(cfg.frame_len + 3 * cfg.frame_shift, 11);
    let spec = stft(&wave, &cfg)?;
    let window = cfg.window();
    let mut worst = 0.0f64;
    for t in 0..spec.frames() {
        let x: Vec<f64> = (0..cfg.frame_len)
            .map(|i| wave.samples[t * cfg.frame_shift + i] * window[i])
            .collect();
        for (k, got) in spec.frame(t).iter().enumerate() {
            let want: Complex64 = x
                .iter()
                .enumerate()
                .map(|(n, &v)| Complex64::from_polar(v, -2.0 * PI * (k * n) as f64 / cfg.fft_size as f64))
                .sum();
            worst = worst.max((got - want).norm());
        }
    }
    Ok(CheckOutcome::at_most(
        "dsp/stft-direct-dft",
        worst,
        1e-9,
        "max |X - DFT|",
    ))
}

fn lps_floor() -> Result<CheckOutcome> {
    let cfg = FrameConfig::default();
    let spec = stft(&Waveform::new(vec![0.0; 1600], SAMPLE_RATE), &cfg)?;
    let l = lps(&spec)?;
    let floor = POWER_FLOOR.ln();
    let worst = l.data().iter().map(|v| (v - floor).abs()).fold(0.0, f64::max);
    Ok(CheckOutcome::at_most(
        "dsp/lps-floor",
        worst,
        1e-12,
        "silence maps to ln(1e-10)",
    ))
}

fn round_trip() -> Result<CheckOutcome> {
    let cfg = FrameConfig::default();
    let wave = noise(8000, 5);
    let spec = stft(&wave, &cfg)?;
    let out = reconstruct(&lps(&spec)?, &spec, &cfg)?;
    let (lo, hi) = (cfg.frame_len, out.len().saturating_sub(cfg.frame_len));
    let (mut num, mut den) = (0.0, 0.0);
    for i in lo..hi {
        num += (out.samples[i] - wave.samples[i]).powi(2);
        den += wave.samples[i].powi(2);
    }
    let rel = (num / den).sqrt();
    Ok(CheckOutcome::at_most(
        "dsp/overlap-add-round-trip",
        rel,
        ROUND_TRIP_TOL,
        "interior relative L2 error",
    ))
}

fn mfcc_flat() -> Result<CheckOutcome> {
    let cfg = FrameConfig::default();
    let m = MfccExtractor::new(&cfg)?;
    let c = m.from_power(&vec![3.0; cfg.bins()], 1)?;
    let worst = c.row(0)[1..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(CheckOutcome::at_most(
        "dsp/mfcc-flat-spectrum",
        worst,
        MFCC_FLAT_TOL,
        "max |Ci|, i >= 1",
    ))
}

/// Step-by-step MFCC of one power frame, written without the extractor.
fn mfcc_oracle(power: &[f64], cfg: &FrameConfig) -> Vec<f64> {
    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let (lo, hi) = (mel(MEL_LOW_HZ), mel(MEL_HIGH_HZ));
    let edges: Vec<f64> = (0..MFCC_DIM + 2)
        .map(|j| lo + (hi - lo) * j as f64 / (MFCC_DIM + 1) as f64)
        .collect();
    let hz_per_bin = cfg.sample_rate as f64 / cfg.fft_size as f64;
    let log_mel: Vec<f64> = (0..MFCC_DIM)
        .map(|j| {
            let (l, c, r) = (edges[j], edges[j + 1], edges[j + 2]);
            let mut w: Vec<f64> = (0..power.len())
                .map(|k| {
                    let m = mel(k as f64 * hz_per_bin);
                    if m > l && m <= c {
                        (m - l) / (c - l)
                    } else if m > c && m < r {
                        (r - m) / (r - c)
                    } else {
                        0.0
                    }
                })
                .collect();
            let area: f64 = w.iter().sum();
            if area > 0.0 {
                w.iter_mut().for_each(|v| *v /= area);
            } else {
                let k = (inv(c) / hz_per_bin).round() as usize;
                w[k.min(power.len() - 1)] = 1.0;
            }
            let e: f64 = w.iter().zip(power).map(|(a, b)| a * b).sum();
            e.max(POWER_FLOOR).ln()
        })
        .collect();
    let n = MFCC_DIM as f64;
    (0..MFCC_DIM)
        .map(|i| {
            let scale = if i == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * log_mel
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * i as f64 * (2 * j + 1) as f64 / (2.0 * n)).cos())
                    .sum::<f64>()
        })
        .collect()
}

fn mfcc_brute_force() -> Result<CheckOutcome> {
    let cfg = FrameConfig::default();
    let m = MfccExtractor::new(&cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for _ in 0..8 {
        let power: Vec<f64> = (0..cfg.bins()).map(|_| rng.random_range(1e-6..10.0)).collect();
        let got = m.from_power(&power, 1)?;
        for (a, b) in got.row(0).iter().zip(mfcc_oracle(&power, &cfg)) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(CheckOutcome::at_most(
        "dsp/mfcc-oracle",
        worst,
        MFCC_ORACLE_TOL,
        "max |C - oracle| over 8 frames",
    ))
}

fn cmvn() -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let dim = MFCC_DIM;
    let utts: Vec<FeatureMatrix> = (0..4)
        .map(|u| {
            let rows = 20 + 7 * u;
            let data = (0..rows * dim)
                .map(|i| match i % dim {
                    d if d == dim - 1 => 2.5,
                    d => 3.0 * d as f64 + (1.0 + d as f64) * rng.random_range(-1.0..1.0),
                })
                .collect();
            FeatureMatrix::new(FeatureKind::Mfcc, rows, data)
        })
        .collect::<Result<_>>()?;
    let stats = CmvnStats::fit(utts.iter())?;
    let normalized: Vec<FeatureMatrix> = utts.iter().map(|u| stats.apply(u)).collect::<Result<_>>()?;
    let n = normalized.iter().map(|u| u.rows()).sum::<usize>() as f64;
    let column = |d: usize| {
        normalized
            .iter()
            .flat_map(move |u| (0..u.rows()).map(move |r| u.row(r)[d]))
    };
    let (mut mean_err, mut var_err) = (0.0f64, 0.0f64);
    for d in 0..dim - 1 {
        let mean = column(d).sum::<f64>() / n;
        let var = column(d).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        mean_err = mean_err.max(mean.abs());
        var_err = var_err.max((var - 1.0).abs());
    }
    let const_err = column(dim - 1).map(f64::abs).fold(0.0, f64::max);
    let mut inv_err = 0.0f64;
    for (u, z) in utts.iter().zip(&normalized) {
        let back = stats.invert(z)?;
        for (a, b) in back.data().iter().zip(u.data()) {
            inv_err = inv_err.max((a - b).abs());
        }
    }
    Ok(vec![
        CheckOutcome::at_most("dsp/cmvn-mean", mean_err, CMVN_MEAN_TOL, "max |mean| after fit+apply"),
        CheckOutcome::at_most(
            "dsp/cmvn-variance",
            var_err,
            CMVN_VAR_TOL,
            "max |var - 1| after fit+apply",
        ),
        CheckOutcome::at_most("dsp/cmvn-invert", inv_err, CMVN_INVERT_TOL, "apply then invert"),
        CheckOutcome::at_most(
            "dsp/cmvn-constant-dim",
            const_err,
            0.0,
            "floored dimension maps to zero",
        ),
    ])
}

/// STFT, LPS, MFCC, CMVN and overlap-add checks against direct oracles.
pub fn dsp_suite() -> Vec<CheckOutcome> {
    let mut out = vec![
        run("dsp/stft-sine-peak", sine_peak),
        run("dsp/stft-direct-dft", direct_dft),
        run("dsp/lps-floor", lps_floor),
        run("dsp/overlap-add-round-trip", round_trip),
        run("dsp/mfcc-flat-spectrum", mfcc_flat),
        run("dsp/mfcc-oracle", mfcc_brute_force),
    ];
    match cmvn() {
        Ok(v) => out.extend(v),
        Err(e) => out.push(CheckOutcome::failed("dsp/cmvn", e.to_string())),
    }
    out
}
