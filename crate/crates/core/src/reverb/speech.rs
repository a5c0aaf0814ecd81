use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Peak amplitude of generated clean utterances.
pub const CLEAN_PEAK: f64 = 0.5;

const NOISE_FLOOR: f64 = 3e-4;
const RAMP_SEC: f64 = 0.015;

/// Seeded speech-like signal: voiced syllables built from harmonics of a
/// gliding pitch shaped by three formant resonances, fricative noise bursts,
/// and short pauses, over a faint noise floor. The result peaks at
/// [`CLEAN_PEAK`].
pub fn pseudo_speech(duration_sec: f64, sample_rate: u32, seed: u64) -> Result<Waveform> {
    if !(duration_sec > 0.0) || !duration_sec.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "utterance duration {duration_sec} s must be positive"
        )));
    }
    let fs = sample_rate as f64;
    let n = (duration_sec * fs).round() as usize;
    if n == 0 {
        return Err(Error::InvalidArgument("utterance shorter than one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; n];

    let mut pos = (rng.random_range(0.03..0.12) * fs) as usize;
    while pos < n {
        let voiced = rng.random_bool(0.75);
        let len_sec = if voiced {
            rng.random_range(0.12..0.35)
        } else {
            rng.random_range(0.05..0.14)
        };
        let len = ((len_sec * fs) as usize).min(n - pos);
        let level = rng.random_range(0.3..1.0);
        let seg = &mut x[pos..pos + len];
        if voiced {
            voiced_segment(seg, fs, level, &mut rng);
        } else {
            fricative_segment(seg, fs, level, &mut rng);
        }
        pos += len + (rng.random_range(0.03..0.2) * fs) as usize;
    }

    for v in x.iter_mut() {
        let g: f64 = StandardNormal.sample(&mut rng);
        *v += NOISE_FLOOR * g;
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let s = CLEAN_PEAK / peak;
        x.iter_mut().for_each(|v| *v *= s);
    }
    Ok(Waveform::new(x, sample_rate))
}

fn envelope(i: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    let a = if i < ramp {
        0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
    } else {
        1.0
    };
    let tail = len - 1 - i;
    let b = if tail < ramp {
        0.5 - 0.5 * (PI * tail as f64 / ramp as f64).cos()
    } else {
        1.0
    };
    a * b
}

fn voiced_segment(seg: &mut [f64], fs: f64, level: f64, rng: &mut ChaCha8Rng) {
    let len = seg.len();
    let f0_start = rng.random_range(90.0..240.0);
    let f0_end = f0_start * rng.random_range(0.8..1.25);
    let formants = [
        (rng.random_range(300.0..900.0), 90.0),
        (rng.random_range(900.0..2500.0), 130.0),
        (rng.random_range(2300.0..3600.0), 180.0),
    ];
    let gains = [1.0, rng.random_range(0.3..0.8), rng.random_range(0.1..0.4)];
    let vib_rate = rng.random_range(4.0..7.0);
    let vib_depth = rng.random_range(0.0..0.02);
    let f0_mid = 0.5 * (f0_start + f0_end);
    let n_harm = ((7000.0 / f0_mid) as usize).max(1);
    let amps: Vec<f64> = (1..=n_harm)
        .map(|h| {
            let f = h as f64 * f0_mid;
            let env: f64 = formants
                .iter()
                .zip(&gains)
                .map(|(&(fc, bw), g)| g * (-0.5 * ((f - fc) / bw).powi(2)).exp())
                .sum();
            (env + 0.02) / (h as f64).sqrt()
        })
        .collect();
    let phases: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let ramp = (RAMP_SEC * fs) as usize;
    let mut phase = 0.0;
    for (i, out) in seg.iter_mut().enumerate() {
        let frac = i as f64 / len.max(1) as f64;
        let t = i as f64 / fs;
        let f0 = (f0_start + (f0_end - f0_start) * frac) * (1.0 + vib_depth * (2.0 * PI * vib_rate * t).sin());
        phase += 2.0 * PI * f0 / fs;
        let mut s = 0.0;
        for (h, (&a, &p0)) in amps.iter().zip(&phases).enumerate() {
            s += a * ((h + 1) as f64 * phase + p0).sin();
        }
        *out += level * envelope(i, len, ramp) * s;
    }
}

fn fricative_segment(seg: &mut [f64], fs: f64, level: f64, rng: &mut ChaCha8Rng) {
    let len = seg.len();
    // Two-pole resonator on white noise.
    let fc: f64 = rng.random_range(2500.0..6000.0);
    let bw: f64 = rng.random_range(800.0..2000.0);
    let r = (-PI * bw / fs).exp();
    let a1 = 2.0 * r * (2.0 * PI * fc / fs).cos();
    let a2 = -r * r;
    let g = (1.0 - r) * 0.6;
    let ramp = (RAMP_SEC * fs) as usize;
    let (mut y1, mut y2) = (0.0, 0.0);
    for (i, out) in seg.iter_mut().enumerate() {
        let w: f64 = StandardNormal.sample(rng);
        let y = g * w + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *out += level * envelope(i, len, ramp) * y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_and_peak() {
        let w = pseudo_speech(2.0, 16000, 7).unwrap();
        assert_eq!(w.len(), 32000);
        let peak = w.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - CLEAN_PEAK).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = pseudo_speech(0.5, 16000, 1).unwrap();
        let b = pseudo_speech(0.5, 16000, 1).unwrap();
        let c = pseudo_speech(0.5, 16000, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn has_pauses_and_activity() {
        let w = pseudo_speech(2.0, 16000, 3).unwrap();
        let frame_energy: Vec<f64> = w
            .samples
            .chunks(160)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64)
            .collect();
        let max = frame_energy.iter().cloned().fold(0.0, f64::max);
        let quiet = frame_energy.iter().filter(|&&e| e < max * 1e-3).count();
        assert!(quiet > 5, "no pauses");
        assert!(quiet < frame_energy.len() / 2, "mostly silent");
    }

    #[test]
    fn rejects_non_positive_duration() {
        assert!(pseudo_speech(0.0, 16000, 0).is_err());
    }
}
