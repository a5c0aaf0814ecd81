use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::SAMPLE_RATE;
use crate::error::{Error, Result};

pub const T60_MIN: f64 = 0.1;
pub const T60_MAX: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomCategory {
    Small,
    Medium,
    Large,
}

impl RoomCategory {
    /// Default T60 range in seconds.
    pub fn t60_range(&self) -> (f64, f64) {
        match self {
            RoomCategory::Small => (0.2, 0.4),
            RoomCategory::Medium => (0.4, 0.7),
            RoomCategory::Large => (0.7, 1.2),
        }
    }

    pub fn for_t60(t60: f64) -> Self {
        if t60 < 0.4 {
            RoomCategory::Small
        } else if t60 < 0.7 {
            RoomCategory::Medium
        } else {
            RoomCategory::Large
        }
    }

    /// Range of the delay before the diffuse tail starts, in samples.
    fn tail_onset(&self) -> (usize, usize) {
        match self {
            RoomCategory::Small => (48, 160),
            RoomCategory::Medium => (120, 320),
            RoomCategory::Large => (240, 640),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RoomCategory::Small => "small",
            RoomCategory::Medium => "medium",
            RoomCategory::Large => "large",
        }
    }
}

impl fmt::Display for RoomCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoomCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(RoomCategory::Small),
            "medium" => Ok(RoomCategory::Medium),
            "large" => Ok(RoomCategory::Large),
            other => Err(Error::Config(format!("unknown room category '{other}'"))),
        }
    }
}

/// A room impulse response with a unit direct path at index 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Rir {
    pub samples: Vec<f64>,
    pub t60: f64,
    pub category: RoomCategory,
    pub seed: u64,
}

impl Rir {
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// Exponentially decaying Gaussian noise after a few sparse early
/// reflections; the envelope falls by 60 dB after `t60` seconds.
pub fn generate_rir(t60: f64, length: usize, category: RoomCategory, seed: u64) -> Result<Rir> {
    if !(T60_MIN..=T60_MAX).contains(&t60) {
        return Err(Error::InvalidArgument(format!(
            "t60 {t60} s outside [{T60_MIN}, {T60_MAX}]"
        )));
    }
    let fs = SAMPLE_RATE as f64;
    let min_len = (0.5 * t60 * fs).ceil() as usize;
    if length < min_len.max(1) {
        return Err(Error::InvalidArgument(format!(
            "rir length {length} shorter than half the decay time ({min_len} samples)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay = 3.0 * std::f64::consts::LN_10 / (t60 * fs);
    let (on_lo, on_hi) = category.tail_onset();
    let onset = rng.random_range(on_lo..=on_hi).min(length.saturating_sub(1)).max(1);

    let mut h = vec![0.0; length];
    h[0] = 1.0;

    let n_early = rng.random_range(3..=7);
    for _ in 0..n_early {
        if onset <= 8 {
            break;
        }
        let n = rng.random_range(8..onset);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        h[n] += sign * rng.random_range(0.15..0.5) * (-decay * n as f64).exp();
    }

    // Direct-to-reverberant ratio in dB sets the tail scale.
    let drr_db: f64 = rng.random_range(-4.0..4.0);
    let tail_sum: f64 = (onset..length).map(|n| (-2.0 * decay * n as f64).exp()).sum();
    let sigma = if tail_sum > 0.0 {
        (10f64.powf(-drr_db / 10.0) / tail_sum).sqrt()
    } else {
        0.0
    };
    for (n, v) in h.iter_mut().enumerate().skip(onset) {
        let g: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * g * (-decay * n as f64).exp();
    }
    Ok(Rir {
        samples: h,
        t60,
        category,
        seed,
    })
}

/// T60 from the Schroeder energy-decay curve: a least-squares line through the
/// -5 dB to -25 dB region, extrapolated to -60 dB.
pub fn schroeder_t60(h: &[f64], sample_rate: u32) -> Option<f64> {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for i in (0..h.len()).rev() {
        acc += h[i] * h[i];
        edc[i] = acc;
    }
    if acc <= 0.0 {
        return None;
    }
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / acc).log10()).collect();
    let start = db.iter().position(|&d| d <= -5.0)?;
    let end = db.iter().position(|&d| d <= -25.0)?;
    if end <= start + 1 {
        return None;
    }
    let n = (end - start) as f64;
    let xs = (start..end).map(|i| i as f64);
    let mx = xs.clone().sum::<f64>() / n;
    let my = db[start..end].iter().sum::<f64>() / n;
    let sxy: f64 = xs.clone().zip(&db[start..end]).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return None;
    }
    Some(-60.0 / slope / sample_rate as f64)
}
