use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// `0.54 - 0.46 cos(2 pi n / N)`
    HammingPeriodic,
    /// `0.5 - 0.5 cos(2 pi n / N)`
    HannPeriodic,
}

impl WindowKind {
    pub fn coefficients(&self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let c = (2.0 * std::f64::consts::PI * i as f64 / n).cos();
                match self {
                    WindowKind::HammingPeriodic => 0.54 - 0.46 * c,
                    WindowKind::HannPeriodic => 0.5 - 0.5 * c,
                }
            })
            .collect()
    }
}

/// Analysis framing: 25 ms windows every 10 ms at 16 kHz, 512-point FFT.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub frame_shift: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            sample_rate: SAMPLE_RATE,
            frame_len: 400,
            frame_shift: 160,
            fft_size: 512,
            window: WindowKind::HammingPeriodic,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_len == 0 || self.frame_shift == 0 {
            return Err(Error::Config("frame length and shift must be positive".into()));
        }
        if self.frame_len > self.fft_size {
            return Err(Error::Config(format!(
                "frame_len {} exceeds fft_size {}",
                self.frame_len, self.fft_size
            )));
        }
        if self.frame_shift > self.frame_len {
            return Err(Error::Config(format!(
                "frame_shift {} exceeds frame_len {}",
                self.frame_shift, self.frame_len
            )));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// `floor((n - frame_len) / frame_shift) + 1`, or 0 if shorter than a frame.
    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.frame_len {
            0
        } else {
            (samples - self.frame_len) / self.frame_shift + 1
        }
    }

    pub fn window(&self) -> Vec<f64> {
        self.window.coefficients(self.frame_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        FrameConfig::default().validate().unwrap();
        assert_eq!(FrameConfig::default().bins(), 257);
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = FrameConfig::default();
        assert!(FrameConfig { fft_size: 384, ..base }.validate().is_err());
        assert!(FrameConfig { frame_len: 600, ..base }.validate().is_err());
        assert!(FrameConfig {
            frame_shift: 500,
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn one_second_has_98_frames() {
        assert_eq!(FrameConfig::default().frame_count(16_000), 98);
        assert_eq!(FrameConfig::default().frame_count(400), 1);
        assert_eq!(FrameConfig::default().frame_count(399), 0);
    }

    #[test]
    fn periodic_hamming_endpoints() {
        let w = WindowKind::HammingPeriodic.coefficients(400);
        assert!((w[0] - 0.08).abs() < 1e-12);
        assert!((w[200] - 1.0).abs() < 1e-12);
    }
}
