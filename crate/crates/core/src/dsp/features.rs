use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::frame::FrameConfig;
use super::stft::{ComplexSpectrogram, POWER_FLOOR};
use crate::error::{Error, Result};
use crate::numeric::{Real, Tensor};

pub const LPS_DIM: usize = 257;
pub const MFCC_DIM: usize = 40;
pub const MEL_LOW_HZ: f64 = 20.0;
pub const MEL_HIGH_HZ: f64 = 7600.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Lps,
    Mfcc,
}

impl FeatureKind {
    pub fn dim(&self) -> usize {
        match self {
            FeatureKind::Lps => LPS_DIM,
            FeatureKind::Mfcc => MFCC_DIM,
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            FeatureKind::Lps => 0,
            FeatureKind::Mfcc => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(FeatureKind::Lps),
            1 => Ok(FeatureKind::Mfcc),
            t => Err(Error::Format(format!("unknown feature kind tag {t}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Lps => "lps",
            FeatureKind::Mfcc => "mfcc",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lps" => Ok(FeatureKind::Lps),
            "mfcc" => Ok(FeatureKind::Mfcc),
            other => Err(Error::Config(format!("unknown feature kind '{other}'"))),
        }
    }
}

/// Frames x D real features tagged with their kind and normalization state.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    kind: FeatureKind,
    normalized: bool,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(kind: FeatureKind, rows: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_state(kind, rows, data, false)
    }

    pub fn with_state(kind: FeatureKind, rows: usize, data: Vec<f64>, normalized: bool) -> Result<Self> {
        let cols = kind.dim();
        if data.len() != rows * cols {
            return Err(Error::shape(
                format!("{kind} feature matrix"),
                &[rows, cols],
                &[data.len()],
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("{kind} feature matrix")));
        }
        Ok(FeatureMatrix {
            rows,
            kind,
            normalized,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.kind.dim()
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn to_tensor<F: Real>(&self) -> Tensor<F> {
        Tensor::from_f64_slice(&[self.rows, self.cols()], &self.data).expect("feature matrix dimensions are consistent")
    }

    pub fn from_tensor<F: Real>(kind: FeatureKind, t: &Tensor<F>, normalized: bool) -> Result<Self> {
        let data = t.data().iter().map(|v| v.as_f64()).collect();
        Self::with_state(kind, t.rows(), data, normalized)
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over the one-sided power spectrum. Each filter's
/// weights sum to one, so a flat spectrum yields identical band energies.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    /// (first bin, weights) per filter.
    filters: Vec<(usize, Vec<f64>)>,
    bins: usize,
}

impl MelFilterbank {
    pub fn new(cfg: &FrameConfig, n_filters: usize, low_hz: f64, high_hz: f64) -> Result<Self> {
        cfg.validate()?;
        let nyquist = cfg.sample_rate as f64 / 2.0;
        if !(0.0 <= low_hz && low_hz < high_hz && high_hz <= nyquist) || n_filters == 0 {
            return Err(Error::Config(format!(
                "invalid mel range {low_hz}-{high_hz} Hz for {n_filters} filters"
            )));
        }
        let bins = cfg.bins();
        let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
        let step = (hi - lo) / (n_filters + 1) as f64;
        let bin_mel: Vec<f64> = (0..bins)
            .map(|k| hz_to_mel(k as f64 * cfg.sample_rate as f64 / cfg.fft_size as f64))
            .collect();
        let mut filters = Vec::with_capacity(n_filters);
        for j in 0..n_filters {
            let left = lo + step * j as f64;
            let center = left + step;
            let right = center + step;
            let mut w = vec![0.0; bins];
            for (k, &m) in bin_mel.iter().enumerate() {
                if m > left && m < right {
                    w[k] = if m <= center {
                        (m - left) / (center - left)
                    } else {
                        (right - m) / (right - center)
                    };
                }
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                // Narrower than one FFT bin: collapse onto the nearest bin.
                let c_hz = mel_to_hz(center);
                let k = (c_hz * cfg.fft_size as f64 / cfg.sample_rate as f64).round() as usize;
                w[k.min(bins - 1)] = 1.0;
            } else {
                w.iter_mut().for_each(|v| *v /= total);
            }
            let first = w.iter().position(|&v| v > 0.0).unwrap_or(0);
            let last = w.iter().rposition(|&v| v > 0.0).unwrap_or(0);
            filters.push((first, w[first..=last].to_vec()));
        }
        Ok(MelFilterbank { filters, bins })
    }

    pub fn n_filters(&self) -> usize {
        self.filters.len()
    }

    /// Dense weight row for filter `j`.
    pub fn weights(&self, j: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.bins];
        let (first, ref ws) = self.filters[j];
        w[first..first + ws.len()].copy_from_slice(ws);
        w
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.bins);
        for (o, (first, w)) in out.iter_mut().zip(&self.filters) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Orthonormal DCT-II keeping all `n` coefficients.
pub fn dct2_orthonormal(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|i| {
            let s = if i == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * x
                .iter()
                .enumerate()
                .map(|(j, &v)| v * (std::f64::consts::PI * i as f64 * (j as f64 + 0.5) / n).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Maps power spectra (frames x bins) to MFCCs.
#[derive(Clone, Debug)]
pub struct MfccExtractor {
    bank: MelFilterbank,
    dct: Vec<f64>,
}

impl MfccExtractor {
    pub fn new(cfg: &FrameConfig) -> Result<Self> {
        let bank = MelFilterbank::new(cfg, MFCC_DIM, MEL_LOW_HZ, MEL_HIGH_HZ)?;
        let n = MFCC_DIM;
        let mut dct = vec![0.0; n * n];
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            // column i of the DCT matrix
            for (r, v) in dct2_orthonormal(&e).into_iter().enumerate() {
                dct[r * n + i] = v;
            }
        }
        Ok(MfccExtractor { bank, dct })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn from_power(&self, power: &[f64], frames: usize) -> Result<FeatureMatrix> {
        let bins = self.bank.bins;
        if power.len() != frames * bins {
            return Err(Error::shape("power spectrum", &[frames, bins], &[power.len()]));
        }
        let n = MFCC_DIM;
        let mut mel = vec![0.0; n];
        let mut out = Vec::with_capacity(frames * n);
        for frame in power.chunks(bins) {
            self.bank.apply(frame, &mut mel);
            mel.iter_mut().for_each(|v| *v = v.max(POWER_FLOOR).ln());
            for r in 0..n {
                let row = &self.dct[r * n..(r + 1) * n];
                out.push(row.iter().zip(&mel).map(|(a, b)| a * b).sum());
            }
        }
        FeatureMatrix::new(FeatureKind::Mfcc, frames, out)
    }

    pub fn from_spectrogram(&self, spec: &ComplexSpectrogram) -> Result<FeatureMatrix> {
        self.from_power(&spec.power(), spec.frames())
    }

    /// MFCCs of the power spectrum implied by (de-normalized) LPS features.
    pub fn from_lps(&self, lps: &FeatureMatrix) -> Result<FeatureMatrix> {
        if lps.kind() != FeatureKind::Lps || lps.is_normalized() {
            return Err(Error::InvalidArgument("expected de-normalized LPS features".into()));
        }
        let power: Vec<f64> = lps.data().iter().map(|v| v.exp()).collect();
        self.from_power(&power, lps.rows())
    }
}

/// 40 MFCCs: mel power (20-7600 Hz) -> log -> orthonormal DCT-II, C0 kept.
pub fn mfcc(spec: &ComplexSpectrogram) -> Result<FeatureMatrix> {
    MfccExtractor::new(spec.config())?.from_spectrogram(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn every_filter_has_unit_sum() {
        let bank = MelFilterbank::new(&FrameConfig::default(), 40, 20.0, 7600.0).unwrap();
        for j in 0..40 {
            let s: f64 = bank.weights(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_spectrum_only_c0() {
        let cfg = FrameConfig::default();
        let spec = ComplexSpectrogram::new(cfg, 2, vec![Complex64::new(3.0, 0.0); 514]).unwrap();
        let m = mfcc(&spec).unwrap();
        assert_eq!(m.cols(), 40);
        for t in 0..2 {
            let row = m.row(t);
            assert!((row[0] - 9f64.ln() * 40f64.sqrt()).abs() < 1e-9);
            assert!(row[1..].iter().all(|c| c.abs() < 1e-9));
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let y = dct2_orthonormal(&x);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ey: f64 = y.iter().map(|v| v * v).sum();
        assert!((ex - ey).abs() < 1e-10);
    }

    #[test]
    fn mfcc_ignores_phase() {
        let cfg = FrameConfig::default();
        let mags: Vec<f64> = (0..257).map(|k| 1.0 + (k as f64 * 0.1).sin().abs()).collect();
        let a: Vec<Complex64> = mags.iter().map(|&m| Complex64::new(m, 0.0)).collect();
        let b: Vec<Complex64> = mags
            .iter()
            .enumerate()
            .map(|(k, &m)| Complex64::from_polar(m, k as f64 * 0.7))
            .collect();
        let ma = mfcc(&ComplexSpectrogram::new(cfg, 1, a).unwrap()).unwrap();
        let mb = mfcc(&ComplexSpectrogram::new(cfg, 1, b).unwrap()).unwrap();
        for (x, y) in ma.data().iter().zip(mb.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_width_rejected() {
        assert!(FeatureMatrix::new(FeatureKind::Mfcc, 2, vec![0.0; 79]).is_err());
        assert!(FeatureMatrix::new(FeatureKind::Mfcc, 1, vec![f64::NAN; 40]).is_err());
    }
}
