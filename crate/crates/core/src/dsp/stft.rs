use num_complex::Complex64;
use rustfft::FftPlanner;

use super::features::{FeatureKind, FeatureMatrix};
use super::frame::FrameConfig;
use super::Waveform;
use crate::error::{Error, Result};

/// Power floor applied before every logarithm.
pub const POWER_FLOOR: f64 = 1e-10;

/// Frames x `fft_size / 2 + 1` one-sided STFT.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
    config: FrameConfig,
}

impl ComplexSpectrogram {
    pub fn new(config: FrameConfig, frames: usize, data: Vec<Complex64>) -> Result<Self> {
        config.validate()?;
        let bins = config.bins();
        if data.len() != frames * bins {
            return Err(Error::shape("spectrogram", &[frames, bins], &[data.len()]));
        }
        Ok(ComplexSpectrogram {
            frames,
            bins,
            data,
            config,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn config(&self) -> &FrameConfig {
        &self.config
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Squared magnitudes, frame-major.
    pub fn power(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Short-time Fourier transform; frame `t` covers samples
/// `[t * shift, t * shift + frame_len)`, windowed and zero-padded to `fft_size`.
pub fn stft(wave: &Waveform, cfg: &FrameConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    let n = wave.samples.len();
    if n < cfg.frame_len {
        return Err(Error::InvalidArgument(format!(
            "waveform of {n} samples is shorter than one frame ({})",
            cfg.frame_len
        )));
    }
    let frames = cfg.frame_count(n);
    let bins = cfg.bins();
    let window = cfg.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let start = t * cfg.frame_shift;
        buf.fill(Complex64::new(0.0, 0.0));
        for (i, (b, w)) in buf.iter_mut().zip(&window).enumerate() {
            b.re = wave.samples[start + i] * w;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..bins]);
    }
    ComplexSpectrogram::new(*cfg, frames, data)
}

/// Inverse STFT by least-squares overlap-add: each frame is inverse
/// transformed, weighted by the analysis window and normalized by the summed
/// squared windows overlapping each output sample.
pub fn istft(spec: &ComplexSpectrogram) -> Waveform {
    let cfg = spec.config;
    let window = cfg.window();
    let nfft = cfg.fft_size;
    let out_len = if spec.frames == 0 {
        0
    } else {
        (spec.frames - 1) * cfg.frame_shift + cfg.frame_len
    };
    let mut out = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(nfft);
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    for t in 0..spec.frames {
        let frame = spec.frame(t);
        buf[..spec.bins].copy_from_slice(frame);
        // Hermitian extension; DC and Nyquist imaginary parts are dropped.
        buf[0].im = 0.0;
        buf[nfft / 2].im = 0.0;
        for k in 1..nfft / 2 {
            buf[nfft - k] = buf[k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * cfg.frame_shift;
        for (i, w) in window.iter().enumerate() {
            out[start + i] += buf[i].re / nfft as f64 * w;
            norm[start + i] += w * w;
        }
    }
    for (o, n) in out.iter_mut().zip(&norm) {
        if *n > 1e-12 {
            *o /= n;
        }
    }
    Waveform::new(out, cfg.sample_rate)
}

/// Log-power spectra `ln(max(|X|^2, 1e-10))`.
pub fn lps(spec: &ComplexSpectrogram) -> Result<FeatureMatrix> {
    let data = spec.data.iter().map(|c| c.norm_sqr().max(POWER_FLOOR).ln()).collect();
    FeatureMatrix::new(FeatureKind::Lps, spec.frames, data)
}

/// Waveform from enhanced log-power spectra and the reverberant phase.
pub fn reconstruct(
    enhanced_lps: &FeatureMatrix,
    reverberant_phase: &ComplexSpectrogram,
    cfg: &FrameConfig,
) -> Result<Waveform> {
    if enhanced_lps.kind() != FeatureKind::Lps {
        return Err(Error::InvalidArgument("reconstruction needs LPS features".into()));
    }
    if enhanced_lps.is_normalized() {
        return Err(Error::InvalidArgument(
            "reconstruction needs de-normalized LPS features".into(),
        ));
    }
    if enhanced_lps.rows() != reverberant_phase.frames() {
        return Err(Error::shape(
            "reconstruct frame count",
            &[reverberant_phase.frames()],
            &[enhanced_lps.rows()],
        ));
    }
    if reverberant_phase.config() != cfg {
        return Err(Error::InvalidArgument(
            "phase spectrogram was computed with a different frame config".into(),
        ));
    }
    let data = enhanced_lps
        .data()
        .iter()
        .zip(reverberant_phase.data())
        .map(|(&l, &y)| {
            let mag = (l / 2.0).exp();
            let norm = y.norm();
            if norm > 0.0 {
                y * (mag / norm)
            } else {
                Complex64::new(mag, 0.0)
            }
        })
        .collect();
    let spec = ComplexSpectrogram::new(*cfg, reverberant_phase.frames(), data)?;
    Ok(istft(&spec))
}
