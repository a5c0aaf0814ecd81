//! Waveform/feature transforms: framing and STFT, log-power spectra, mel
//! MFCCs, global CMVN and least-squares overlap-add reconstruction.

mod cmvn;
mod features;
mod frame;
mod io;
mod stft;

pub use cmvn::{CmvnStats, VARIANCE_FLOOR};
pub use features::{
    dct2_orthonormal, mfcc, FeatureKind, FeatureMatrix, MelFilterbank, MfccExtractor, LPS_DIM, MEL_HIGH_HZ, MEL_LOW_HZ,
    MFCC_DIM,
};
pub use frame::{FrameConfig, WindowKind, SAMPLE_RATE};
pub use io::{
    decode_ftrm, encode_ftrm, read_cmvn, read_ftrm, read_wav, write_cmvn, write_ftrm, write_wav, FTRM_MAGIC,
    FTRM_VERSION,
};
pub use stft::{istft, lps, reconstruct, stft, ComplexSpectrogram, POWER_FLOOR};

/// Mono sample sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Waveform { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// LPS and MFCC of one waveform, sharing a single STFT.
pub fn extract_features(
    wave: &Waveform,
    cfg: &FrameConfig,
    mfcc: &MfccExtractor,
) -> crate::Result<(FeatureMatrix, FeatureMatrix)> {
    let spec = stft(wave, cfg)?;
    Ok((lps(&spec)?, mfcc.from_spectrogram(&spec)?))
}
