//! Room impulse responses, FFT convolution, a seeded speech-like source and
//! the paired corpus builder.

mod convolve;
mod dataset;
mod rir;
mod speech;

pub use convolve::{convolve_rir, fft_convolve_truncated};
pub use dataset::{
    build_dataset, rir_pool_size, CorpusConfig, CorpusMetadata, DatasetManifest, RirInfo, Split, T60Mix, UtterancePair,
    CORPUS_FILE, MANIFEST_FILE,
};
pub use rir::{generate_rir, schroeder_t60, Rir, RoomCategory, T60_MAX, T60_MIN};
pub use speech::{pseudo_speech, CLEAN_PEAK};
