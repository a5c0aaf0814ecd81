use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cmvn::CmvnStats;
use super::features::{FeatureKind, FeatureMatrix};
use super::frame::SAMPLE_RATE;
use super::Waveform;
use crate::error::{Error, Result};

pub const FTRM_MAGIC: &[u8; 4] = b"FTRM";
pub const FTRM_VERSION: u32 = 1;
const FTRM_HEADER: usize = 4 + 4 + 4 + 4 + 1 + 1;

/// Reads a mono 16-bit PCM WAV at 16 kHz into samples in [-1, 1).
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
        || spec.sample_rate != SAMPLE_RATE
    {
        return Err(Error::Format(format!(
            "{}: expected mono 16-bit PCM at {SAMPLE_RATE} Hz, got {} ch / {} bit / {} Hz",
            path.display(),
            spec.channels,
            spec.bits_per_sample,
            spec.sample_rate
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    Ok(Waveform::new(samples, SAMPLE_RATE))
}

/// Writes mono 16-bit PCM; samples are clipped to the representable range.
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &wave.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

/// Serializes features: magic, version, rows, cols, kind, normalized, then
/// little-endian f32 row-major data.
pub fn encode_ftrm(f: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(FTRM_HEADER + f.data().len() * 4);
    out.extend_from_slice(FTRM_MAGIC);
    out.extend_from_slice(&FTRM_VERSION.to_le_bytes());
    out.extend_from_slice(&(f.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(f.cols() as u32).to_le_bytes());
    out.push(f.kind().tag());
    out.push(f.is_normalized() as u8);
    for &v in f.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_ftrm(bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < FTRM_HEADER {
        return Err(Error::Format("feature file truncated in header".into()));
    }
    if &bytes[..4] != FTRM_MAGIC {
        return Err(Error::Format("bad feature file magic".into()));
    }
    let version = u32_at(bytes, 4);
    if version != FTRM_VERSION {
        return Err(Error::Format(format!("unsupported feature file version {version}")));
    }
    let rows = u32_at(bytes, 8) as usize;
    let cols = u32_at(bytes, 12) as usize;
    let kind = FeatureKind::from_tag(bytes[16])?;
    let normalized = match bytes[17] {
        0 => false,
        1 => true,
        v => return Err(Error::Format(format!("bad normalized flag {v}"))),
    };
    if cols != kind.dim() {
        return Err(Error::Format(format!(
            "{kind} features must have {} columns, file has {cols}",
            kind.dim()
        )));
    }
    let payload = &bytes[FTRM_HEADER..];
    if payload.len() != rows * cols * 4 {
        return Err(Error::Format(format!(
            "feature payload is {} bytes, expected {}",
            payload.len(),
            rows * cols * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    FeatureMatrix::with_state(kind, rows, data, normalized)
}

pub fn write_ftrm(path: &Path, f: &FeatureMatrix) -> Result<()> {
    fs::write(path, encode_ftrm(f)).map_err(|e| Error::io(path, e))
}

pub fn read_ftrm(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ftrm(&bytes)
}

#[derive(Serialize, Deserialize)]
struct CmvnSidecar {
    kind: FeatureKind,
    frame_count: u64,
    rows: Vec<String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Stores CMVN stats as a two-row feature matrix (mean, variance) plus a JSON
/// sidecar `<path>.json` carrying the kind and frame count.
pub fn write_cmvn(path: &Path, stats: &CmvnStats) -> Result<()> {
    let mut data = stats.mean.clone();
    data.extend_from_slice(&stats.var);
    write_ftrm(path, &FeatureMatrix::new(stats.kind, 2, data)?)?;
    let side = CmvnSidecar {
        kind: stats.kind,
        frame_count: stats.frame_count,
        rows: vec!["mean".into(), "var".into()],
    };
    let sp = sidecar_path(path);
    fs::write(&sp, serde_json::to_string_pretty(&side)?).map_err(|e| Error::io(&sp, e))
}

pub fn read_cmvn(path: &Path) -> Result<CmvnStats> {
    let m = read_ftrm(path)?;
    let sp = sidecar_path(path);
    let side: CmvnSidecar = serde_json::from_str(&fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?)?;
    if m.rows() != 2 || side.kind != m.kind() {
        return Err(Error::Format(format!("{} is not a cmvn stats file", path.display())));
    }
    Ok(CmvnStats {
        kind: m.kind(),
        mean: m.row(0).to_vec(),
        var: m.row(1).to_vec(),
        frame_count: side.frame_count,
    })
}
