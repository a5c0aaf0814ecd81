use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::convolve::convolve_rir;
use super::rir::{generate_rir, schroeder_t60, Rir, RoomCategory, T60_MAX, T60_MIN};
use super::speech::pseudo_speech;
use crate::dsp::{write_wav, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::numeric::derive_seed;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CORPUS_FILE: &str = "corpus.json";

/// Largest absolute sample value allowed in a written reverberant file.
const CLIP_LIMIT: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }
}

/// How RIR reverberation times are drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum T60Mix {
    /// Uniform in `[min, max]` seconds.
    Range { min: f64, max: f64 },
    /// Cycle through categories, uniform within each category's default range.
    Categories(Vec<RoomCategory>),
}

impl Default for T60Mix {
    fn default() -> Self {
        T60Mix::Categories(vec![RoomCategory::Small, RoomCategory::Medium, RoomCategory::Large])
    }
}

impl T60Mix {
    fn draw(&self, index: usize, rng: &mut ChaCha8Rng) -> (f64, RoomCategory) {
        match self {
            T60Mix::Range { min, max } => {
                let t60 = if max > min { rng.random_range(*min..=*max) } else { *min };
                (t60, RoomCategory::for_t60(t60))
            }
            T60Mix::Categories(cats) => {
                let cat = cats[index % cats.len()];
                let (lo, hi) = cat.t60_range();
                (rng.random_range(lo..=hi), cat)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            T60Mix::Range { min, max } => {
                if !(T60_MIN..=T60_MAX).contains(min) || !(T60_MIN..=T60_MAX).contains(max) || min > max {
                    return Err(Error::Config(format!(
                        "t60 range {min}-{max} must lie within [{T60_MIN}, {T60_MAX}] with min <= max"
                    )));
                }
            }
            T60Mix::Categories(c) if c.is_empty() => {
                return Err(Error::Config("t60 mix lists no room categories".into()));
            }
            T60Mix::Categories(_) => {}
        }
        Ok(())
    }
}

impl fmt::Display for T60Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            T60Mix::Range { min, max } => write!(f, "{min}-{max}"),
            T60Mix::Categories(c) => {
                let names: Vec<&str> = c.iter().map(|c| c.as_str()).collect();
                f.write_str(&names.join(","))
            }
        }
    }
}

impl FromStr for T60Mix {
    type Err = Error;

    /// Accepts `0.3-0.8` or a comma list such as `small,medium,large`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mix = if let Some((a, b)) = s.split_once('-') {
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad t60 bound '{v}' in '{s}'")))
            };
            T60Mix::Range {
                min: parse(a)?,
                max: parse(b)?,
            }
        } else {
            T60Mix::Categories(s.split(',').map(str::parse).collect::<Result<_>>()?)
        };
        mix.validate()?;
        Ok(mix)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub duration_sec: f64,
    pub t60_mix: T60Mix,
    pub master_seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            train: 60,
            dev: 10,
            test: 10,
            duration_sec: 2.0,
            t60_mix: T60Mix::default(),
            master_seed: 20180417,
        }
    }
}

impl CorpusConfig {
    fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

/// Number of distinct RIRs drawn for a split of `n` utterances.
pub fn rir_pool_size(n: usize) -> usize {
    n.div_ceil(4).clamp(1, 32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtterancePair {
    pub clean_path: String,
    pub reverb_path: String,
    pub rir_id: String,
    pub split: Split,
    pub duration_sec: f64,
}

impl UtterancePair {
    /// File stem of the reverberant path, used as the utterance id.
    pub fn id(&self) -> String {
        Path::new(&self.reverb_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.reverb_path.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RirInfo {
    pub rir_id: String,
    pub split: Split,
    pub t60: f64,
    pub measured_t60: Option<f64>,
    pub category: RoomCategory,
    pub seed: u64,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetadata {
    pub sample_rate: u32,
    pub master_seed: u64,
    pub duration_sec: f64,
    pub t60_mix: String,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub rirs: Vec<RirInfo>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Directory that relative record paths are resolved against.
    pub root: PathBuf,
    pub records: Vec<UtterancePair>,
    pub metadata: Option<CorpusMetadata>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &UtterancePair> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn rir_ids(&self, split: Split) -> BTreeSet<&str> {
        self.split(split).map(|r| r.rir_id.as_str()).collect()
    }

    /// Requested T60 of a RIR, when corpus metadata is available.
    pub fn rir_t60(&self, rir_id: &str) -> Option<f64> {
        self.metadata
            .as_ref()?
            .rirs
            .iter()
            .find(|r| r.rir_id == rir_id)
            .map(|r| r.t60)
    }

    /// Test RIRs must not be shared with train or dev.
    pub fn validate(&self) -> Result<()> {
        let test = self.rir_ids(Split::Test);
        for split in [Split::Train, Split::Dev] {
            if let Some(shared) = self.rir_ids(split).intersection(&test).next() {
                return Err(Error::Format(format!(
                    "rir '{shared}' appears in both the {split} and test splits"
                )));
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Reads a JSON-lines manifest; `corpus.json` beside it is optional.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: UtterancePair =
                serde_json::from_str(line).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
            records.push(rec);
        }
        if records.is_empty() {
            return Err(Error::Format(format!("{}: manifest has no records", path.display())));
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let meta_path = root.join(CORPUS_FILE);
        let metadata = if meta_path.exists() {
            let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            Some(serde_json::from_str(&text)?)
        } else {
            None
        };
        let m = DatasetManifest {
            root,
            records,
            metadata,
        };
        m.validate()?;
        for r in &m.records {
            for p in [&r.clean_path, &r.reverb_path] {
                let full = m.resolve(p);
                if !full.exists() {
                    return Err(Error::Format(format!("missing audio file {}", full.display())));
                }
            }
        }
        Ok(m)
    }
}

fn make_rir_pool(cfg: &CorpusConfig, split: Split) -> Result<Vec<(String, Rir)>> {
    let n = rir_pool_size(cfg.count(split));
    (0..n)
        .map(|i| {
            let id = format!("{split}-rir{i:03}");
            let seed = derive_seed(cfg.master_seed, &id);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (t60, cat) = cfg.t60_mix.draw(i, &mut rng);
            let length = (t60 * SAMPLE_RATE as f64).ceil() as usize;
            Ok((id, generate_rir(t60, length, cat, seed)?))
        })
        .collect()
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Synthesizes a paired clean/reverberant corpus under `out_dir`.
///
/// Layout: `clean/<id>.wav`, `reverb/<id>.wav`, `manifest.jsonl` and
/// `corpus.json`. Each split draws its own RIR pool, so no RIR is shared
/// across splits. Output depends only on `cfg`.
pub fn build_dataset(cfg: &CorpusConfig, out_dir: &Path) -> Result<DatasetManifest> {
    for split in Split::ALL {
        if cfg.count(split) == 0 {
            return Err(Error::Config(format!("{split} split requests no utterances")));
        }
    }
    if !(cfg.duration_sec >= 0.05) {
        return Err(Error::Config(format!(
            "utterance duration {} s is too short",
            cfg.duration_sec
        )));
    }
    cfg.t60_mix.validate()?;
    create_dir(&out_dir.join("clean"))?;
    create_dir(&out_dir.join("reverb"))?;

    let mut records = Vec::new();
    let mut rirs = Vec::new();
    for split in Split::ALL {
        let pool = make_rir_pool(cfg, split)?;
        for (id, rir) in &pool {
            rirs.push(RirInfo {
                rir_id: id.clone(),
                split,
                t60: rir.t60,
                measured_t60: schroeder_t60(&rir.samples, SAMPLE_RATE),
                category: rir.category,
                seed: rir.seed,
                length: rir.samples.len(),
            });
        }
        for i in 0..cfg.count(split) {
            let utt = format!("{split}-{i:04}");
            let (rir_id, rir) = &pool[i % pool.len()];
            let mut clean = pseudo_speech(
                cfg.duration_sec,
                SAMPLE_RATE,
                derive_seed(cfg.master_seed, &format!("clean-{utt}")),
            )?;
            let mut reverb = convolve_rir(&clean, rir);
            let peak = reverb.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > CLIP_LIMIT {
                let s = CLIP_LIMIT / peak;
                clean.samples.iter_mut().for_each(|v| *v *= s);
                reverb.samples.iter_mut().for_each(|v| *v *= s);
            }
            let clean_rel = format!("clean/{utt}.wav");
            let reverb_rel = format!("reverb/{utt}.wav");
            write_wav(&out_dir.join(&clean_rel), &clean)?;
            write_wav(&out_dir.join(&reverb_rel), &reverb)?;
            records.push(UtterancePair {
                clean_path: clean_rel,
                reverb_path: reverb_rel,
                rir_id: rir_id.clone(),
                split,
                duration_sec: clean.duration_sec(),
            });
        }
    }

    let metadata = CorpusMetadata {
        sample_rate: SAMPLE_RATE,
        master_seed: cfg.master_seed,
        duration_sec: cfg.duration_sec,
        t60_mix: cfg.t60_mix.to_string(),
        train: cfg.train,
        dev: cfg.dev,
        test: cfg.test,
        rirs,
    };
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        records,
        metadata: Some(metadata),
    };
    manifest.validate()?;
    let mpath = out_dir.join(MANIFEST_FILE);
    fs::write(&mpath, manifest.to_jsonl()?).map_err(|e| Error::io(&mpath, e))?;
    let cpath = out_dir.join(CORPUS_FILE);
    let meta_json = serde_json::to_string_pretty(manifest.metadata.as_ref().expect("set above"))?;
    fs::write(&cpath, meta_json + "\n").map_err(|e| Error::io(&cpath, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t60_mix_parsing() {
        assert_eq!(
            "0.3-0.8".parse::<T60Mix>().unwrap(),
            T60Mix::Range { min: 0.3, max: 0.8 }
        );
        assert_eq!(
            "small,large".parse::<T60Mix>().unwrap(),
            T60Mix::Categories(vec![RoomCategory::Small, RoomCategory::Large])
        );
        assert!("0.8-0.3".parse::<T60Mix>().is_err());
        assert!("0.01-0.3".parse::<T60Mix>().is_err());
        assert!("tiny".parse::<T60Mix>().is_err());
        let m = T60Mix::default();
        assert_eq!(m.to_string().parse::<T60Mix>().unwrap(), m);
    }

    #[test]
    fn pool_sizes() {
        assert_eq!(rir_pool_size(1), 1);
        assert_eq!(rir_pool_size(5), 2);
        assert_eq!(rir_pool_size(60), 15);
        assert_eq!(rir_pool_size(1000), 32);
    }

    #[test]
    fn empty_split_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CorpusConfig {
            dev: 0,
            ..CorpusConfig::default()
        };
        assert!(matches!(build_dataset(&cfg, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn validate_catches_shared_test_rir() {
        let rec = |split, rir: &str| UtterancePair {
            clean_path: "c.wav".into(),
            reverb_path: "r.wav".into(),
            rir_id: rir.into(),
            split,
            duration_sec: 1.0,
        };
        let m = DatasetManifest {
            root: PathBuf::new(),
            records: vec![rec(Split::Train, "a"), rec(Split::Test, "a")],
            metadata: None,
        };
        assert!(m.validate().is_err());
    }
}
