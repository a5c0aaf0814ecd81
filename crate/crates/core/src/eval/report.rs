use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{log_spectral_distance, mfcc_mse};
use crate::dsp::{FeatureKind, FeatureMatrix, MfccExtractor};
use crate::error::{Error, Result};
use crate::nn::ModelCheckpoint;
use crate::reverb::{RoomCategory, Split};
use crate::train::{RawCorpus, UtteranceFeatures};

/// Scores of one utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub id: String,
    pub t60: Option<f64>,
    pub bucket: String,
    pub mfcc_mse: f64,
    /// Only when spectra are available for the compared signal.
    pub lsd: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mfcc_mse: f64,
    pub lsd: Option<f64>,
}

impl Summary {
    fn of(items: &[&UtteranceMetrics]) -> Summary {
        let n = items.len() as f64;
        let lsd = if items.iter().all(|u| u.lsd.is_some()) {
            Some(items.iter().filter_map(|u| u.lsd).sum::<f64>() / n)
        } else {
            None
        };
        Summary {
            count: items.len(),
            mfcc_mse: items.iter().map(|u| u.mfcc_mse).sum::<f64>() / n,
            lsd,
        }
    }
}

/// Per-utterance metrics with corpus means overall and per reverberation
/// bucket. Corpus means are plain means over utterances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub utterances: Vec<UtteranceMetrics>,
    pub overall: Summary,
    pub buckets: BTreeMap<String, Summary>,
}

/// Room-size bucket of a reverberation time.
pub fn t60_bucket(t60: Option<f64>) -> String {
    t60.map_or_else(|| "unknown".to_string(), |t| RoomCategory::for_t60(t).to_string())
}

impl MetricReport {
    pub fn new(utterances: Vec<UtteranceMetrics>) -> Result<Self> {
        if utterances.is_empty() {
            return Err(Error::InvalidArgument("no utterances to report".into()));
        }
        if let Some(u) = utterances
            .iter()
            .find(|u| !u.mfcc_mse.is_finite() || u.lsd.is_some_and(|l| !l.is_finite()))
        {
            return Err(Error::NonFinite(format!("metrics of {}", u.id)));
        }
        let all: Vec<&UtteranceMetrics> = utterances.iter().collect();
        let mut groups: BTreeMap<String, Vec<&UtteranceMetrics>> = BTreeMap::new();
        for u in &utterances {
            groups.entry(u.bucket.clone()).or_default().push(u);
        }
        Ok(MetricReport {
            overall: Summary::of(&all),
            buckets: groups.iter().map(|(k, v)| (k.clone(), Summary::of(v))).collect(),
            utterances,
        })
    }

    /// One row per utterance followed by one row per mean.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,t60,bucket,mfcc_mse,lsd\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for u in &self.utterances {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{}",
                u.id,
                opt(u.t60),
                u.bucket,
                u.mfcc_mse,
                opt(u.lsd)
            );
        }
        for (name, m) in self.buckets.iter() {
            let _ = writeln!(s, "mean:{name},,{name},{:.6},{}", m.mfcc_mse, opt(m.lsd));
        }
        let _ = writeln!(
            s,
            "mean:all,,all,{:.6},{}",
            self.overall.mfcc_mse,
            opt(self.overall.lsd)
        );
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<10} {:>5} {:>12} {:>10}\n", "bucket", "utts", "mfcc_mse", "lsd");
        let lsd = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        for (name, m) in self.buckets.iter().chain([(&"all".to_string(), &self.overall)]) {
            let _ = writeln!(s, "{:<10} {:>5} {:>12.4} {:>10}", name, m.count, m.mfcc_mse, lsd(m.lsd));
        }
        s
    }
}

/// Runs a checkpoint on raw input features and returns de-normalized
/// output features of the model's target kind.
pub fn enhance_features(ckpt: &ModelCheckpoint, input: &FeatureMatrix) -> Result<FeatureMatrix> {
    if input.kind() != ckpt.input_kind {
        return Err(Error::InvalidArgument(format!(
            "model expects {} input, got {}",
            ckpt.input_kind,
            input.kind()
        )));
    }
    let x = match &ckpt.input_cmvn {
        Some(s) => s.apply(input)?,
        None => input.clone(),
    };
    let y = ckpt.model.enhance(&x.to_tensor::<f32>())?;
    let y = FeatureMatrix::from_tensor(ckpt.target_kind, &y, true)?;
    ckpt.target_cmvn.invert(&y)
}

fn score(
    u: &UtteranceFeatures,
    out: &FeatureMatrix,
    kind: FeatureKind,
    mfcc: &MfccExtractor,
) -> Result<UtteranceMetrics> {
    let (m, lsd) = match kind {
        FeatureKind::Mfcc => (mfcc_mse(out, &u.clean_mfcc)?, None),
        FeatureKind::Lps => (
            mfcc_mse(&mfcc.from_lps(out)?, &u.clean_mfcc)?,
            Some(log_spectral_distance(out, &u.clean_lps)?),
        ),
    };
    Ok(UtteranceMetrics {
        id: u.id.clone(),
        t60: u.t60,
        bucket: t60_bucket(u.t60),
        mfcc_mse: m,
        lsd,
    })
}

/// Scores a model's de-normalized outputs on one split against the clean
/// references.
pub fn evaluate(ckpt: &ModelCheckpoint, raw: &RawCorpus, split: Split) -> Result<MetricReport> {
    let mfcc = MfccExtractor::new(&raw.frame)?;
    let rows = raw
        .split(split)
        .map(|u| {
            let out = enhance_features(ckpt, u.reverb(ckpt.input_kind))?;
            score(u, &out, ckpt.target_kind, &mfcc)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricReport::new(rows)
}

/// The same metrics for the unprocessed reverberant features.
pub fn no_enhancement(raw: &RawCorpus, split: Split) -> Result<MetricReport> {
    let rows = raw
        .split(split)
        .map(|u| {
            Ok(UtteranceMetrics {
                id: u.id.clone(),
                t60: u.t60,
                bucket: t60_bucket(u.t60),
                mfcc_mse: mfcc_mse(&u.reverb_mfcc, &u.clean_mfcc)?,
                lsd: Some(log_spectral_distance(&u.reverb_lps, &u.clean_lps)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MetricReport::new(rows)
}
