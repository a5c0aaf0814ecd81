use crate::dsp::{extract_features, read_wav, CmvnStats, FeatureKind, FeatureMatrix, FrameConfig, MfccExtractor};
use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::reverb::{DatasetManifest, Split};

/// Raw (unnormalized) features of one reverberant/clean pair.
#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceFeatures {
    pub id: String,
    pub split: Split,
    pub rir_id: String,
    pub t60: Option<f64>,
    pub reverb_lps: FeatureMatrix,
    pub reverb_mfcc: FeatureMatrix,
    pub clean_lps: FeatureMatrix,
    pub clean_mfcc: FeatureMatrix,
}

impl UtteranceFeatures {
    pub fn reverb(&self, kind: FeatureKind) -> &FeatureMatrix {
        match kind {
            FeatureKind::Lps => &self.reverb_lps,
            FeatureKind::Mfcc => &self.reverb_mfcc,
        }
    }

    pub fn clean(&self, kind: FeatureKind) -> &FeatureMatrix {
        match kind {
            FeatureKind::Lps => &self.clean_lps,
            FeatureKind::Mfcc => &self.clean_mfcc,
        }
    }
}

/// Every feature of every utterance in a manifest, extracted once and shared
/// by all models trained on it.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCorpus {
    pub frame: FrameConfig,
    pub utterances: Vec<UtteranceFeatures>,
}

impl RawCorpus {
    pub fn extract(manifest: &DatasetManifest) -> Result<Self> {
        let frame = FrameConfig::default();
        let mfcc = MfccExtractor::new(&frame)?;
        let mut utterances = Vec::with_capacity(manifest.records.len());
        for rec in &manifest.records {
            let clean = read_wav(&manifest.resolve(&rec.clean_path))?;
            let reverb = read_wav(&manifest.resolve(&rec.reverb_path))?;
            if clean.len() != reverb.len() {
                return Err(Error::Format(format!(
                    "{}: clean and reverberant lengths differ ({} vs {})",
                    rec.id(),
                    clean.len(),
                    reverb.len()
                )));
            }
            let (reverb_lps, reverb_mfcc) = extract_features(&reverb, &frame, &mfcc)?;
            let (clean_lps, clean_mfcc) = extract_features(&clean, &frame, &mfcc)?;
            if reverb_lps.rows() == 0 {
                return Err(Error::Format(format!("{}: shorter than one frame", rec.id())));
            }
            utterances.push(UtteranceFeatures {
                id: rec.id(),
                split: rec.split,
                rir_id: rec.rir_id.clone(),
                t60: manifest.rir_t60(&rec.rir_id),
                reverb_lps,
                reverb_mfcc,
                clean_lps,
                clean_mfcc,
            });
        }
        Ok(RawCorpus { frame, utterances })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &UtteranceFeatures> {
        self.utterances.iter().filter(move |u| u.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }
}

/// One normalized training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub t60: Option<f64>,
    pub input: Tensor<f32>,
    pub target: Tensor<f32>,
}

impl Example {
    pub fn frames(&self) -> usize {
        self.input.rows()
    }
}

/// Normalized model inputs and targets for every split, with the statistics
/// fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCorpus {
    pub input_kind: FeatureKind,
    pub target_kind: FeatureKind,
    pub input_cmvn: Option<CmvnStats>,
    pub target_cmvn: CmvnStats,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

impl FeatureCorpus {
    pub fn prepare(
        raw: &RawCorpus,
        input_kind: FeatureKind,
        target_kind: FeatureKind,
        normalize_input: bool,
    ) -> Result<Self> {
        for s in Split::ALL {
            if raw.count(s) == 0 {
                return Err(Error::Config(format!("the {s} split is empty")));
            }
        }
        let input_cmvn = if normalize_input {
            Some(CmvnStats::fit(raw.split(Split::Train).map(|u| u.reverb(input_kind)))?)
        } else {
            None
        };
        let target_cmvn = CmvnStats::fit(raw.split(Split::Train).map(|u| u.clean(target_kind)))?;
        let build = |split: Split| -> Result<Vec<Example>> {
            raw.split(split)
                .map(|u| {
                    let x = u.reverb(input_kind);
                    let input = match &input_cmvn {
                        Some(s) => s.apply(x)?.to_tensor(),
                        None => x.to_tensor(),
                    };
                    Ok(Example {
                        id: u.id.clone(),
                        t60: u.t60,
                        input,
                        target: target_cmvn.apply(u.clean(target_kind))?.to_tensor(),
                    })
                })
                .collect()
        };
        Ok(FeatureCorpus {
            input_kind,
            target_kind,
            train: build(Split::Train)?,
            dev: build(Split::Dev)?,
            test: build(Split::Test)?,
            input_cmvn,
            target_cmvn,
        })
    }

    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}
