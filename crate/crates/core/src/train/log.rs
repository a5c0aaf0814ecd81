use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One optimization iteration. Adversarial fields are absent for MSE training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub step: usize,
    pub epoch: usize,
    pub batch_id: String,
    pub d_loss: Option<f64>,
    pub g_adv_loss: Option<f64>,
    pub g_mse_loss: f64,
    pub lr_g: f64,
    pub lr_d: Option<f64>,
    pub g_updates: u32,
    pub d_updates: u32,
    pub noise_sigma: Option<f64>,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss of the epoch; absent for the untrained model.
    pub train_loss: Option<f64>,
    /// Absent when the model produced non-finite output.
    pub dev_mse: Option<f64>,
    pub best: bool,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogEntry {
    Iter(IterRecord),
    Epoch(EpochRecord),
}

/// Append-only training history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    pub fn push_iter(&mut self, r: IterRecord) {
        self.entries.push(LogEntry::Iter(r));
    }

    pub fn push_epoch(&mut self, r: EpochRecord) {
        self.entries.push(LogEntry::Epoch(r));
    }

    pub fn iterations(&self) -> impl Iterator<Item = &IterRecord> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Iter(r) => Some(r),
            _ => None,
        })
    }

    pub fn epochs(&self) -> impl Iterator<Item = &EpochRecord> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Epoch(r) => Some(r),
            _ => None,
        })
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(TrainLog { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}
