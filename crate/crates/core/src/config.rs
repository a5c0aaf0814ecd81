//! Flat run configuration addressable by dotted keys.
//!
//! Values are layered: built-in defaults, then a `key = value` file, then
//! individual overrides. Unknown keys are rejected at every layer.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::FeatureKind;
use crate::error::{Error, Result};
use crate::nn::{ArchConfig, BrnConfig, DiscriminatorConfig, DnnConfig, LstmpConfig, RcedConfig, Residual};
use crate::train::{GanTrainerConfig, MseTrainerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Dnn,
    Rced,
    Lstm,
}

impl ArchKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArchKind::Dnn => "dnn",
            ArchKind::Rced => "rced",
            ArchKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dnn" => Ok(ArchKind::Dnn),
            "rced" => Ok(ArchKind::Rced),
            "lstm" | "lstmp" => Ok(ArchKind::Lstm),
            other => Err(Error::Config(format!("unknown architecture '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    Mse,
    Gan,
}

impl TrainerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainerKind::Mse => "mse",
            TrainerKind::Gan => "gan",
        }
    }
}

impl fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(TrainerKind::Mse),
            "gan" => Ok(TrainerKind::Gan),
            other => Err(Error::Config(format!("unknown trainer '{other}'"))),
        }
    }
}

/// Which network is updated first within one adversarial iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UpdateOrder {
    #[serde(rename = "d-first")]
    DFirst,
    #[serde(rename = "g-first")]
    GFirst,
}

impl fmt::Display for UpdateOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateOrder::DFirst => "d-first",
            UpdateOrder::GFirst => "g-first",
        })
    }
}

impl FromStr for UpdateOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "d-first" => Ok(UpdateOrder::DFirst),
            "g-first" => Ok(UpdateOrder::GFirst),
            other => Err(Error::Config(format!("unknown update order '{other}'"))),
        }
    }
}

/// A value that can be read from and written to a config file.
/// Message of a config error without its category prefix, for nesting.
fn bare_message(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self>;
    fn show(&self) -> String;
}

macro_rules! via_fromstr {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self> {
                s.parse::<$t>().map_err(|e| Error::Config(e.to_string()))
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

via_fromstr!(
    usize,
    u64,
    f64,
    Residual,
    FeatureKind,
    ArchKind,
    TrainerKind,
    UpdateOrder
);

impl ConfigValue for bool {
    fn parse_value(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            other => Err(Error::Config(format!("expected a boolean, got '{other}'"))),
        }
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

/// `auto` stands for the architecture-dependent default.
impl<T: ConfigValue> ConfigValue for Option<T> {
    fn parse_value(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            Ok(None)
        } else {
            T::parse_value(s).map(Some)
        }
    }
    fn show(&self) -> String {
        self.as_ref().map_or_else(|| "auto".to_string(), T::show)
    }
}

impl ConfigValue for Vec<usize> {
    fn parse_value(s: &str) -> Result<Self> {
        s.split(',').map(|p| usize::parse_value(p.trim())).collect()
    }
    fn show(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DnnSection {
    pub hidden_units: usize,
    pub context: usize,
    pub batch_renorm: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RcedSection {
    pub channels: Vec<usize>,
    pub widths: Vec<usize>,
    pub context: usize,
    pub batch_renorm: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmSection {
    pub cells: usize,
    pub proj: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MseSection {
    pub lr: Option<f64>,
    pub batch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanSection {
    pub lambda: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub g_steps: usize,
    pub d_steps: usize,
    pub same_batch: bool,
    pub conditional_d: bool,
    pub noise_sigma0: f64,
    pub batch: usize,
    pub order: UpdateOrder,
    pub d_layers: usize,
    pub d_cells: usize,
    pub d_proj: usize,
}

/// Every knob of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub arch: ArchKind,
    /// Recurrent layers for LSTM, hidden layers for DNN; RCED depth follows
    /// its channel list.
    pub layers: usize,
    pub residual: Residual,
    pub input: FeatureKind,
    pub target: FeatureKind,
    pub normalize_input: bool,
    pub trainer: TrainerKind,
    pub seed: u64,
    pub deterministic: bool,
    pub epochs: usize,
    pub patience: usize,
    /// Relative dev improvement needed to reset the patience counter.
    pub min_improvement: f64,
    /// Global-norm gradient clip for models with recurrent layers; 0 disables.
    pub grad_clip: f64,
    pub lr_final_ratio: f64,
    pub divergence_factor: f64,
    pub divergence_epochs: usize,
    pub dnn: DnnSection,
    pub rced: RcedSection,
    pub lstm: LstmSection,
    pub brn: BrnConfig,
    pub mse: MseSection,
    pub gan: GanSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rced = RcedConfig::default();
        let dnn = DnnConfig::default();
        let lstm = LstmpConfig::default();
        let disc = DiscriminatorConfig::default();
        RunConfig {
            arch: ArchKind::Lstm,
            layers: lstm.layers,
            residual: Residual::None,
            input: FeatureKind::Lps,
            target: FeatureKind::Mfcc,
            normalize_input: true,
            trainer: TrainerKind::Mse,
            seed: 1,
            deterministic: true,
            epochs: 30,
            patience: 5,
            min_improvement: 1e-3,
            grad_clip: 5.0,
            lr_final_ratio: crate::train::DEFAULT_FINAL_RATIO,
            divergence_factor: 10.0,
            divergence_epochs: 3,
            dnn: DnnSection {
                hidden_units: dnn.hidden_units,
                context: dnn.context,
                batch_renorm: dnn.batch_renorm,
            },
            rced: RcedSection {
                channels: rced.channels,
                widths: rced.widths,
                context: rced.context,
                batch_renorm: rced.batch_renorm,
            },
            lstm: LstmSection {
                cells: lstm.cells,
                proj: lstm.proj,
            },
            brn: BrnConfig::default(),
            mse: MseSection { lr: None, batch: None },
            gan: GanSection {
                lambda: 200.0,
                lr_g: 0.00008,
                lr_d: 0.0003,
                g_steps: 2,
                d_steps: 1,
                same_batch: true,
                conditional_d: false,
                noise_sigma0: 0.3,
                batch: 8,
                order: UpdateOrder::DFirst,
                d_layers: disc.layers,
                d_cells: disc.cells,
                d_proj: disc.proj,
            },
        }
    }
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        /// Every accepted key, in dump order.
        pub const CONFIG_KEYS: &[&str] = &[$($key),*];

        impl RunConfig {
            /// Sets one value. Dashes in the key are read as underscores.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let norm = key.trim().replace('-', "_");
                let value = value.trim();
                match norm.as_str() {
                    $($key => {
                        self.$($field).+ = ConfigValue::parse_value(value)
                            .map_err(|e| Error::Config(format!("{key}: {}", bare_message(e))))?;
                    })*
                    _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
                }
                Ok(())
            }

            /// `(key, value)` pairs for every key.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$($field).+.show())),*]
            }
        }
    };
}

config_keys! {
    "arch" => arch,
    "layers" => layers,
    "residual" => residual,
    "input" => input,
    "target" => target,
    "normalize_input" => normalize_input,
    "trainer" => trainer,
    "seed" => seed,
    "deterministic" => deterministic,
    "epochs" => epochs,
    "patience" => patience,
    "min_improvement" => min_improvement,
    "grad_clip" => grad_clip,
    "lr_final_ratio" => lr_final_ratio,
    "divergence.factor" => divergence_factor,
    "divergence.epochs" => divergence_epochs,
    "dnn.hidden_units" => dnn.hidden_units,
    "dnn.context" => dnn.context,
    "dnn.batch_renorm" => dnn.batch_renorm,
    "rced.channels" => rced.channels,
    "rced.widths" => rced.widths,
    "rced.context" => rced.context,
    "rced.batch_renorm" => rced.batch_renorm,
    "lstm.cells" => lstm.cells,
    "lstm.proj" => lstm.proj,
    "brn.r_max" => brn.r_max,
    "brn.d_max" => brn.d_max,
    "brn.momentum" => brn.momentum,
    "brn.epsilon" => brn.epsilon,
    "mse.lr" => mse.lr,
    "mse.batch" => mse.batch,
    "gan.lambda" => gan.lambda,
    "gan.lr_g" => gan.lr_g,
    "gan.lr_d" => gan.lr_d,
    "gan.g_steps" => gan.g_steps,
    "gan.d_steps" => gan.d_steps,
    "gan.same_batch" => gan.same_batch,
    "gan.conditional_d" => gan.conditional_d,
    "gan.noise_sigma0" => gan.noise_sigma0,
    "gan.batch" => gan.batch,
    "gan.order" => gan.order,
    "gan.d_layers" => gan.d_layers,
    "gan.d_cells" => gan.d_cells,
    "gan.d_proj" => gan.d_proj,
}

impl RunConfig {
    /// Applies `key = value` lines. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, bare_message(e))))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Parses and applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{}' is not key=value", p.as_ref())))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Complete effective configuration, one `key = value` per line.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("epochs", self.epochs),
            ("dnn.hidden_units", self.dnn.hidden_units),
            ("lstm.cells", self.lstm.cells),
            ("lstm.proj", self.lstm.proj),
            ("gan.g_steps", self.gan.g_steps),
            ("gan.d_steps", self.gan.d_steps),
            ("gan.batch", self.gan.batch),
            ("gan.d_layers", self.gan.d_layers),
            ("gan.d_cells", self.gan.d_cells),
            ("gan.d_proj", self.gan.d_proj),
            ("divergence.epochs", self.divergence_epochs),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if self.mse.batch == Some(0) {
            return Err(Error::Config("mse.batch must be positive".into()));
        }
        if self.mse.lr.is_some_and(|lr| !(lr > 0.0)) {
            return Err(Error::Config("mse.lr must be positive".into()));
        }
        if !(self.gan.lr_g >= 0.0 && self.gan.lr_d >= 0.0) {
            return Err(Error::Config("adversarial learning rates must be non-negative".into()));
        }
        if !(self.gan.lambda >= 0.0) {
            return Err(Error::Config("gan.lambda must be non-negative".into()));
        }
        if !(self.gan.noise_sigma0 >= 0.0) {
            return Err(Error::Config("gan.noise_sigma0 must be non-negative".into()));
        }
        if !(self.lr_final_ratio > 0.0 && self.lr_final_ratio <= 1.0) {
            return Err(Error::Config("lr_final_ratio must be in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.min_improvement) {
            return Err(Error::Config("min_improvement must lie in [0, 1)".into()));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::Config("grad_clip must be non-negative".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::Config("divergence.factor must exceed 1".into()));
        }
        if self.arch != ArchKind::Lstm && self.residual != Residual::None {
            return Err(Error::Config(format!(
                "residual connections apply to lstm only, not {}",
                self.arch
            )));
        }
        if self.arch != ArchKind::Lstm && self.trainer == TrainerKind::Gan && self.gan.batch < 2 {
            return Err(Error::Config("frame models need gan.batch of at least 2".into()));
        }
        self.arch_config()?;
        Ok(())
    }

    /// Enhancer architecture for the configured input and target kinds.
    pub fn arch_config(&self) -> Result<ArchConfig> {
        let (input_dim, output_dim) = (self.input.dim(), self.target.dim());
        let arch = match self.arch {
            ArchKind::Dnn => ArchConfig::Dnn(DnnConfig {
                input_dim,
                output_dim,
                context: self.dnn.context,
                hidden_layers: self.layers,
                hidden_units: self.dnn.hidden_units,
                batch_renorm: self.dnn.batch_renorm,
                brn: self.brn,
            }),
            ArchKind::Rced => ArchConfig::Rced(RcedConfig {
                input_dim,
                output_dim,
                context: self.rced.context,
                channels: self.rced.channels.clone(),
                widths: self.rced.widths.clone(),
                batch_renorm: self.rced.batch_renorm,
                brn: self.brn,
            }),
            ArchKind::Lstm => {
                let c = LstmpConfig {
                    input_dim,
                    output_dim,
                    layers: self.layers,
                    cells: self.lstm.cells,
                    proj: self.lstm.proj,
                    residual: self.residual,
                };
                c.validate()?;
                ArchConfig::Lstm(c)
            }
        };
        if let ArchConfig::Rced(c) = &arch {
            if c.channels.is_empty() || c.channels.len() != c.widths.len() {
                return Err(Error::Config(
                    "rced.channels and rced.widths must be non-empty and of equal length".into(),
                ));
            }
        }
        Ok(arch)
    }

    pub fn mse_trainer(&self) -> MseTrainerConfig {
        let recurrent = self.arch == ArchKind::Lstm;
        MseTrainerConfig {
            lr_init: self.mse.lr.unwrap_or(if recurrent { 0.0003 } else { 0.001 }),
            batch: self.mse.batch.unwrap_or(if recurrent { 8 } else { 256 }),
            epochs: self.epochs,
            final_ratio: self.lr_final_ratio,
            grad_clip: self.clip(),
            seed: self.seed,
        }
    }

    pub fn gan_trainer(&self) -> GanTrainerConfig {
        let g = &self.gan;
        GanTrainerConfig {
            lambda: g.lambda,
            lr_g: g.lr_g,
            lr_d: g.lr_d,
            g_steps: g.g_steps,
            d_steps: g.d_steps,
            same_minibatch: g.same_batch,
            conditional_d: g.conditional_d,
            noise_sigma0: g.noise_sigma0,
            batch: g.batch,
            order: g.order,
            epochs: self.epochs,
            final_ratio: self.lr_final_ratio,
            grad_clip: self.clip(),
            disc: DiscriminatorConfig {
                feature_dim: self.target.dim(),
                condition_dim: if g.conditional_d { self.input.dim() } else { 0 },
                layers: g.d_layers,
                cells: g.d_cells,
                proj: g.d_proj,
            },
            seed: self.seed,
        }
    }

    /// The clip applies whenever a recurrent network is trained; the
    /// discriminator is always recurrent.
    fn clip(&self) -> Option<f64> {
        let recurrent = self.arch == ArchKind::Lstm || self.trainer == TrainerKind::Gan;
        (recurrent && self.grad_clip > 0.0).then_some(self.grad_clip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_text() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
        assert_eq!(c.entries().len(), CONFIG_KEYS.len());
    }

    #[test]
    fn paper_defaults() {
        let c = RunConfig::default();
        let g = c.gan_trainer();
        assert_eq!(
            (g.lambda, g.lr_g, g.lr_d, g.g_steps, g.d_steps),
            (200.0, 0.00008, 0.0003, 2, 1)
        );
        assert!(g.same_minibatch && !g.conditional_d);
        let m = c.mse_trainer();
        assert_eq!((m.lr_init, m.batch), (0.0003, 8));
        let mut d = c.clone();
        d.arch = ArchKind::Dnn;
        assert_eq!((d.mse_trainer().lr_init, d.mse_trainer().batch), (0.001, 256));
    }

    #[test]
    fn dashes_and_precedence() {
        let mut c = RunConfig::from_text("gan.lambda = 50\n# comment\ngan.same_batch = true\n").unwrap();
        c.apply_overrides(&["gan.same-batch=false", "gan.lambda=75"]).unwrap();
        assert_eq!(c.gan.lambda, 75.0);
        assert!(!c.gan.same_batch);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RunConfig::from_text("gan.lamda = 1").is_err());
        assert!(RunConfig::from_text("epochs = -1").is_err());
        assert!(RunConfig::from_text("just a line").is_err());
        let mut c = RunConfig::default();
        assert!(matches!(c.set("nope", "1"), Err(Error::Config(_))));
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.validate().unwrap();
        c.residual = Residual::Layer;
        c.validate().unwrap();
        c.input = FeatureKind::Mfcc;
        assert!(c.validate().is_err(), "res-l needs proj == input width");
        let mut c = RunConfig::default();
        c.arch = ArchKind::Dnn;
        c.residual = Residual::Input;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.gan.g_steps = 0;
        assert!(c.validate().is_err());
    }
}
