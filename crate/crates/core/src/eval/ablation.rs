use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::report::{evaluate, no_enhancement, MetricReport};
use crate::config::{ArchKind, RunConfig, TrainerKind};
use crate::dsp::FeatureKind;
use crate::error::{Error, ErrorCategory, Result};
use crate::nn::Residual;
use crate::reverb::Split;
use crate::train::{train, FeatureCorpus, RawCorpus};

pub const ABLATION_CSV_HEADER: &str =
    "cell_id,arch,input,residual,trainer,seed,dev_mfcc_mse,test_mfcc_mse,test_lsd,status";

/// Training recipe of a grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainerVariant {
    Mse,
    /// Adversarial, one batch per iteration.
    Gan,
    /// Adversarial, a fresh batch before every update.
    GanDb,
    /// Adversarial with the generator input as discriminator condition.
    GanCd,
}

impl TrainerVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainerVariant::Mse => "mse",
            TrainerVariant::Gan => "gan",
            TrainerVariant::GanDb => "gan-db",
            TrainerVariant::GanCd => "gan-cd",
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        cfg.trainer = if *self == TrainerVariant::Mse {
            TrainerKind::Mse
        } else {
            TrainerKind::Gan
        };
        match self {
            TrainerVariant::GanDb => cfg.gan.same_batch = false,
            TrainerVariant::GanCd => cfg.gan.conditional_d = true,
            _ => {}
        }
    }
}

impl fmt::Display for TrainerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainerVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mse" => Ok(TrainerVariant::Mse),
            "gan" => Ok(TrainerVariant::Gan),
            "gan-db" => Ok(TrainerVariant::GanDb),
            "gan-cd" => Ok(TrainerVariant::GanCd),
            other => Err(Error::Config(format!("unknown trainer variant '{other}'"))),
        }
    }
}

/// One point of the comparison grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CellSpec {
    pub arch: ArchKind,
    pub layers: usize,
    pub input: FeatureKind,
    pub residual: Residual,
    pub trainer: TrainerVariant,
}

impl CellSpec {
    pub fn id(&self) -> String {
        format!(
            "{}{}-{}-{}-{}",
            self.arch, self.layers, self.input, self.residual, self.trainer
        )
    }

    pub fn config(&self, base: &RunConfig, seed: u64) -> RunConfig {
        let mut c = base.clone();
        c.arch = self.arch;
        c.layers = self.layers;
        c.input = self.input;
        c.residual = self.residual;
        c.seed = seed;
        self.trainer.apply(&mut c);
        c
    }
}

/// Shared base configuration, the cells to train and the seeds per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationGrid {
    pub base: RunConfig,
    pub cells: Vec<CellSpec>,
    pub seeds: Vec<u64>,
}

fn list<T: FromStr<Err = Error>>(v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| p.trim().parse()).collect()
}

fn list_num<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: '{}' is not a number", p.trim())))
        })
        .collect()
}

impl AblationGrid {
    /// Reads a grid file. `grid.arch`, `grid.layers`, `grid.input`,
    /// `grid.residual`, `grid.trainer` and `grid.seeds` take comma lists and
    /// span a cartesian product; every other key configures all cells.
    /// Residual connections only exist for LSTM cells, so other
    /// architectures take `none` regardless of `grid.residual`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut base = RunConfig::default();
        let mut grid: BTreeMap<String, String> = BTreeMap::new();
        let mut rest = String::new();
        for line in text.lines() {
            let content = line.split('#').next().unwrap_or("").trim();
            match content.split_once('=') {
                Some((k, v)) if k.trim().starts_with("grid.") => {
                    grid.insert(k.trim().replace('-', "_"), v.trim().to_string());
                }
                _ => {
                    rest.push_str(content);
                    rest.push('\n');
                }
            }
        }
        base.apply_text(&rest)?;
        let get = |k: &str| grid.get(k).map(String::as_str);
        let known = [
            "grid.arch",
            "grid.layers",
            "grid.input",
            "grid.residual",
            "grid.trainer",
            "grid.seeds",
        ];
        if let Some(k) = grid.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown grid key '{k}'")));
        }
        let archs: Vec<ArchKind> = get("grid.arch").map_or(Ok(vec![base.arch]), list)?;
        let layers: Vec<usize> = get("grid.layers").map_or(Ok(vec![base.layers]), |v| list_num("grid.layers", v))?;
        let inputs: Vec<FeatureKind> = get("grid.input").map_or(Ok(vec![base.input]), list)?;
        let residuals: Vec<Residual> = get("grid.residual").map_or(Ok(vec![base.residual]), list)?;
        let trainers: Vec<TrainerVariant> = get("grid.trainer").map_or(Ok(vec![TrainerVariant::Mse]), list)?;
        let seeds: Vec<u64> = get("grid.seeds").map_or(Ok(vec![base.seed]), |v| list_num("grid.seeds", v))?;
        let mut cells = Vec::new();
        for &arch in &archs {
            for &l in &layers {
                for &input in &inputs {
                    for &res in &residuals {
                        for &trainer in &trainers {
                            let residual = if arch == ArchKind::Lstm { res } else { Residual::None };
                            let cell = CellSpec {
                                arch,
                                layers: l,
                                input,
                                residual,
                                trainer,
                            };
                            if !cells.contains(&cell) {
                                cells.push(cell);
                            }
                        }
                    }
                }
            }
        }
        let g = AblationGrid { base, cells, seeds };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("grid needs at least one cell and one seed".into()));
        }
        for c in &self.cells {
            c.config(&self.base, self.seeds[0])
                .validate()
                .map_err(|e| Error::Config(format!("cell {}: {e}", c.id())))?;
        }
        Ok(())
    }
}

/// One trained model of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub cell: CellSpec,
    pub seed: u64,
    pub dev_mfcc_mse: Option<f64>,
    pub test_mfcc_mse: Option<f64>,
    pub test_lsd: Option<f64>,
    /// `ok` or `divergence`.
    pub status: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub baseline: MetricReport,
}

/// Per-cell aggregate over the seeds that trained successfully.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMean {
    pub cell_id: String,
    pub ok: usize,
    pub diverged: usize,
    pub dev_mfcc_mse: Option<f64>,
    pub test_mfcc_mse: Option<f64>,
    pub test_lsd: Option<f64>,
}

fn mean(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = v.flatten().collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut s = format!("{ABLATION_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.cell.id(),
                r.cell.arch,
                r.cell.input,
                r.cell.residual,
                r.cell.trainer,
                r.seed,
                opt(r.dev_mfcc_mse),
                opt(r.test_mfcc_mse),
                opt(r.test_lsd),
                r.status
            );
        }
        s
    }

    pub fn cell_means(&self) -> Vec<CellMean> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<&AblationRow>> = BTreeMap::new();
        for r in &self.rows {
            let id = r.cell.id();
            if !groups.contains_key(&id) {
                order.push(id.clone());
            }
            groups.entry(id).or_default().push(r);
        }
        order
            .into_iter()
            .map(|id| {
                let rs = &groups[&id];
                let ok: Vec<&&AblationRow> = rs.iter().filter(|r| r.status == "ok").collect();
                CellMean {
                    ok: ok.len(),
                    diverged: rs.len() - ok.len(),
                    dev_mfcc_mse: mean(ok.iter().map(|r| r.dev_mfcc_mse)),
                    test_mfcc_mse: mean(ok.iter().map(|r| r.test_mfcc_mse)),
                    test_lsd: mean(ok.iter().map(|r| r.test_lsd)),
                    cell_id: id,
                }
            })
            .collect()
    }

    pub fn cell_mean(&self, cell: &CellSpec) -> Option<CellMean> {
        let id = cell.id();
        self.cell_means().into_iter().find(|m| m.cell_id == id)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let mut s = format!(
            "{:<28} {:>6} {:>12} {:>13} {:>9}\n",
            "cell", "seeds", "dev_mfcc", "test_mfcc", "test_lsd"
        );
        let b = &self.baseline.overall;
        let _ = writeln!(
            s,
            "{:<28} {:>6} {:>12} {:>13.4} {:>9}",
            "no-enhancement",
            "-",
            "-",
            b.mfcc_mse,
            opt(b.lsd)
        );
        for m in self.cell_means() {
            let seeds = if m.diverged > 0 {
                format!("{}+{}d", m.ok, m.diverged)
            } else {
                m.ok.to_string()
            };
            let test = if m.ok == 0 {
                "divergence".to_string()
            } else {
                opt(m.test_mfcc_mse)
            };
            let _ = writeln!(
                s,
                "{:<28} {:>6} {:>12} {:>13} {:>9}",
                m.cell_id,
                seeds,
                opt(m.dev_mfcc_mse),
                test,
                opt(m.test_lsd)
            );
        }
        s.push_str(
            "\nMeans are over seeds that trained without divergence. Feature-domain errors are\n\
             proxies for recognition accuracy; orderings between cells are indicative only.\n",
        );
        s
    }
}

/// Trains and scores every cell for every seed on one shared corpus and
/// normalization. Diverging runs are recorded, not retried.
pub fn ablation_run(raw: &RawCorpus, grid: &AblationGrid, out_dir: Option<&Path>) -> Result<AblationTable> {
    grid.validate()?;
    let mut corpora: BTreeMap<FeatureKind, FeatureCorpus> = BTreeMap::new();
    let mut rows = Vec::new();
    for cell in &grid.cells {
        if !corpora.contains_key(&cell.input) {
            let fc = FeatureCorpus::prepare(raw, cell.input, grid.base.target, grid.base.normalize_input)?;
            corpora.insert(cell.input, fc);
        }
        let corpus = &corpora[&cell.input];
        for &seed in &grid.seeds {
            let cfg = cell.config(&grid.base, seed);
            let dir = out_dir.map(|d| d.join(format!("{}-s{seed}", cell.id())));
            let row = match train(corpus, &cfg, dir.as_deref()) {
                Ok(out) => {
                    let dev = evaluate(&out.checkpoint, raw, Split::Dev)?;
                    let test = evaluate(&out.checkpoint, raw, Split::Test)?;
                    AblationRow {
                        cell: cell.clone(),
                        seed,
                        dev_mfcc_mse: Some(dev.overall.mfcc_mse),
                        test_mfcc_mse: Some(test.overall.mfcc_mse),
                        test_lsd: test.overall.lsd,
                        status: "ok".into(),
                    }
                }
                Err(e) if e.category() == ErrorCategory::Divergence => AblationRow {
                    cell: cell.clone(),
                    seed,
                    dev_mfcc_mse: None,
                    test_mfcc_mse: None,
                    test_lsd: None,
                    status: "divergence".into(),
                },
                Err(e) => return Err(e),
            };
            rows.push(row);
        }
    }
    let table = AblationTable {
        rows,
        baseline: no_enhancement(raw, Split::Test)?,
    };
    if let Some(d) = out_dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        let p = d.join("ablation.txt");
        fs::write(&p, table.to_text()).map_err(|e| Error::io(&p, e))?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expands_cartesian_product() {
        let g =
            AblationGrid::parse("grid.arch = dnn, lstm\ngrid.residual = none,res-l\ngrid.seeds = 1,2,3\nepochs = 3\n")
                .unwrap();
        let ids: Vec<String> = g.cells.iter().map(|c| c.id()).collect();
        assert_eq!(ids, ["dnn4-lps-none-mse", "lstm4-lps-none-mse", "lstm4-lps-res-l-mse"]);
        assert_eq!(g.seeds, [1, 2, 3]);
        assert_eq!(g.base.epochs, 3);
    }

    #[test]
    fn grid_errors() {
        assert!(AblationGrid::parse("grid.colour = red").is_err());
        assert!(AblationGrid::parse("grid.arch = cnn").is_err());
        assert!(AblationGrid::parse("grid.seeds = x").is_err());
        assert!(AblationGrid::parse("grid.input = mfcc\ngrid.residual = res-i").is_err());
    }

    #[test]
    fn trainer_variants_configure_the_run() {
        let cell = CellSpec {
            arch: ArchKind::Lstm,
            layers: 2,
            input: FeatureKind::Lps,
            residual: Residual::None,
            trainer: TrainerVariant::GanDb,
        };
        let c = cell.config(&RunConfig::default(), 9);
        assert_eq!(c.trainer, TrainerKind::Gan);
        assert!(!c.gan.same_batch);
        assert_eq!((c.seed, c.layers), (9, 2));
    }
}
