mod provenance;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use derev_core::config::{RunConfig, CONFIG_KEYS};
use derev_core::dsp::{
    extract_features, lps, read_cmvn, read_ftrm, read_wav, reconstruct, stft, write_cmvn, write_ftrm, write_wav,
    CmvnStats, FeatureKind, FeatureMatrix, FrameConfig, MfccExtractor,
};
use derev_core::eval::{ablation_run, enhance_features, evaluate, no_enhancement, AblationGrid};
use derev_core::nn::ModelCheckpoint;
use derev_core::reverb::{build_dataset, CorpusConfig, DatasetManifest, Split, T60Mix, MANIFEST_FILE};
use derev_core::train::{train_manifest, RawCorpus, CONFIG_FILE};
use derev_core::verify::{run_suite, Suite};
use derev_core::{Error, ErrorCategory};
use serde_json::json;

use provenance::Provenance;

#[derive(Parser)]
#[command(name = "derev", version, about = "Spectral-mapping speech dereverberation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a paired clean/reverberant corpus and its manifest.
    Synth(SynthArgs),
    /// Extract LPS or MFCC features for every utterance of a manifest.
    Features(FeaturesArgs),
    /// Train an enhancer.
    Train(TrainArgs),
    /// Run a checkpoint on one utterance and write the enhanced features.
    Enhance(EnhanceArgs),
    /// Resynthesize a waveform from enhanced LPS and the input's phase.
    Reconstruct(ReconstructArgs),
    /// Score a checkpoint on one split of a manifest.
    Eval(EvalArgs),
    /// Train and score every cell of an ablation grid.
    Ablate(AblateArgs),
    /// Run the built-in self-checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    train: usize,
    #[arg(long, default_value_t = 10)]
    dev: usize,
    #[arg(long, default_value_t = 10)]
    test: usize,
    /// Master seed for speech, RIRs and split assignment.
    #[arg(long, default_value_t = CorpusConfig::default().master_seed)]
    seed: u64,
    /// Utterance length in seconds.
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    /// Either a range such as `0.3-0.8` or room categories `small,medium,large`.
    #[arg(long)]
    t60_mix: Option<String>,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    kind: String,
    #[arg(long)]
    out: PathBuf,
    /// `fit` to fit statistics on the training split, or `apply:PATH`.
    #[arg(long)]
    cmvn: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    residual: Option<String>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    trainer: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// Any configuration key, e.g. `--set gan.lambda=200`; dotted flags such
    /// as `--gan.same-batch false` are accepted as shorthand.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long)]
    model: PathBuf,
    /// A WAV file or raw (unnormalized) features of the model's input kind.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Keep each run's checkpoint and logs under this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse_from(expand_override_flags(std::env::args_os())) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[config]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = category_of(&e);
            eprintln!("error[{}]: {}", category.as_str(), one_line(&e, category));
            ExitCode::from(exit_code(category))
        }
    }
}

fn exit_code(c: ErrorCategory) -> u8 {
    match c {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Divergence => 4,
        ErrorCategory::Verification => 5,
    }
}

fn category_of(e: &anyhow::Error) -> ErrorCategory {
    e.chain()
        .find_map(|c| c.downcast_ref::<Error>())
        .map_or(ErrorCategory::Data, Error::category)
}

/// The context chain joined with `: `, minus causes a message already
/// quotes and minus a leading category word.
fn one_line(e: &anyhow::Error, category: ErrorCategory) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.ends_with(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    let msg = msg.replace('\n', " ");
    let prefix = format!("{}: ", category.as_str());
    msg.strip_prefix(&prefix).map(str::to_string).unwrap_or(msg)
}

/// Flags `train` declares itself; every other configuration key is routed
/// through `--set`.
const NAMED_TRAIN_KEYS: &[&str] = &[
    "arch", "layers", "residual", "input", "target", "trainer", "seed", "epochs",
];

fn is_override_key(key: &str, in_train: bool) -> bool {
    if key.contains('.') {
        return true;
    }
    let norm = key.replace('-', "_");
    in_train && CONFIG_KEYS.contains(&norm.as_str()) && !NAMED_TRAIN_KEYS.contains(&norm.as_str())
}

/// Rewrites `--section.key value` and `--section.key=value` into
/// `--set section.key=value`; under `train` undotted keys such as
/// `--patience 0` are rewritten too.
fn expand_override_flags(args: impl IntoIterator<Item = OsString>) -> Vec<OsString> {
    let mut out: Vec<OsString> = Vec::new();
    let mut it = args.into_iter().peekable();
    while let Some(arg) = it.next() {
        let in_train = out.get(1).is_some_and(|a| a == "train");
        let flag = arg
            .to_str()
            .and_then(|s| s.strip_prefix("--"))
            .filter(|name| name.split('=').next().is_some_and(|k| is_override_key(k, in_train)))
            .map(str::to_string);
        match flag {
            Some(flag) => {
                let pair = if flag.contains('=') {
                    flag
                } else {
                    let value = it.next_if(|v| !v.to_string_lossy().starts_with("--"));
                    format!(
                        "{flag}={}",
                        value.map_or("true".into(), |v| v.to_string_lossy().into_owned())
                    )
                };
                out.push("--set".into());
                out.push(pair.into());
            }
            None => out.push(arg),
        }
    }
    out
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Features(a) => features(a),
        Command::Train(a) => train_cmd(a),
        Command::Enhance(a) => enhance(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Verify(a) => verify(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    Ok(DatasetManifest::load(path)?)
}

/// The manifest itself and every waveform it references.
fn manifest_inputs(path: &Path, m: &DatasetManifest) -> Vec<PathBuf> {
    let mut v = vec![path.to_path_buf()];
    for r in &m.records {
        v.push(m.resolve(&r.clean_path));
        v.push(m.resolve(&r.reverb_path));
    }
    v
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = CorpusConfig {
        train: a.train,
        dev: a.dev,
        test: a.test,
        duration_sec: a.duration,
        t60_mix: match &a.t60_mix {
            Some(s) => s.parse::<T60Mix>()?,
            None => T60Mix::default(),
        },
        master_seed: a.seed,
    };
    let manifest = build_dataset(&cfg, &a.out)?;
    Provenance::new(
        "synth",
        json!({
            "train": cfg.train, "dev": cfg.dev, "test": cfg.test,
            "duration_sec": cfg.duration_sec, "t60_mix": cfg.t60_mix.to_string(), "seed": cfg.master_seed,
        }),
    )
    .write_in(&a.out)?;
    println!(
        "wrote {} utterance pairs to {}",
        manifest.records.len(),
        a.out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<()> {
    let kind: FeatureKind = a.kind.parse()?;
    let manifest = load_manifest(&a.manifest)?;
    let raw = RawCorpus::extract(&manifest)?;
    create_dir(&a.out)?;
    let mut prov = Provenance::new("features", json!({ "kind": kind.as_str(), "cmvn": a.cmvn }))
        .inputs(manifest_inputs(&a.manifest, &manifest));
    let stats: Option<CmvnStats> = match a.cmvn.as_deref() {
        None => None,
        Some("fit") => {
            let s = CmvnStats::fit(raw.split(Split::Train).map(|u| u.reverb(kind)))?;
            write_cmvn(&a.out.join("cmvn.ftrm"), &s)?;
            Some(s)
        }
        Some(other) => match other.strip_prefix("apply:") {
            Some(p) => {
                prov = prov.input(p);
                Some(read_cmvn(Path::new(p))?)
            }
            None => bail!(Error::Config(format!(
                "--cmvn expects 'fit' or 'apply:PATH', got '{other}'"
            ))),
        },
    };
    let mut index = String::new();
    for u in &raw.utterances {
        let reverb = match &stats {
            Some(s) => s.apply(u.reverb(kind))?,
            None => u.reverb(kind).clone(),
        };
        let rp = format!("{}.reverb.{kind}.ftrm", u.id);
        let cp = format!("{}.clean.{kind}.ftrm", u.id);
        write_ftrm(&a.out.join(&rp), &reverb)?;
        write_ftrm(&a.out.join(&cp), u.clean(kind))?;
        index.push_str(&json!({ "id": u.id, "split": u.split.as_str(), "reverb": rp, "clean": cp }).to_string());
        index.push('\n');
    }
    fs::write(a.out.join("features.jsonl"), index)?;
    prov.write_in(&a.out)?;
    println!(
        "wrote {kind} features for {} utterances to {}",
        raw.utterances.len(),
        a.out.display()
    );
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &a.config {
        cfg.apply_file(p)?;
    }
    let named = [
        ("arch", &a.arch),
        ("layers", &a.layers),
        ("residual", &a.residual),
        ("input", &a.input),
        ("target", &a.target),
        ("trainer", &a.trainer),
        ("seed", &a.seed),
        ("epochs", &a.epochs),
    ];
    for (k, v) in named {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    cfg.apply_overrides(&a.set)?;
    cfg.validate()?;
    Ok(cfg)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a)?;
    let manifest = load_manifest(&a.manifest)?;
    create_dir(&a.out)?;
    let config: serde_json::Map<String, serde_json::Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.into()))
        .collect();
    let mut prov =
        Provenance::new("train", serde_json::Value::Object(config)).inputs(manifest_inputs(&a.manifest, &manifest));
    if let Some(p) = &a.config {
        prov = prov.input(p);
    }
    prov.write_in(&a.out)?;
    let outcome = train_manifest(&manifest, &cfg, Some(&a.out))?;
    println!(
        "trained {} epochs; best dev mse {:.5} at epoch {} (initial {:.5}); artifacts in {}",
        outcome.epochs_run,
        outcome.best_dev_mse,
        outcome.best_epoch,
        outcome.initial_dev_mse,
        a.out.display()
    );
    println!("effective configuration: {}", a.out.join(CONFIG_FILE).display());
    Ok(())
}

fn is_wav(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn input_features(ckpt: &ModelCheckpoint, path: &Path) -> Result<FeatureMatrix> {
    if is_wav(path) {
        let frame = FrameConfig::default();
        let (l, m) = extract_features(&read_wav(path)?, &frame, &MfccExtractor::new(&frame)?)?;
        Ok(match ckpt.input_kind {
            FeatureKind::Lps => l,
            FeatureKind::Mfcc => m,
        })
    } else {
        let f = read_ftrm(path)?;
        if f.is_normalized() {
            bail!(Error::InvalidArgument(format!(
                "{} holds normalized features; the model applies its own statistics",
                path.display()
            )));
        }
        Ok(f)
    }
}

fn enhance(a: EnhanceArgs) -> Result<()> {
    let ckpt = ModelCheckpoint::load(&a.model)?;
    let out = enhance_features(&ckpt, &input_features(&ckpt, &a.input)?)?;
    write_ftrm(&a.out, &out)?;
    Provenance::new("enhance", json!({ "target": ckpt.target_kind.as_str() }))
        .input(&a.model)
        .input(&a.input)
        .write_beside(&a.out)?;
    println!(
        "wrote {} frames of {} features to {}",
        out.rows(),
        out.kind(),
        a.out.display()
    );
    Ok(())
}

fn reconstruct_cmd(a: ReconstructArgs) -> Result<()> {
    let ckpt = ModelCheckpoint::load(&a.model)?;
    if ckpt.target_kind != FeatureKind::Lps {
        bail!(Error::Config(format!(
            "reconstruction needs a model with LPS targets, this one predicts {}",
            ckpt.target_kind
        )));
    }
    if !is_wav(&a.input) {
        bail!(Error::Config("reconstruction reads a WAV input".into()));
    }
    let frame = FrameConfig::default();
    let wave = read_wav(&a.input)?;
    let spec = stft(&wave, &frame)?;
    let input = match ckpt.input_kind {
        FeatureKind::Lps => lps(&spec)?,
        FeatureKind::Mfcc => MfccExtractor::new(&frame)?.from_spectrogram(&spec)?,
    };
    let enhanced = enhance_features(&ckpt, &input)?;
    let mut out = reconstruct(&enhanced, &spec, &frame)?;
    out.samples.resize(wave.len(), 0.0);
    write_wav(&a.out, &out)?;
    Provenance::new("reconstruct", json!({ "phase": "reverberant input" }))
        .input(&a.model)
        .input(&a.input)
        .write_beside(&a.out)?;
    println!("wrote {:.2} s to {}", out.duration_sec(), a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let split: Split = a.split.parse()?;
    let ckpt = ModelCheckpoint::load(&a.model)?;
    let manifest = load_manifest(&a.manifest)?;
    let raw = RawCorpus::extract(&manifest)?;
    let report = evaluate(&ckpt, &raw, split)?;
    let baseline = no_enhancement(&raw, split)?;
    fs::write(&a.report, report.to_csv()).with_context(|| format!("writing {}", a.report.display()))?;
    Provenance::new("eval", json!({ "split": split.as_str() }))
        .input(&a.model)
        .inputs(manifest_inputs(&a.manifest, &manifest))
        .write_beside(&a.report)?;
    print!("{}", report.to_text());
    println!(
        "no enhancement: mfcc_mse {:.4} (model/baseline {:.3})",
        baseline.overall.mfcc_mse,
        report.overall.mfcc_mse / baseline.overall.mfcc_mse
    );
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.grid).with_context(|| format!("reading {}", a.grid.display()))?;
    let grid = AblationGrid::parse(&text)?;
    let manifest = load_manifest(&a.manifest)?;
    let raw = RawCorpus::extract(&manifest)?;
    let table = ablation_run(&raw, &grid, a.out.as_deref())?;
    fs::write(&a.report, table.to_csv()).with_context(|| format!("writing {}", a.report.display()))?;
    Provenance::new("ablate", json!({ "grid": text }))
        .input(&a.grid)
        .inputs(manifest_inputs(&a.manifest, &manifest))
        .write_beside(&a.report)?;
    print!("{}", table.to_text());
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let suite: Suite = a.suite.parse()?;
    let outcomes = run_suite(suite);
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} checks, {failed} failed", outcomes.len());
    if failed > 0 {
        bail!(Error::Verification(format!(
            "{failed} of {} checks failed",
            outcomes.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expand(args: &[&str]) -> Vec<String> {
        expand_override_flags(args.iter().map(OsString::from))
            .into_iter()
            .map(|s| s.into_string().unwrap())
            .collect()
    }

    #[test]
    fn dotted_flags_become_overrides() {
        assert_eq!(
            expand(&[
                "derev",
                "train",
                "--gan.same-batch",
                "false",
                "--gan.lambda=200",
                "--out",
                "x"
            ]),
            [
                "derev",
                "train",
                "--set",
                "gan.same-batch=false",
                "--set",
                "gan.lambda=200",
                "--out",
                "x"
            ]
        );
        assert_eq!(
            expand(&["derev", "train", "--gan.conditional-d", "--out", "x"]),
            ["derev", "train", "--set", "gan.conditional-d=true", "--out", "x"]
        );
        assert_eq!(
            expand(&["derev", "eval", "--report", "a.csv"]),
            ["derev", "eval", "--report", "a.csv"]
        );
        assert_eq!(
            expand(&["derev", "train", "--patience", "0", "--epochs", "3", "--grad-clip=1"]),
            [
                "derev",
                "train",
                "--set",
                "patience=0",
                "--epochs",
                "3",
                "--set",
                "grad-clip=1"
            ]
        );
        assert_eq!(
            expand(&["derev", "synth", "--seed", "4"]),
            ["derev", "synth", "--seed", "4"]
        );
    }

    #[test]
    fn precedence_is_flag_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        fs::write(&file, "arch = dnn\nepochs = 7\ngan.lambda = 50\n").unwrap();
        let args = TrainArgs {
            manifest: "m".into(),
            out: "o".into(),
            config: Some(file),
            arch: None,
            layers: None,
            residual: None,
            input: None,
            target: None,
            trainer: None,
            seed: None,
            epochs: Some("3".into()),
            set: vec!["gan.lambda=10".into()],
        };
        let cfg = train_config(&args).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.gan.lambda, 10.0);
        assert_eq!(cfg.arch.to_string(), "dnn");
        assert_eq!(cfg.patience, RunConfig::default().patience);
    }

    #[test]
    fn error_categories_map_to_exit_codes() {
        let e = anyhow::Error::new(Error::Divergence("x".into())).context("training");
        assert_eq!(exit_code(category_of(&e)), 4);
        assert_eq!(exit_code(category_of(&anyhow::anyhow!("io"))), 3);
        assert_eq!(exit_code(category_of(&Error::Config("k".into()).into())), 2);
        assert_eq!(exit_code(category_of(&Error::Verification("v".into()).into())), 5);
    }

    #[test]
    fn messages_fit_on_one_line() {
        let io = Error::io("a.wav", std::io::Error::new(std::io::ErrorKind::NotFound, "gone"));
        assert_eq!(one_line(&io.into(), ErrorCategory::Data), "i/o error on a.wav: gone");
        let cfg = anyhow::Error::new(Error::Config("unknown key 'x'".into())).context("loading\nrun.cfg");
        assert_eq!(
            one_line(&cfg, ErrorCategory::Config),
            "loading run.cfg: config: unknown key 'x'"
        );
        let bare = Error::Config("unknown key 'x'".into()).into();
        assert_eq!(one_line(&bare, ErrorCategory::Config), "unknown key 'x'");
    }
}
