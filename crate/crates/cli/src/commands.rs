use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use adi_core::corpus::{self, Manifest, ManifestStats, SplitTag, NUM_DIALECTS};
use adi_core::eval::{confusion, metrics, report, Averaging, Metrics, ReportFormat};
use adi_core::fusion::{
    sweep_combinations, sweep_tsv, train_fusion, FusionModel, Protocol,
};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{BackendKind, ExperimentConfig, FeatureKind, SystemConfig};
use crate::pipeline::{self, Plan, Workspace};

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Parser)]
#[command(name = "adi", version, about = "Arabic dialect identification experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configuration's output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Metric averaging.
    #[arg(long, global = true, value_enum)]
    pub avg: Option<AvgArg>,
    /// Exit with status 2 when any reported accuracy falls below this (percent).
    #[arg(long, global = true)]
    pub min_acc: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AvgArg {
    Macro,
    Micro,
}

impl From<AvgArg> for Averaging {
    fn from(a: AvgArg) -> Self {
        match a {
            AvgArg::Macro => Averaging::Macro,
            AvgArg::Micro => Averaging::Micro,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for SplitTag {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitTag::Train,
            SplitArg::Dev => SplitTag::Dev,
            SplitArg::Test => SplitTag::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepArg {
    Split,
    Kfold,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus into <out-dir>/data.
    Synth,
    /// Train the transcript SVM systems.
    TrainText(SystemSel),
    /// Train the Gaussian back-end systems.
    TrainGb(SystemSel),
    /// Train the GAN systems.
    TrainGan(SystemSel),
    /// Fit the frame GMM and train the bottleneck network.
    UbnfTrain,
    /// Extract pooled bottleneck features for every utterance set.
    UbnfExtract,
    /// Score the scoring sets with trained systems.
    Score(SystemSel),
    /// Train the fusion of all systems (or of the given score files).
    FuseTrain(FuseTrainArgs),
    /// Evaluate every subset of systems.
    FuseSweep(FuseSweepArgs),
    /// Write the ACC/RCL/PRC report.
    Evaluate(EvaluateArgs),
    /// LDA projection of a split's embeddings, fitted on train.
    ProjectDump(ProjectArgs),
    /// Run every step into a fresh output directory.
    Pipeline(PipelineArgs),
    /// Check the corpus manifest, and optionally a label file against it.
    ValidateManifest(ManifestArgs),
}

#[derive(Debug, Args)]
pub struct SystemSel {
    /// Restrict to these system ids (default: all applicable).
    #[arg(long = "system")]
    pub systems: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ScoreFiles {
    /// Score files, one per system (instead of the configured run).
    #[arg(long = "scores")]
    pub scores: Vec<PathBuf>,
    /// Reference labels for the score files.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseTrainArgs {
    #[command(flatten)]
    pub files: ScoreFiles,
    /// Where to write the model in file mode (default: stdout).
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseSweepArgs {
    #[command(flatten)]
    pub files: ScoreFiles,
    /// Evaluation protocol in file mode.
    #[arg(long, value_enum, default_value = "split")]
    pub protocol: SweepArg,
    /// Where to write the sweep in file mode (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub files: ScoreFiles,
    /// Fusion model applied to the score files (file mode).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tsv")]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Markdown,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long, value_enum, default_value = "dev")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Delete an existing non-empty output directory first.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    /// Manifest TSV (default: the bundled corpus manifest).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Label file whose per-dialect counts must match the manifest.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum, requires = "labels")]
    pub split: Option<SplitArg>,
}

/// Process exit status of a successful run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    BelowMinAcc,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Ok => 0,
            Outcome::BelowMinAcc => 2,
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::ValidateManifest(a) => return validate_manifest(a),
        Command::FuseTrain(a) if !a.files.scores.is_empty() => return fuse_train_files(a),
        Command::FuseSweep(a) if !a.files.scores.is_empty() => return fuse_sweep_files(g, a),
        Command::Evaluate(a) if !a.files.scores.is_empty() => return evaluate_files(g, a),
        _ => {}
    }
    let ws = Workspace::new(load_config(g)?);
    let name = command_name(&cli.command);
    let mut artifacts = Vec::new();
    let mut metrics = None;
    match &cli.command {
        Command::Synth => artifacts = pipeline::synthesize(&ws)?,
        Command::TrainText(s) => artifacts = train(&ws, s, BackendKind::Svm)?,
        Command::TrainGb(s) => artifacts = train(&ws, s, BackendKind::Gb)?,
        Command::TrainGan(s) => artifacts = train(&ws, s, BackendKind::Gan)?,
        Command::UbnfTrain => {
            let plan = plan(&ws)?;
            artifacts = pipeline::ubnf_train(&ws, &plan)?;
        }
        Command::UbnfExtract => artifacts = pipeline::ubnf_extract(&ws, &plan(&ws)?)?,
        Command::Score(s) => {
            let plan = plan(&ws)?;
            for sys in select(&ws.cfg, s, None)? {
                artifacts.extend(pipeline::score_system(&ws, &plan, sys)?);
            }
        }
        Command::FuseTrain(_) => artifacts = pipeline::fuse_train(&ws, &plan(&ws)?)?.1,
        Command::FuseSweep(_) => {
            let (rows, p) = pipeline::fuse_sweep(&ws, &plan(&ws)?)?;
            log::info!("{} subsets; best {:?} at {:.2}", rows.len(), rows[0].system_ids, rows[0].metrics.acc);
            artifacts.push(p);
        }
        Command::Evaluate(_) => {
            let (rows, paths) = pipeline::evaluate(&ws, &plan(&ws)?)?;
            print!("{}", report(&rows, ReportFormat::Tsv));
            artifacts = paths;
            metrics = Some(rows);
        }
        Command::ProjectDump(a) => artifacts.push(pipeline::project_dump(&ws, a.split.into(), a.dim)?),
        Command::Pipeline(a) => {
            prepare_out_dir(&ws.root, a.force)?;
            let (paths, rows) = run_pipeline(&ws)?;
            print!("{}", report(&rows, ReportFormat::Tsv));
            artifacts = paths;
            metrics = Some(rows);
        }
        Command::ValidateManifest(_) => unreachable!(),
    }
    write_run_manifest(&ws, name, &artifacts, metrics.as_deref())?;
    Ok(match metrics {
        Some(rows) => gate(&rows, ws.cfg.eval.min_acc),
        None => Outcome::Ok,
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth => "synth",
        Command::TrainText(_) => "train-text",
        Command::TrainGb(_) => "train-gb",
        Command::TrainGan(_) => "train-gan",
        Command::UbnfTrain => "ubnf-train",
        Command::UbnfExtract => "ubnf-extract",
        Command::Score(_) => "score",
        Command::FuseTrain(_) => "fuse-train",
        Command::FuseSweep(_) => "fuse-sweep",
        Command::Evaluate(_) => "evaluate",
        Command::ProjectDump(_) => "project-dump",
        Command::Pipeline(_) => "pipeline",
        Command::ValidateManifest(_) => "validate-manifest",
    }
}

/// Configuration file, then `ADI_*` environment, then flags.
pub fn load_config(g: &GlobalOpts) -> Result<ExperimentConfig> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("this command needs --config"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    apply_flags(&mut cfg, g);
    cfg.validate()?;
    Ok(cfg)
}

pub fn apply_flags(cfg: &mut ExperimentConfig, g: &GlobalOpts) {
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(d) = &g.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(a) = g.avg {
        cfg.eval.avg = Averaging::from(a).to_string();
    }
    if let Some(m) = g.min_acc {
        cfg.eval.min_acc = Some(m);
    }
}

fn plan(ws: &Workspace) -> Result<Plan> {
    let p = Plan::build(ws)?;
    p.write_ids(ws)?;
    Ok(p)
}

fn select<'a>(
    cfg: &'a ExperimentConfig,
    sel: &SystemSel,
    backend: Option<BackendKind>,
) -> Result<Vec<&'a SystemConfig>> {
    if sel.systems.is_empty() {
        return Ok(cfg
            .systems
            .iter()
            .filter(|s| backend.is_none_or(|b| s.backend == b))
            .collect());
    }
    sel.systems
        .iter()
        .map(|id| {
            let s = cfg.system(id)?;
            match backend {
                Some(b) if s.backend != b => bail!("system `{id}` is a {:?} system", s.backend),
                _ => Ok(s),
            }
        })
        .collect()
}

fn train(ws: &Workspace, sel: &SystemSel, backend: BackendKind) -> Result<Vec<PathBuf>> {
    let plan = plan(ws)?;
    let mut out = Vec::new();
    for sys in select(&ws.cfg, sel, Some(backend))? {
        log::info!("training {}", sys.id);
        out.extend(pipeline::train_system(ws, &plan, sys)?);
    }
    Ok(out)
}

/// Clean-slate policy: the pipeline never mixes outputs of different runs.
fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    let non_empty = dir.is_dir() && fs::read_dir(dir)?.next().is_some();
    if non_empty {
        if !force {
            bail!(
                "output directory {} is not empty; pass --force to replace it or choose another --out-dir",
                dir.display()
            );
        }
        fs::remove_dir_all(dir).with_context(|| format!("cannot clear {}", dir.display()))?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn run_pipeline(ws: &Workspace) -> Result<(Vec<PathBuf>, Vec<(String, Metrics)>)> {
    let mut out = Vec::new();
    if ws.cfg.data.source == crate::config::DataSource::Synthetic {
        log::info!("synthesizing corpus");
        out.extend(pipeline::synthesize(ws)?);
    }
    let plan = plan(ws)?;
    if ws.cfg.uses(FeatureKind::Ubnf) {
        log::info!("training bottleneck features");
        out.extend(pipeline::ubnf_train(ws, &plan)?);
        out.extend(pipeline::ubnf_extract(ws, &plan)?);
    }
    for sys in &ws.cfg.systems {
        log::info!("training {}", sys.id);
        out.extend(pipeline::train_system(ws, &plan, sys)?);
        out.extend(pipeline::score_system(ws, &plan, sys)?);
    }
    log::info!("fusion");
    out.extend(pipeline::fuse_train(ws, &plan)?.1);
    out.push(pipeline::fuse_sweep(ws, &plan)?.1);
    let (rows, paths) = pipeline::evaluate(ws, &plan)?;
    out.extend(paths);
    Ok((out, rows))
}

fn gate(rows: &[(String, Metrics)], min_acc: Option<f64>) -> Outcome {
    let Some(min) = min_acc else {
        return Outcome::Ok;
    };
    let low: Vec<String> = rows
        .iter()
        .filter(|(_, m)| m.acc < min)
        .map(|(n, m)| format!("{n} ({:.2})", m.acc))
        .collect();
    if low.is_empty() {
        Outcome::Ok
    } else {
        log::error!("accuracy below {min:.2}: {}", low.join(", "));
        Outcome::BelowMinAcc
    }
}

fn sha256_file(p: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(p)?)))
}

/// Records the configuration hash, versions, artifacts (with digests) and
/// metrics. Artifacts of earlier commands in the same directory are kept.
fn write_run_manifest(
    ws: &Workspace,
    command: &str,
    artifacts: &[PathBuf],
    metrics: Option<&[(String, Metrics)]>,
) -> Result<()> {
    let path = ws.path(RUN_MANIFEST);
    let previous: Value = match fs::read_to_string(&path) {
        Ok(s) => serde_json::from_str(&s).unwrap_or(Value::Null),
        Err(_) => Value::Null,
    };
    let mut arts: BTreeMap<String, Value> = previous
        .get("artifacts")
        .and_then(Value::as_object)
        .map(|o| o.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
        .unwrap_or_default();
    for p in artifacts {
        arts.insert(ws.rel(p), json!(sha256_file(p)?));
    }
    if let Some(h) = previous.get("config_hash").and_then(Value::as_str) {
        if h != ws.cfg.hash() {
            log::warn!("{} was produced under a different configuration", ws.root.display());
        }
    }
    let mut commands: Vec<Value> = previous
        .get("commands")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    commands.push(json!(command));
    let metrics = match metrics {
        Some(rows) => rows
            .iter()
            .map(|(n, m)| (n.clone(), json!({"acc": round2(m.acc), "rcl": round2(m.rcl), "prc": round2(m.prc)})))
            .collect::<serde_json::Map<_, _>>()
            .into(),
        None => previous.get("metrics").cloned().unwrap_or(Value::Null),
    };
    let cfg = &ws.cfg;
    let doc = json!({
        "tool": "adi",
        "versions": {"adi": env!("CARGO_PKG_VERSION"), "adi-core": adi_core::VERSION},
        "commands": commands,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "protocol": cfg.protocol.kind,
        "config": cfg,
        "artifacts": arts,
        "metrics": metrics,
    });
    fs::create_dir_all(&ws.root)?;
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn file_avg(g: &GlobalOpts) -> Averaging {
    g.avg.map(Averaging::from).unwrap_or_default()
}

fn require_labels(f: &ScoreFiles) -> Result<&Path> {
    f.labels.as_deref().ok_or_else(|| anyhow!("--scores needs --labels"))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fuse_train_files(a: &FuseTrainArgs) -> Result<Outcome> {
    let (data, y) = pipeline::aligned_from_files(&a.files.scores, require_labels(&a.files)?)?;
    let model = train_fusion(&data, &y, &Default::default())?;
    emit(a.model_out.as_deref(), &model.to_text())?;
    Ok(Outcome::Ok)
}

fn fuse_sweep_files(g: &GlobalOpts, a: &FuseSweepArgs) -> Result<Outcome> {
    let (data, y) = pipeline::aligned_from_files(&a.files.scores, require_labels(&a.files)?)?;
    let seed = g.seed.unwrap_or(0);
    let protocol = match a.protocol {
        SweepArg::Split => Protocol::one_third_split(seed),
        SweepArg::Kfold => Protocol::ten_fold(seed),
    };
    let rows = sweep_combinations(&data, &y, &protocol, &Default::default(), file_avg(g))?;
    emit(a.out.as_deref(), &sweep_tsv(&rows))?;
    Ok(Outcome::Ok)
}

fn evaluate_files(g: &GlobalOpts, a: &EvaluateArgs) -> Result<Outcome> {
    let (data, y) = pipeline::aligned_from_files(&a.files.scores, require_labels(&a.files)?)?;
    let avg = file_avg(g);
    let mut rows = Vec::new();
    if let Some(mp) = &a.model {
        let text = fs::read_to_string(mp).with_context(|| format!("cannot read {}", mp.display()))?;
        let model = FusionModel::parse(&text)?;
        let cm = confusion(&model.predict_all(&data)?, &y, NUM_DIALECTS)?;
        rows.push(("fusion".to_string(), metrics(&cm, avg)));
    } else {
        for (s, id) in data.system_ids().iter().enumerate() {
            let cm = confusion(&data.system_predictions(s), &y, NUM_DIALECTS)?;
            rows.push((id.clone(), metrics(&cm, avg)));
        }
    }
    let format = match a.format {
        FormatArg::Tsv => ReportFormat::Tsv,
        FormatArg::Markdown => ReportFormat::Markdown,
    };
    print!("{}", report(&rows, format));
    Ok(gate(&rows, g.min_acc))
}

fn validate_manifest(a: &ManifestArgs) -> Result<Outcome> {
    let manifest = match &a.manifest {
        Some(p) => Manifest::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Manifest::bundled(),
    };
    manifest.validate()?;
    for split in manifest.splits() {
        let e = manifest.expected(split).expect("listed split");
        println!(
            "{}\t{} utterances\t{:.1} h\t{:.1} kwords",
            split.as_str(),
            e.total_utterances(),
            e.total_hours(),
            e.total_kwords()
        );
    }
    if let Some(lp) = &a.labels {
        let split: SplitTag = a.split.map(Into::into).unwrap_or(SplitTag::Train);
        let labels = corpus::load_labels(lp)?;
        let stats = ManifestStats {
            utterances: labels.counts(),
            ..Default::default()
        };
        manifest.check(split, &stats)?;
        println!("{}: {} matches the manifest", split.as_str(), lp.display());
    }
    Ok(Outcome::Ok)
}
