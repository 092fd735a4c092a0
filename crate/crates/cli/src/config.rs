//! Experiment configuration: TOML with `include`, `ADI_` environment
//! overrides and command-line flags layered on top, validated before any
//! compute starts.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use adi_core::corpus::SplitTag;
use adi_core::eval::Averaging;
use adi_core::fusion::FusionParams;
use adi_core::text::{PreprocCombo, TermWeighting};
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

pub const ENV_PREFIX: &str = "ADI_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub ubnf: UbnfConfig,
    #[serde(default, rename = "system")]
    pub systems: Vec<SystemConfig>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default)]
    pub synthetic: SynthConfig,
    pub train: Option<SplitFiles>,
    pub dev: Option<SplitFiles>,
    pub test: Option<SplitFiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFiles {
    pub labels: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub frames: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub dim: usize,
    /// Distance of each class mean from the grand mean, in σ.
    pub separation: f64,
    pub sigma: f64,
    pub train_per_class: usize,
    pub dev_per_class: usize,
    pub test_per_class: usize,
    pub vocab_size: usize,
    pub mean_tokens: f64,
    pub marker_words: usize,
    pub marker_boost: f64,
    /// Also draw frame features for bottleneck systems.
    pub frames: bool,
    pub frame_dim: usize,
    pub frame_mixtures: usize,
    pub frame_separation: f64,
    pub frames_per_utt: usize,
    pub frame_class_boost: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let spec = adi_core::corpus::SyntheticSpec::default();
        let frames = adi_core::ubnf::FrameSynth::default();
        Self {
            dim: spec.dim,
            separation: spec.separation,
            sigma: spec.sigma,
            train_per_class: 200,
            dev_per_class: 100,
            test_per_class: 100,
            vocab_size: spec.text.vocab_size,
            mean_tokens: spec.text.mean_tokens,
            marker_words: spec.text.marker_words,
            marker_boost: spec.text.marker_boost,
            frames: true,
            frame_dim: frames.dim,
            frame_mixtures: frames.mixtures,
            frame_separation: frames.separation,
            frames_per_utt: frames.frames_per_utt,
            frame_class_boost: frames.class_boost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// Back-ends on train; fusion and reporting on dev.
    Dev,
    /// Back-ends on train + the rest of dev; fusion on a dev fraction; report on test.
    Submission,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Split,
    Kfold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    /// Share of dev used to train fusion.
    pub fusion_fraction: f64,
    /// How the dev protocol evaluates each subset of the sweep.
    pub sweep: SweepKind,
    pub folds: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::Dev,
            fusion_fraction: 1.0 / 3.0,
            sweep: SweepKind::Split,
            folds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let p = FusionParams::default();
        Self {
            l2: p.l2,
            max_iter: p.max_iter,
            tol: p.tol,
        }
    }
}

impl FusionConfig {
    pub fn params(&self) -> FusionParams {
        FusionParams {
            l2: self.l2,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub avg: String,
    /// Exit nonzero when any reported accuracy falls below this (percent).
    pub min_acc: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            avg: "macro".into(),
            min_acc: None,
        }
    }
}

impl EvalConfig {
    pub fn averaging(&self) -> Result<Averaging> {
        Averaging::from_str(&self.avg).map_err(|e| anyhow!("eval.avg: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UbnfConfig {
    pub mixtures: usize,
    pub em_iters: usize,
    pub em_restarts: usize,
    pub var_floor: f64,
    pub hidden: Vec<usize>,
    pub bottleneck: usize,
    /// Frames spliced on each side of the centre frame.
    pub context: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Append shifted delta cepstra (N-d-P-k) before everything else.
    pub sdc: Option<[usize; 4]>,
}

impl Default for UbnfConfig {
    fn default() -> Self {
        let g = adi_core::ubnf::GmmConfig::default();
        let b = adi_core::ubnf::BottleneckConfig::default();
        Self {
            mixtures: g.mixtures,
            em_iters: g.iters,
            em_restarts: g.restarts,
            var_floor: g.var_floor,
            hidden: b.hidden,
            bottleneck: b.bottleneck,
            context: b.context,
            dropout: b.dropout,
            epochs: b.epochs,
            batch_size: b.batch_size,
            learning_rate: b.adam.learning_rate,
            sdc: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Gb,
    Gan,
    Svm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Embedding,
    Transcript,
    Ubnf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub id: String,
    pub backend: BackendKind,
    pub features: FeatureKind,
    #[serde(default)]
    pub gb: GbConfig,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default)]
    pub gan: GanSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbConfig {
    /// LDA output dimension; 0 skips the projection.
    pub lda_dim: usize,
    /// LDA within-class shrinkage relative to tr(S_w)/D.
    pub lda_shrinkage: f64,
    /// Covariance shrinkage of the back-end.
    pub shrinkage: f64,
}

impl Default for GbConfig {
    fn default() -> Self {
        Self {
            lda_dim: 4,
            lda_shrinkage: 1e-4,
            shrinkage: adi_core::gb::DEFAULT_SHRINKAGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    /// Pre-processing combination 0..=7 (bit 2 stop-words, bit 1 stemming, bit 0 bigrams).
    pub combo: u8,
    pub weighting: String,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub min_df: usize,
    /// `english`, `arabic`, `buckwalter`, or a suffix-list path.
    pub stemmer: String,
    pub stoplist: Option<PathBuf>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        let p = adi_core::svm::SvmParams::default();
        Self {
            combo: 0,
            weighting: "tfidf".into(),
            c: p.c,
            tol: p.tol,
            max_iter: p.max_iter,
            min_df: 1,
            stemmer: "english".into(),
            stoplist: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnlabeledPool {
    /// Labeled training data only.
    None,
    /// Also the (unlabeled) embeddings of every set the system scores.
    Scoring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanSection {
    pub discriminator_hidden: Vec<usize>,
    pub generator_hidden: Vec<usize>,
    pub noise_dim: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub unlabeled: UnlabeledPool,
}

impl Default for GanSection {
    fn default() -> Self {
        let g = adi_core::gan::GanConfig::default();
        Self {
            discriminator_hidden: g.discriminator_hidden,
            generator_hidden: g.generator_hidden,
            noise_dim: g.noise_dim,
            dropout: g.dropout,
            epochs: g.epochs,
            batch_size: g.batch_size,
            learning_rate: g.discriminator_adam.learning_rate,
            unlabeled: UnlabeledPool::Scoring,
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` with its includes, applies `ADI_*` overrides from the
    /// process environment, and validates.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_env(path, std::env::vars())
    }

    pub fn load_with_env(path: &Path, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table = read_with_includes(path, &mut Vec::new())?;
        apply_env(&mut table, env)?;
        let mut cfg: ExperimentConfig = Value::Table(table)
            .try_into()
            .with_context(|| format!("invalid configuration in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).context("invalid configuration")?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Relative data paths are taken against the configuration's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for files in [&mut self.data.train, &mut self.data.dev, &mut self.data.test]
            .into_iter()
            .flatten()
        {
            fix(&mut files.labels);
            for p in [&mut files.embeddings, &mut files.transcripts, &mut files.frames]
                .into_iter()
                .flatten()
            {
                fix(p);
            }
        }
        for s in &mut self.systems {
            if let Some(p) = &mut s.svm.stoplist {
                fix(p);
            }
            if !matches!(s.svm.stemmer.as_str(), "english" | "arabic" | "buckwalter") {
                let mut p = PathBuf::from(&s.svm.stemmer);
                fix(&mut p);
                s.svm.stemmer = p.display().to_string();
            }
        }
    }

    pub fn system(&self, id: &str) -> Result<&SystemConfig> {
        self.systems
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| anyhow!("no system `{id}` in the configuration"))
    }

    pub fn uses(&self, features: FeatureKind) -> bool {
        self.systems.iter().any(|s| s.features == features)
    }

    /// SHA-256 over the canonical JSON form, excluding the output directory
    /// and the accuracy gate (neither changes any result).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.eval.min_acc = None;
        let json = serde_json::to_string(&c).expect("configuration serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            bail!("no [[system]] entries");
        }
        if self.systems.len() > adi_core::fusion::MAX_SWEEP_SYSTEMS {
            bail!(
                "{} systems exceed the sweep limit of {}",
                self.systems.len(),
                adi_core::fusion::MAX_SWEEP_SYSTEMS
            );
        }
        let mut seen = HashSet::new();
        for s in &self.systems {
            if s.id.is_empty()
                || !s.id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            {
                bail!("system id `{}` must be non-empty [A-Za-z0-9._-]", s.id);
            }
            if !seen.insert(&s.id) {
                bail!("duplicate system id `{}`", s.id);
            }
            s.validate().with_context(|| format!("system `{}`", s.id))?;
        }
        self.eval.averaging()?;
        if let Some(m) = self.eval.min_acc {
            if !(0.0..=100.0).contains(&m) {
                bail!("eval.min_acc must be a percentage, got {m}");
            }
        }
        let p = &self.protocol;
        if !(p.fusion_fraction > 0.0 && p.fusion_fraction < 1.0) {
            bail!("protocol.fusion_fraction must lie in (0, 1)");
        }
        if p.folds < 2 {
            bail!("protocol.folds must be at least 2");
        }
        let f = &self.fusion;
        if !(f.l2 >= 0.0) || !(f.tol > 0.0) || f.max_iter == 0 {
            bail!("fusion needs l2 ≥ 0, tol > 0, max_iter > 0");
        }
        if self.uses(FeatureKind::Ubnf) {
            let u = &self.ubnf;
            if u.mixtures < 2 || u.em_iters == 0 || u.epochs == 0 || u.batch_size == 0 {
                bail!("ubnf needs ≥ 2 mixtures and positive iteration/epoch/batch counts");
            }
        }
        self.validate_data()
    }

    fn validate_data(&self) -> Result<()> {
        let d = &self.data;
        match d.source {
            DataSource::Synthetic => {
                let s = &d.synthetic;
                if s.dim < 2 || s.train_per_class == 0 || s.dev_per_class == 0 {
                    bail!("synthetic data needs dim ≥ 2 and positive train/dev counts");
                }
                if self.protocol.kind == ProtocolKind::Submission && s.test_per_class == 0 {
                    bail!("the submission protocol needs synthetic test data");
                }
                if self.uses(FeatureKind::Ubnf) && !s.frames {
                    bail!("bottleneck systems need data.synthetic.frames = true");
                }
            }
            DataSource::Files => {
                let need_test = self.protocol.kind == ProtocolKind::Submission;
                for (name, files, required) in [
                    ("train", &d.train, true),
                    ("dev", &d.dev, true),
                    ("test", &d.test, need_test),
                ] {
                    let Some(files) = files else {
                        if required {
                            bail!("data.{name} is required");
                        }
                        continue;
                    };
                    self.validate_files(name, files)?;
                }
            }
        }
        Ok(())
    }

    fn validate_files(&self, split: &str, files: &SplitFiles) -> Result<()> {
        let check = |what: &str, p: &Option<PathBuf>, needed: bool| -> Result<()> {
            match p {
                Some(p) if !p.is_file() => bail!("data.{split}.{what}: {} does not exist", p.display()),
                None if needed => bail!("data.{split}.{what} is required by a configured system"),
                _ => Ok(()),
            }
        };
        check("labels", &Some(files.labels.clone()), true)?;
        check("embeddings", &files.embeddings, self.uses(FeatureKind::Embedding))?;
        check("transcripts", &files.transcripts, self.uses(FeatureKind::Transcript))?;
        check("frames", &files.frames, self.uses(FeatureKind::Ubnf))
    }

    pub fn split_files(&self, split: SplitTag) -> Option<&SplitFiles> {
        match split {
            SplitTag::Train => self.data.train.as_ref(),
            SplitTag::Dev => self.data.dev.as_ref(),
            SplitTag::Test => self.data.test.as_ref(),
        }
    }
}

impl SystemConfig {
    fn validate(&self) -> Result<()> {
        use BackendKind::*;
        use FeatureKind::*;
        match (self.backend, self.features) {
            (Svm, Transcript) | (Gb | Gan, Embedding | Ubnf) => {}
            (b, f) => bail!("back-end {b:?} cannot consume {f:?} features"),
        }
        match self.backend {
            Svm => {
                let s = &self.svm;
                PreprocCombo::new(s.combo).map_err(|e| anyhow!("svm.combo: {e}"))?;
                TermWeighting::from_str(&s.weighting).map_err(|e| anyhow!("svm.weighting: {e}"))?;
                if !(s.c > 0.0) || !(s.tol > 0.0) {
                    bail!("svm.c and svm.tol must be positive");
                }
                if let Some(p) = &s.stoplist {
                    if !p.is_file() {
                        bail!("svm.stoplist {} does not exist", p.display());
                    }
                }
                let builtin = matches!(s.stemmer.as_str(), "english" | "arabic" | "buckwalter");
                if !builtin && !Path::new(&s.stemmer).is_file() {
                    bail!("svm.stemmer `{}` is neither built in nor a file", s.stemmer);
                }
            }
            Gb => {
                if self.gb.lda_dim >= adi_core::corpus::NUM_DIALECTS {
                    bail!("gb.lda_dim must be below the class count");
                }
                if !(self.gb.shrinkage >= 0.0) || !(self.gb.lda_shrinkage >= 0.0) {
                    bail!("shrinkage must be nonnegative");
                }
            }
            Gan => {
                let g = &self.gan;
                if g.discriminator_hidden.is_empty() || g.epochs == 0 || g.batch_size == 0 {
                    bail!("gan needs hidden layers and positive epochs/batch size");
                }
                if !(0.0..1.0).contains(&g.dropout) || !(g.learning_rate > 0.0) {
                    bail!("gan.dropout must lie in [0, 1) and the learning rate be positive");
                }
            }
        }
        Ok(())
    }
}

fn read_with_includes(path: &Path, stack: &mut Vec<PathBuf>) -> Result<Table> {
    let canon = path
        .canonicalize()
        .with_context(|| format!("cannot open configuration {}", path.display()))?;
    if stack.contains(&canon) {
        bail!("include cycle through {}", path.display());
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read configuration {}", path.display()))?;
    let mut own: Table =
        toml::from_str(&text).with_context(|| format!("syntax error in {}", path.display()))?;
    let includes = match own.remove("include") {
        None => Vec::new(),
        Some(Value::String(s)) => vec![s],
        Some(Value::Array(a)) => a
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(anyhow!("include entries must be strings, got {other}")),
            })
            .collect::<Result<_>>()?,
        Some(other) => bail!("include must be a string or list, got {other}"),
    };
    stack.push(canon);
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut merged = Table::new();
    for inc in includes {
        let sub = read_with_includes(&dir.join(inc), stack)?;
        merge(&mut merged, sub);
    }
    stack.pop();
    merge(&mut merged, own);
    Ok(merged)
}

/// Deep merge: tables merge key by key; any other value replaces.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `ADI_SECTION__KEY=value` sets `section.key`; values parse as TOML
/// literals and fall back to plain strings.
fn apply_env(table: &mut Table, env: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len())
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_ascii_lowercase)
            .collect();
        if path.iter().any(String::is_empty) {
            bail!("malformed override variable {key}");
        }
        let value = toml::from_str::<Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(Value::String(raw));
        let (last, parents) = path.split_last().expect("non-empty");
        let mut node = &mut *table;
        for p in parents {
            let entry = node
                .entry(p.clone())
                .or_insert_with(|| Value::Table(Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| anyhow!("{key}: `{p}` is not a section"))?;
        }
        log::debug!("override {} from {key}", path.join("."));
        node.insert(last.clone(), value);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
[data]
source = "synthetic"
[[system]]
id = "gb"
backend = "gb"
features = "embedding"
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::parse_str(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.protocol.folds, 10);
        assert_eq!(c.systems[0].gb.lda_dim, 4);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        assert!(ExperimentConfig::parse_str(&text, Path::new(".")).is_err());
    }

    #[test]
    fn env_overrides_nested_keys() {
        let mut t: Table = toml::from_str(MINIMAL).unwrap();
        apply_env(
            &mut t,
            [
                ("ADI_SEED".to_string(), "9".to_string()),
                ("ADI_EVAL__AVG".to_string(), "micro".to_string()),
                ("HOME".to_string(), "/x".to_string()),
            ],
        )
        .unwrap();
        let c: ExperimentConfig = Value::Table(t).try_into().unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.eval.avg, "micro");
    }

    #[test]
    fn mismatched_backend_rejected() {
        let text = MINIMAL.replace("features = \"embedding\"", "features = \"transcript\"");
        let c = ExperimentConfig::parse_str(&text, Path::new(".")).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("{MINIMAL}\n[[system]]\nid = \"gb\"\nbackend = \"gan\"\nfeatures = \"embedding\"\n");
        let c = ExperimentConfig::parse_str(&text, Path::new(".")).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn hash_ignores_out_dir_and_gate() {
        let mut a = ExperimentConfig::parse_str(MINIMAL, Path::new(".")).unwrap();
        let h = a.hash();
        a.out_dir = PathBuf::from("elsewhere");
        a.eval.min_acc = Some(50.0);
        assert_eq!(a.hash(), h);
        a.seed += 1;
        assert_ne!(a.hash(), h);
    }
}
