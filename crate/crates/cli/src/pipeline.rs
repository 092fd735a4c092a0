//! Run-directory layout and the protocol steps composed by the commands.
//!
//! ```text
//! <out_dir>/data/{train,dev,test}.{emb,txt,lab,frames}   synthetic corpus
//! <out_dir>/protocol/{backend,fusion,report}.ids          utterances per role
//! <out_dir>/models/<system>.*                             back-end models
//! <out_dir>/ubnf/                                         bottleneck net, EM trace, pooled features
//! <out_dir>/scores/<system>.<set>.tsv                     per-system scores
//! <out_dir>/fusion/                                       fusion model, sweep
//! <out_dir>/report.{tsv,md}, run_manifest.json
//! ```

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use adi_core::corpus::{
    self, split_dataset, synth_generate, EmbeddingRecord, EmbeddingSet, LabeledDataset,
    SplitTag, SyntheticSpec, TextSynth, NUM_DIALECTS,
};
use adi_core::eval::{confusion, metrics, report, Metrics, ReportFormat};
use adi_core::fusion::{
    kfold_eval, sweep_combinations, sweep_heldout, sweep_tsv, train_fusion, AlignedScores,
    FusionModel, Protocol, ScoreKind, ScoreMatrix, SweepRow,
};
use adi_core::gan::{self, train_gan, GanConfig, GanModel, LabeledInputs};
use adi_core::gb::{fit_gb, GbModel};
use adi_core::lda::{fit_lda, LdaModel, Shrinkage};
use adi_core::neural::AdamConfig;
use adi_core::rng;
use adi_core::svm::{train_svm_with_dim, SvmModel, SvmParams};
use adi_core::text::{PreprocCombo, SuffixStemmer, TermWeighting, TextPipeline, Vocab};
use adi_core::ubnf::{
    compute_sdc, extract_ubnf, fit_gmm_em, frame_labels, load_frames, pool_utterance, save_frames,
    stack_frames, train_bottleneck, BottleneckConfig, BottleneckNet, FrameSynth,
    GmmConfig, SdcParams,
};
use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;

use crate::config::{
    BackendKind, DataSource, ExperimentConfig, FeatureKind, ProtocolKind, SplitFiles, SweepKind,
    SystemConfig, UnlabeledPool,
};

/// Nominal frame shift for durations derived from frame counts.
const FRAME_SECONDS: f64 = 0.01;

/// Seed streams, one per random decision of a run.
mod stream {
    pub const SYNTH_TRAIN: u64 = 1;
    pub const SYNTH_DEV: u64 = 2;
    pub const SYNTH_TEST: u64 = 3;
    pub const FRAMES: u64 = 10;
    pub const DEV_SPLIT: u64 = 20;
    pub const FUSION_EVAL: u64 = 30;
    pub const UBNF: u64 = 40;
    pub const SYSTEM: u64 = 100;
}

pub const ALL_SPLITS: [SplitTag; 3] = [SplitTag::Train, SplitTag::Dev, SplitTag::Test];

pub struct Workspace {
    pub cfg: ExperimentConfig,
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(cfg: ExperimentConfig) -> Self {
        let root = cfg.out_dir.clone();
        Self { cfg, root }
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    /// Relative form of a path under the run directory, `/`-separated.
    pub fn rel(&self, p: &Path) -> String {
        let r = p.strip_prefix(&self.root).unwrap_or(p);
        r.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }

    fn ensure_dir(&self, rel: &str) -> Result<PathBuf> {
        let d = self.path(rel);
        fs::create_dir_all(&d).with_context(|| format!("cannot create {}", d.display()))?;
        Ok(d)
    }

    fn write(&self, rel: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&p, contents).with_context(|| format!("cannot write {}", p.display()))?;
        Ok(p)
    }

    fn read(&self, rel: &str, hint: &str) -> Result<String> {
        let p = self.path(rel);
        fs::read_to_string(&p).with_context(|| format!("cannot read {} ({hint})", p.display()))
    }

    fn synthetic_files(&self, split: SplitTag) -> SplitFiles {
        let base = |ext: &str| self.path(format!("data/{}.{ext}", split.as_str()));
        SplitFiles {
            labels: base("lab"),
            embeddings: Some(base("emb")),
            transcripts: Some(base("txt")),
            frames: self.cfg.data.synthetic.frames.then(|| base("frames")),
        }
    }

    /// Files backing `split`, or `None` when the configuration has no such split.
    pub fn files(&self, split: SplitTag) -> Option<SplitFiles> {
        match self.cfg.data.source {
            DataSource::Synthetic => {
                let s = &self.cfg.data.synthetic;
                (split != SplitTag::Test || s.test_per_class > 0).then(|| self.synthetic_files(split))
            }
            DataSource::Files => self.cfg.split_files(split).cloned(),
        }
    }

    pub fn load_split(&self, split: SplitTag) -> Result<Option<LabeledDataset>> {
        let Some(f) = self.files(split) else {
            return Ok(None);
        };
        let hint = match self.cfg.data.source {
            DataSource::Synthetic => "run `synth` first",
            DataSource::Files => "check the data section",
        };
        let labels = corpus::load_labels(&f.labels)
            .with_context(|| format!("loading {} labels ({hint})", split.as_str()))?;
        let embeddings = match &f.embeddings {
            Some(p) if self.cfg.uses(FeatureKind::Embedding) || p.is_file() => {
                Some(corpus::load_embeddings(p).with_context(|| format!("loading {}", p.display()))?)
            }
            _ => None,
        };
        let transcripts = match &f.transcripts {
            Some(p) if self.cfg.uses(FeatureKind::Transcript) || p.is_file() => {
                Some(corpus::load_transcripts(p).with_context(|| format!("loading {}", p.display()))?)
            }
            _ => None,
        };
        if embeddings.is_none() && transcripts.is_none() {
            // frames-only corpora: carry labels with empty views
            let mut e = EmbeddingSet::new();
            for (id, _) in labels.iter() {
                e.push(EmbeddingRecord {
                    utt_id: id.to_string(),
                    vector: vec![0.0],
                    duration_s: 0.0,
                })?;
            }
            return Ok(Some(LabeledDataset::new(Some(e), None, labels, split)?));
        }
        Ok(Some(LabeledDataset::new(embeddings, transcripts, labels, split)?))
    }

    fn require_split(&self, split: SplitTag) -> Result<LabeledDataset> {
        self.load_split(split)?
            .ok_or_else(|| anyhow!("the configuration has no {} data", split.as_str()))
    }

    /// Frame matrices of every configured split, by utterance id.
    pub fn load_all_frames(&self) -> Result<HashMap<String, DMatrix<f64>>> {
        let mut out = HashMap::new();
        for split in ALL_SPLITS {
            let Some(p) = self.files(split).and_then(|f| f.frames) else {
                continue;
            };
            for fm in load_frames(&p).with_context(|| format!("loading {}", p.display()))? {
                if out.insert(fm.utt_id.clone(), fm.frames).is_some() {
                    bail!("utterance `{}` has frames in more than one split", fm.utt_id);
                }
            }
        }
        Ok(out)
    }
}

/// Writes the synthetic corpus under `data/`; returns the files written.
pub fn synthesize(ws: &Workspace) -> Result<Vec<PathBuf>> {
    let cfg = &ws.cfg;
    if cfg.data.source != DataSource::Synthetic {
        bail!("`synth` needs data.source = \"synthetic\"");
    }
    let s = &cfg.data.synthetic;
    ws.ensure_dir("data")?;
    let mut written = Vec::new();
    for (split, per_class, stream) in [
        (SplitTag::Train, s.train_per_class, stream::SYNTH_TRAIN),
        (SplitTag::Dev, s.dev_per_class, stream::SYNTH_DEV),
        (SplitTag::Test, s.test_per_class, stream::SYNTH_TEST),
    ] {
        if per_class == 0 {
            continue;
        }
        let spec = SyntheticSpec {
            dim: s.dim,
            counts: [per_class; NUM_DIALECTS],
            separation: s.separation,
            sigma: s.sigma,
            text: TextSynth {
                vocab_size: s.vocab_size,
                mean_tokens: s.mean_tokens,
                marker_words: s.marker_words,
                marker_boost: s.marker_boost,
            },
            ..SyntheticSpec::default()
        };
        let ds = synth_generate(&spec, split, rng::derive(cfg.seed, stream))?;
        let f = ws.synthetic_files(split);
        ds.labels().save(&f.labels)?;
        ds.embeddings().expect("synthetic embeddings").save(f.embeddings.as_ref().unwrap())?;
        ds.transcripts().expect("synthetic transcripts").save(f.transcripts.as_ref().unwrap())?;
        written.extend([f.labels.clone(), f.embeddings.clone().unwrap(), f.transcripts.clone().unwrap()]);
        if let Some(fp) = &f.frames {
            let fs = FrameSynth {
                dim: s.frame_dim,
                mixtures: s.frame_mixtures,
                separation: s.frame_separation,
                frames_per_utt: s.frames_per_utt,
                class_boost: s.frame_class_boost,
            };
            let utts: Vec<(String, usize)> = ds
                .labels()
                .iter()
                .map(|(id, l)| (id.to_string(), l.index()))
                .collect();
            let (frames, _) = fs.generate(&utts, NUM_DIALECTS, rng::derive(cfg.seed, stream::FRAMES + stream))?;
            save_frames(fp, &frames)?;
            written.push(fp.clone());
        }
    }
    Ok(written)
}

/// Which utterances train back-ends, train fusion, and get reported on.
pub struct Plan {
    pub backend: LabeledDataset,
    /// Sets every system is scored on, by name; the first trains fusion.
    pub scoring: Vec<(String, LabeledDataset)>,
    /// Index into `scoring` of the reported set.
    pub report: usize,
}

impl Plan {
    pub fn build(ws: &Workspace) -> Result<Self> {
        let cfg = &ws.cfg;
        let train = ws.require_split(SplitTag::Train)?;
        let dev = ws.require_split(SplitTag::Dev)?;
        let test = ws.load_split(SplitTag::Test)?;
        match cfg.protocol.kind {
            ProtocolKind::Dev => {
                let mut scoring = vec![("dev".to_string(), dev)];
                if let Some(t) = test {
                    scoring.push(("test".to_string(), t));
                }
                Ok(Plan {
                    backend: train,
                    scoring,
                    report: 0,
                })
            }
            ProtocolKind::Submission => {
                let test = test.ok_or_else(|| anyhow!("the submission protocol needs test data"))?;
                let f = cfg.protocol.fusion_fraction;
                let parts = split_dataset(&dev, &[f, 1.0 - f], rng::derive(cfg.seed, stream::DEV_SPLIT))?;
                let [fusion, rest]: [LabeledDataset; 2] =
                    parts.try_into().map_err(|_| anyhow!("two-way split"))?;
                let backend = train.concat(&rest, SplitTag::Train)?;
                Ok(Plan {
                    backend,
                    scoring: vec![("dev-fusion".to_string(), fusion), ("test".to_string(), test)],
                    report: 1,
                })
            }
        }
    }

    pub fn fusion_set(&self) -> &(String, LabeledDataset) {
        &self.scoring[0]
    }

    pub fn report_set(&self) -> &(String, LabeledDataset) {
        &self.scoring[self.report]
    }

    /// Writes the utterance ids of each role, sorted, one per line.
    pub fn write_ids(&self, ws: &Workspace) -> Result<Vec<PathBuf>> {
        let ids = |d: &LabeledDataset| {
            let mut v: Vec<&str> = d.labels().ids().collect();
            v.sort_unstable();
            v.iter().map(|s| format!("{s}\n")).collect::<String>()
        };
        Ok(vec![
            ws.write("protocol/backend.ids", &ids(&self.backend))?,
            ws.write("protocol/fusion.ids", &ids(&self.fusion_set().1))?,
            ws.write("protocol/report.ids", &ids(&self.report_set().1))?,
        ])
    }
}

fn labels_of(d: &LabeledDataset) -> Vec<usize> {
    d.labels().iter().map(|(_, l)| l.index()).collect()
}

fn ids_of(d: &LabeledDataset) -> Vec<String> {
    d.labels().ids().map(str::to_string).collect()
}

fn sdc_params(cfg: &ExperimentConfig) -> Option<SdcParams> {
    cfg.ubnf.sdc.map(|[n, d, p, k]| SdcParams { n, d, p, k })
}

fn frame_features(cfg: &ExperimentConfig, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(match sdc_params(cfg) {
        Some(p) => compute_sdc(raw, p)?,
        None => raw.clone(),
    })
}

fn frames_for<'a>(
    all: &'a HashMap<String, DMatrix<f64>>,
    ids: &[String],
) -> Result<Vec<&'a DMatrix<f64>>> {
    ids.iter()
        .map(|id| all.get(id).ok_or_else(|| anyhow!("no frames for utterance `{id}`")))
        .collect()
}

/// GMM labeling and bottleneck training on the back-end utterances' frames.
pub fn ubnf_train(ws: &Workspace, plan: &Plan) -> Result<Vec<PathBuf>> {
    let cfg = &ws.cfg;
    let u = &cfg.ubnf;
    let all = ws.load_all_frames()?;
    let ids = ids_of(&plan.backend);
    let feats: Vec<DMatrix<f64>> = frames_for(&all, &ids)?
        .into_iter()
        .map(|f| frame_features(cfg, f))
        .collect::<Result<_>>()?;
    let refs: Vec<&DMatrix<f64>> = feats.iter().collect();
    let pooled = stack_frames(&refs)?;
    let seed = rng::derive(cfg.seed, stream::UBNF);
    let (gmm, em) = fit_gmm_em(
        &pooled,
        &GmmConfig {
            mixtures: u.mixtures,
            iters: u.em_iters,
            seed,
            var_floor: u.var_floor,
            restarts: u.em_restarts,
            ..GmmConfig::default()
        },
    )?;
    let labels: Vec<Vec<usize>> = refs.iter().map(|f| frame_labels(&gmm, f)).collect::<adi_core::Result<_>>()?;
    let (net, acc) = train_bottleneck(
        &refs,
        &labels,
        u.mixtures,
        &BottleneckConfig {
            hidden: u.hidden.clone(),
            bottleneck: u.bottleneck,
            context: u.context,
            dropout: u.dropout,
            epochs: u.epochs,
            batch_size: u.batch_size,
            adam: AdamConfig {
                learning_rate: u.learning_rate,
                ..AdamConfig::default()
            },
            seed: rng::derive(seed, 1),
        },
    )?;
    log::info!("bottleneck frame accuracy {:.4}", acc);
    let mut trace = String::from("iteration\tloglik_per_frame\n");
    for (i, ll) in em.loglik.iter().enumerate() {
        trace.push_str(&format!("{i}\t{ll:.10}\n"));
    }
    Ok(vec![
        ws.write("ubnf/bnf.model", &net.to_text())?,
        ws.write("ubnf/em_trace.tsv", &trace)?,
        ws.write("ubnf/train_accuracy.txt", &format!("{acc:.6}\n"))?,
    ])
}

/// Pooled bottleneck features for the back-end set and every scoring set.
pub fn ubnf_extract(ws: &Workspace, plan: &Plan) -> Result<Vec<PathBuf>> {
    let net = BottleneckNet::parse(&ws.read("ubnf/bnf.model", "run `ubnf-train` first")?)?;
    let all = ws.load_all_frames()?;
    let mut out = Vec::new();
    let sets = std::iter::once(("backend", &plan.backend))
        .chain(plan.scoring.iter().map(|(n, d)| (n.as_str(), d)));
    for (name, ds) in sets {
        let mut set = EmbeddingSet::new();
        for id in ids_of(ds) {
            let raw = all.get(&id).ok_or_else(|| anyhow!("no frames for utterance `{id}`"))?;
            let feats = extract_ubnf(&net, &frame_features(&ws.cfg, raw)?)?;
            let duration_s = ds
                .embeddings()
                .and_then(|e| e.get(&id))
                .map_or(raw.nrows() as f64 * FRAME_SECONDS, |r| r.duration_s);
            set.push(EmbeddingRecord {
                utt_id: id,
                vector: pool_utterance(&feats)?,
                duration_s,
            })?;
        }
        let p = ws.path(format!("ubnf/{name}.emb"));
        set.save(&p)?;
        out.push(p);
    }
    Ok(out)
}

/// Embedding-like inputs of a set: ids, records, class indices.
fn embedding_inputs(
    ws: &Workspace,
    sys: &SystemConfig,
    set_name: &str,
    ds: &LabeledDataset,
) -> Result<(Vec<String>, Vec<EmbeddingRecord>, Vec<usize>)> {
    match sys.features {
        FeatureKind::Embedding => {
            let (ids, recs, y) = ds.embedding_rows()?;
            Ok((ids, recs.into_iter().cloned().collect(), y))
        }
        FeatureKind::Ubnf => {
            let p = ws.path(format!("ubnf/{set_name}.emb"));
            let set = corpus::load_embeddings(&p)
                .with_context(|| format!("loading {} (run `ubnf-extract` first)", p.display()))?;
            let mut out = (Vec::new(), Vec::new(), Vec::new());
            for (id, l) in ds.labels().iter() {
                let r = set
                    .get(id)
                    .ok_or_else(|| anyhow!("{}: no features for `{id}`", p.display()))?;
                out.0.push(id.to_string());
                out.1.push(r.clone());
                out.2.push(l.index());
            }
            Ok(out)
        }
        FeatureKind::Transcript => bail!("system `{}` does not use embeddings", sys.id),
    }
}

fn text_pipeline(sys: &SystemConfig) -> Result<TextPipeline> {
    let s = &sys.svm;
    let stemmer = match s.stemmer.as_str() {
        "english" => SuffixStemmer::english(),
        "arabic" => SuffixStemmer::arabic(),
        "buckwalter" => SuffixStemmer::buckwalter(),
        path => SuffixStemmer::from_file(Path::new(path), adi_core::text::DEFAULT_MIN_STEM)?,
    };
    let stoplist: HashSet<String> = match &s.stoplist {
        Some(p) => adi_core::text::load_word_list(p)?.into_iter().collect(),
        None => HashSet::new(),
    };
    Ok(TextPipeline::new(PreprocCombo::new(s.combo)?, stoplist, stemmer))
}

fn gan_config(sys: &SystemConfig, seed: u64) -> GanConfig {
    let g = &sys.gan;
    let adam = AdamConfig {
        learning_rate: g.learning_rate,
        ..AdamConfig::gan()
    };
    GanConfig {
        noise_dim: g.noise_dim,
        generator_hidden: g.generator_hidden.clone(),
        discriminator_hidden: g.discriminator_hidden.clone(),
        dropout: g.dropout,
        epochs: g.epochs,
        batch_size: g.batch_size,
        discriminator_adam: adam,
        generator_adam: adam,
        seed,
        ..GanConfig::default()
    }
}

fn system_seed(cfg: &ExperimentConfig, sys: &SystemConfig) -> u64 {
    let idx = cfg.systems.iter().position(|s| s.id == sys.id).unwrap_or(0) as u64;
    rng::derive(cfg.seed, stream::SYSTEM + idx)
}

/// Trains one system on the back-end set and saves its model files.
pub fn train_system(ws: &Workspace, plan: &Plan, sys: &SystemConfig) -> Result<Vec<PathBuf>> {
    let seed = system_seed(&ws.cfg, sys);
    let id = &sys.id;
    match sys.backend {
        BackendKind::Svm => {
            let pipeline = text_pipeline(sys)?;
            let (_, docs, y) = plan.backend.transcript_rows()?;
            let feats: Vec<_> = docs.iter().map(|d| pipeline.features(d)).collect();
            let vocab = Vocab::build(&feats, sys.svm.min_df);
            let scheme: TermWeighting = sys.svm.weighting.parse()?;
            let x: Vec<_> = feats.iter().map(|f| vocab.vectorize(f, scheme)).collect();
            let params = SvmParams {
                c: sys.svm.c,
                tol: sys.svm.tol,
                max_iter: sys.svm.max_iter,
                seed,
                ..SvmParams::default()
            };
            let model = train_svm_with_dim(&x, &y, NUM_DIALECTS, vocab.len(), &params)?;
            let mut vtext = Vec::new();
            vocab.write(&mut vtext)?;
            Ok(vec![
                ws.write(&format!("models/{id}.vocab"), &String::from_utf8(vtext)?)?,
                ws.write(&format!("models/{id}.svm"), &model.to_text())?,
            ])
        }
        BackendKind::Gb => {
            let (_, recs, y) = embedding_inputs(ws, sys, "backend", &plan.backend)?;
            let x: Vec<Vec<f64>> = recs.iter().map(|r| r.vector.clone()).collect();
            let mut out = Vec::new();
            let x = if sys.gb.lda_dim > 0 {
                let lda = fit_lda(&x, &y, NUM_DIALECTS, sys.gb.lda_dim, Shrinkage::Relative(sys.gb.lda_shrinkage))?;
                out.push(ws.write(&format!("models/{id}.lda"), &lda.to_text())?);
                lda.project_all(&x)?
            } else {
                x
            };
            let gb = fit_gb(&x, &y, NUM_DIALECTS, sys.gb.shrinkage)?;
            out.push(ws.write(&format!("models/{id}.gb"), &gb.to_text())?);
            Ok(out)
        }
        BackendKind::Gan => {
            let (_, recs, y) = embedding_inputs(ws, sys, "backend", &plan.backend)?;
            let x: Vec<Vec<f64>> = recs.iter().map(gan::with_duration).collect();
            let mut unlabeled = Vec::new();
            if sys.gan.unlabeled == UnlabeledPool::Scoring {
                for (name, ds) in &plan.scoring {
                    let (_, r, _) = embedding_inputs(ws, sys, name, ds)?;
                    unlabeled.extend(r.iter().map(gan::with_duration));
                }
            }
            let model = train_gan(LabeledInputs { x: &x, y: &y }, &unlabeled, None, &gan_config(sys, seed))?;
            Ok(vec![
                ws.write(&format!("models/{id}.gan"), &model.to_text())?,
                ws.write(&format!("models/{id}.gan.log.tsv"), &model.log_tsv())?,
            ])
        }
    }
}

enum Scorer {
    Svm(TextPipeline, Vocab, TermWeighting, SvmModel),
    Gb(Option<LdaModel>, GbModel),
    Gan(GanModel),
}

fn load_scorer(ws: &Workspace, sys: &SystemConfig) -> Result<Scorer> {
    let id = &sys.id;
    let hint = "train the system first";
    Ok(match sys.backend {
        BackendKind::Svm => Scorer::Svm(
            text_pipeline(sys)?,
            Vocab::parse(&ws.read(&format!("models/{id}.vocab"), hint)?)?,
            sys.svm.weighting.parse()?,
            SvmModel::parse(ws.read(&format!("models/{id}.svm"), hint)?.as_bytes())?,
        ),
        BackendKind::Gb => {
            let lda = if sys.gb.lda_dim > 0 {
                Some(LdaModel::parse(&ws.read(&format!("models/{id}.lda"), hint)?)?)
            } else {
                None
            };
            Scorer::Gb(lda, GbModel::parse(&ws.read(&format!("models/{id}.gb"), hint)?)?)
        }
        BackendKind::Gan => Scorer::Gan(GanModel::parse(&ws.read(&format!("models/{id}.gan"), hint)?)?),
    })
}

/// Scores every scoring set with a trained system; one TSV per set.
pub fn score_system(ws: &Workspace, plan: &Plan, sys: &SystemConfig) -> Result<Vec<PathBuf>> {
    let scorer = load_scorer(ws, sys)?;
    ws.ensure_dir("scores")?;
    let mut out = Vec::new();
    for (name, ds) in &plan.scoring {
        let m = match &scorer {
            Scorer::Svm(pipeline, vocab, scheme, model) => {
                let mut m = ScoreMatrix::new(&sys.id, ScoreKind::DecisionValue, NUM_DIALECTS);
                let (ids, docs, _) = ds.transcript_rows()?;
                for (id, d) in ids.into_iter().zip(docs) {
                    let v = vocab.vectorize(&pipeline.features(&d), *scheme);
                    m.push(id, model.scores(&v))?;
                }
                m
            }
            Scorer::Gb(lda, gb) => {
                let mut m = ScoreMatrix::new(&sys.id, ScoreKind::LogLikelihood, NUM_DIALECTS);
                let (ids, recs, _) = embedding_inputs(ws, sys, name, ds)?;
                for (id, r) in ids.into_iter().zip(recs) {
                    let x = match lda {
                        Some(l) => l.project(&r.vector)?,
                        None => r.vector,
                    };
                    m.push(id, gb.loglik(&x)?)?;
                }
                m
            }
            Scorer::Gan(model) => {
                let mut m = ScoreMatrix::new(&sys.id, ScoreKind::LogProbability, NUM_DIALECTS);
                let (ids, recs, _) = embedding_inputs(ws, sys, name, ds)?;
                for (id, r) in ids.into_iter().zip(recs) {
                    m.push(id, model.predict(&gan::with_duration(&r))?.1)?;
                }
                m
            }
        };
        let p = score_path(ws, &sys.id, name);
        m.save(&p).with_context(|| format!("cannot write {}", p.display()))?;
        out.push(p);
    }
    Ok(out)
}

pub fn score_path(ws: &Workspace, system: &str, set: &str) -> PathBuf {
    ws.path(format!("scores/{system}.{set}.tsv"))
}

/// Every system's scores on one set, aligned to the set's labeled ids.
pub fn aligned(ws: &Workspace, set: &str, ds: &LabeledDataset) -> Result<(AlignedScores, Vec<usize>)> {
    let mats: Vec<ScoreMatrix> = ws
        .cfg
        .systems
        .iter()
        .map(|s| {
            let p = score_path(ws, &s.id, set);
            ScoreMatrix::load(&p).with_context(|| format!("loading {} (run `score` first)", p.display()))
        })
        .collect::<Result<_>>()?;
    Ok((AlignedScores::new(&mats, &ids_of(ds))?, labels_of(ds)))
}

/// Fusion of all systems trained on the fusion set.
pub fn fuse_train(ws: &Workspace, plan: &Plan) -> Result<(FusionModel, Vec<PathBuf>)> {
    let (name, ds) = plan.fusion_set();
    let (data, y) = aligned(ws, name, ds)?;
    let model = train_fusion(&data, &y, &ws.cfg.fusion.params())?;
    let mut trace = String::from("step\tobjective\n");
    for (i, v) in model.objective_trace().iter().enumerate() {
        trace.push_str(&format!("{i}\t{v:.12}\n"));
    }
    let paths = vec![
        ws.write("fusion/model.txt", &model.to_text())?,
        ws.write("fusion/objective.tsv", &trace)?,
    ];
    Ok((model, paths))
}

/// Every non-empty subset of systems. Dev protocol: fusion trained and
/// scored inside the dev set (split or k-fold); submission protocol: trained
/// on the fusion set, scored on the report set.
pub fn fuse_sweep(ws: &Workspace, plan: &Plan) -> Result<(Vec<SweepRow>, PathBuf)> {
    let cfg = &ws.cfg;
    let params = cfg.fusion.params();
    let avg = cfg.eval.averaging()?;
    let (fname, fds) = plan.fusion_set();
    let (fdata, fy) = aligned(ws, fname, fds)?;
    let rows = match cfg.protocol.kind {
        ProtocolKind::Dev => {
            let seed = rng::derive(cfg.seed, stream::FUSION_EVAL);
            let protocol = match cfg.protocol.sweep {
                SweepKind::Split => Protocol::Split {
                    fraction: cfg.protocol.fusion_fraction,
                    seed,
                },
                SweepKind::Kfold => Protocol::KFold {
                    folds: cfg.protocol.folds,
                    seed,
                },
            };
            sweep_combinations(&fdata, &fy, &protocol, &params, avg)?
        }
        ProtocolKind::Submission => {
            let (rname, rds) = plan.report_set();
            let (rdata, ry) = aligned(ws, rname, rds)?;
            sweep_heldout(&fdata, &fy, &rdata, &ry, &params, avg)?
        }
    };
    let p = ws.write("fusion/sweep.tsv", &sweep_tsv(&rows))?;
    Ok((rows, p))
}

/// One report row per system (argmax of its own scores on the report set)
/// plus the all-system fusion: k-fold on dev, or fusion-set model on test.
pub fn evaluate(ws: &Workspace, plan: &Plan) -> Result<(Vec<(String, Metrics)>, Vec<PathBuf>)> {
    let cfg = &ws.cfg;
    let avg = cfg.eval.averaging()?;
    let (rname, rds) = plan.report_set();
    let (rdata, ry) = aligned(ws, rname, rds)?;
    let mut rows = Vec::new();
    for (s, id) in rdata.system_ids().iter().enumerate() {
        let cm = confusion(&rdata.system_predictions(s), &ry, NUM_DIALECTS)?;
        rows.push((id.clone(), metrics(&cm, avg)));
    }
    let fused = match cfg.protocol.kind {
        ProtocolKind::Dev => {
            let r = kfold_eval(
                &rdata,
                &ry,
                cfg.protocol.folds,
                rng::derive(cfg.seed, stream::FUSION_EVAL),
                &cfg.fusion.params(),
                avg,
            )?;
            ("fusion:all (cv)".to_string(), r.mean)
        }
        ProtocolKind::Submission => {
            let model = FusionModel::parse(&ws.read("fusion/model.txt", "run `fuse-train` first")?)?;
            let cm = confusion(&model.predict_all(&rdata)?, &ry, NUM_DIALECTS)?;
            ("fusion:all".to_string(), metrics(&cm, avg))
        }
    };
    rows.push(fused);
    let paths = vec![
        ws.write("report.tsv", &report(&rows, ReportFormat::Tsv))?,
        ws.write("report.md", &report(&rows, ReportFormat::Markdown))?,
    ];
    Ok((rows, paths))
}

/// 2-D (or `dim`-D) LDA view of a split's embeddings, fitted on train.
pub fn project_dump(ws: &Workspace, split: SplitTag, dim: usize) -> Result<PathBuf> {
    let train = ws.require_split(SplitTag::Train)?;
    let (_, recs, y) = train.embedding_rows()?;
    let x: Vec<Vec<f64>> = recs.iter().map(|r| r.vector.clone()).collect();
    let lda = fit_lda(&x, &y, NUM_DIALECTS, dim, Shrinkage::default())?;
    let ds = ws.require_split(split)?;
    let (ids, recs, _) = ds.embedding_rows()?;
    let mut s = String::from("utt_id\tlabel");
    for j in 0..dim {
        s.push_str(&format!("\tld{}", j + 1));
    }
    s.push('\n');
    for (id, r) in ids.iter().zip(recs) {
        let label = ds.labels().get(id).expect("labeled");
        s.push_str(&format!("{id}\t{label}"));
        for v in lda.project(&r.vector)? {
            s.push_str(&format!("\t{v:.6}"));
        }
        s.push('\n');
    }
    ws.write(&format!("projection.{}.tsv", split.as_str()), &s)
}

/// Loads score files for file-based fusion commands, aligned to `labels`.
pub fn aligned_from_files(score_files: &[PathBuf], labels: &Path) -> Result<(AlignedScores, Vec<usize>)> {
    let labels = corpus::load_labels(labels)?;
    let mats: Vec<ScoreMatrix> = score_files
        .iter()
        .map(|p| ScoreMatrix::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<_>>()?;
    let ids: Vec<String> = labels.ids().map(str::to_string).collect();
    let y = labels.iter().map(|(_, l)| l.index()).collect();
    Ok((AlignedScores::new(&mats, &ids)?, y))
}
