//! Data model and text formats for labeled utterance corpora.
//!
//! Three line-oriented formats are read and written here:
//!
//! * embeddings: `utt_id <D> v1 ... vD dur=<seconds>`
//! * labels: `utt_id<TAB>DIALECT`
//! * transcripts: `utt_id<TAB>tok1 tok2 ...`
//!
//! Reals are written with Rust's shortest round-trip `Display`, so a save/load
//! cycle reproduces every value bit for bit.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};

use crate::error::{AdiError, Result};
use crate::rng;

pub const NUM_DIALECTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DialectLabel {
    Egy,
    Glf,
    Lav,
    Msa,
    Nor,
}

impl DialectLabel {
    pub const ALL: [DialectLabel; NUM_DIALECTS] = [
        DialectLabel::Egy,
        DialectLabel::Glf,
        DialectLabel::Lav,
        DialectLabel::Msa,
        DialectLabel::Nor,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            DialectLabel::Egy => "EGY",
            DialectLabel::Glf => "GLF",
            DialectLabel::Lav => "LAV",
            DialectLabel::Msa => "MSA",
            DialectLabel::Nor => "NOR",
        }
    }
}

impl fmt::Display for DialectLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for DialectLabel {
    type Err = AdiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "EGY" => Ok(DialectLabel::Egy),
            "GLF" => Ok(DialectLabel::Glf),
            // LEV is the spelling used in some challenge documents
            "LAV" | "LEV" => Ok(DialectLabel::Lav),
            "MSA" => Ok(DialectLabel::Msa),
            "NOR" => Ok(DialectLabel::Nor),
            other => Err(AdiError::invalid(format!("unknown dialect symbol `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Dev,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Dev => "dev",
            SplitTag::Test => "test",
        }
    }
}

impl FromStr for SplitTag {
    type Err = AdiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "dev" => Ok(SplitTag::Dev),
            "test" => Ok(SplitTag::Test),
            other => Err(AdiError::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub utt_id: String,
    pub vector: Vec<f64>,
    pub duration_s: f64,
}

/// Ordered set of fixed-dimension utterance embeddings, indexed by utterance id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingSet {
    dim: Option<usize>,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dimension, undefined until the first record is added.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn get(&self, utt_id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(utt_id).map(|&i| &self.records[i])
    }

    pub fn push(&mut self, record: EmbeddingRecord) -> Result<()> {
        if let Some(d) = self.dim {
            if record.vector.len() != d {
                return Err(AdiError::DimensionMismatch {
                    expected: d,
                    got: record.vector.len(),
                });
            }
        }
        if !(record.duration_s >= 0.0 && record.duration_s.is_finite()) {
            return Err(AdiError::invalid(format!(
                "{}: duration must be finite and nonnegative",
                record.utt_id
            )));
        }
        if record.vector.iter().any(|v| !v.is_finite()) {
            return Err(AdiError::invalid(format!(
                "{}: non-finite embedding component",
                record.utt_id
            )));
        }
        if self.index.contains_key(&record.utt_id) {
            return Err(AdiError::invalid(format!(
                "duplicate utterance id `{}`",
                record.utt_id
            )));
        }
        self.dim = Some(record.vector.len());
        self.index.insert(record.utt_id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn parse<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut set = EmbeddingSet::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = parse_embedding_line(&line)
                .map_err(|msg| AdiError::parse(source_name, line_no, msg))?;
            set.push(record)
                .map_err(|e| AdiError::parse(source_name, line_no, e.to_string()))?;
        }
        Ok(set)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            write!(w, "{} {}", r.utt_id, r.vector.len())?;
            for v in &r.vector {
                write!(w, " {v}")?;
            }
            writeln!(w, " dur={}", r.duration_s)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    /// Restriction to the given ids, in the given order.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut out = EmbeddingSet::new();
        out.dim = self.dim;
        for id in ids {
            let r = self
                .get(id)
                .ok_or_else(|| AdiError::invalid(format!("no embedding for `{id}`")))?;
            out.push(r.clone())?;
        }
        Ok(out)
    }
}

fn parse_embedding_line(line: &str) -> std::result::Result<EmbeddingRecord, String> {
    let mut fields = line.split_whitespace();
    let utt_id = fields.next().ok_or("missing utterance id")?.to_string();
    let dim: usize = fields
        .next()
        .ok_or("missing dimension field")?
        .parse()
        .map_err(|_| "dimension field is not an integer".to_string())?;
    let mut vector = Vec::with_capacity(dim);
    let mut duration = None;
    for f in fields {
        if let Some(d) = f.strip_prefix("dur=") {
            let d: f64 = d.parse().map_err(|_| format!("bad duration `{d}`"))?;
            duration = Some(d);
        } else {
            if duration.is_some() {
                return Err("values after dur= field".into());
            }
            vector.push(f.parse::<f64>().map_err(|_| format!("non-numeric field `{f}`"))?);
        }
    }
    if vector.len() != dim {
        return Err(format!(
            "declared dimension {dim} but found {} values",
            vector.len()
        ));
    }
    Ok(EmbeddingRecord {
        utt_id,
        vector,
        duration_s: duration.ok_or("missing dur= field")?,
    })
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    EmbeddingSet::parse(fs::File::open(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptRecord {
    pub utt_id: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TranscriptSet {
    records: Vec<TranscriptRecord>,
    index: HashMap<String, usize>,
}

impl TranscriptSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn get(&self, utt_id: &str) -> Option<&TranscriptRecord> {
        self.index.get(utt_id).map(|&i| &self.records[i])
    }

    pub fn push(&mut self, record: TranscriptRecord) -> Result<()> {
        if record.tokens.iter().any(|t| t.is_empty()) {
            return Err(AdiError::invalid(format!("{}: empty token", record.utt_id)));
        }
        if self.index.contains_key(&record.utt_id) {
            return Err(AdiError::invalid(format!(
                "duplicate utterance id `{}`",
                record.utt_id
            )));
        }
        self.index.insert(record.utt_id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn parse<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut set = TranscriptSet::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (utt, text) = line.split_once('\t').unwrap_or((line.as_str(), ""));
            if utt.is_empty() {
                return Err(AdiError::parse(source_name, i + 1, "missing utterance id"));
            }
            let record = TranscriptRecord {
                utt_id: utt.to_string(),
                tokens: text.split_whitespace().map(str::to_string).collect(),
            };
            set.push(record)
                .map_err(|e| AdiError::parse(source_name, i + 1, e.to_string()))?;
        }
        Ok(set)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            writeln!(w, "{}\t{}", r.utt_id, r.tokens.join(" "))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut out = TranscriptSet::new();
        for id in ids {
            let r = self
                .get(id)
                .ok_or_else(|| AdiError::invalid(format!("no transcript for `{id}`")))?;
            out.push(r.clone())?;
        }
        Ok(out)
    }
}

pub fn load_transcripts(path: &Path) -> Result<TranscriptSet> {
    TranscriptSet::parse(fs::File::open(path)?, &path.display().to_string())
}

/// Utterance labels in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelMap {
    entries: Vec<(String, DialectLabel)>,
    index: HashMap<String, usize>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, utt_id: &str) -> Option<DialectLabel> {
        self.index.get(utt_id).map(|&i| self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, DialectLabel)> {
        self.entries.iter().map(|(u, l)| (u.as_str(), *l))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(u, _)| u.as_str())
    }

    pub fn insert(&mut self, utt_id: impl Into<String>, label: DialectLabel) -> Result<()> {
        let utt_id = utt_id.into();
        if self.index.contains_key(&utt_id) {
            return Err(AdiError::invalid(format!("duplicate utterance id `{utt_id}`")));
        }
        self.index.insert(utt_id.clone(), self.entries.len());
        self.entries.push((utt_id, label));
        Ok(())
    }

    pub fn counts(&self) -> [usize; NUM_DIALECTS] {
        let mut c = [0; NUM_DIALECTS];
        for (_, l) in &self.entries {
            c[l.index()] += 1;
        }
        c
    }

    pub fn parse<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut map = LabelMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (utt, sym) = line
                .split_once('\t')
                .ok_or_else(|| AdiError::parse(source_name, i + 1, "expected utt_id<TAB>DIALECT"))?;
            let label: DialectLabel = sym
                .trim()
                .parse()
                .map_err(|e: AdiError| AdiError::parse(source_name, i + 1, e.to_string()))?;
            map.insert(utt, label)
                .map_err(|e| AdiError::parse(source_name, i + 1, e.to_string()))?;
        }
        Ok(map)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (u, l) in &self.entries {
            writeln!(w, "{u}\t{l}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }
}

pub fn load_labels(path: &Path) -> Result<LabelMap> {
    LabelMap::parse(fs::File::open(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    embeddings: Option<EmbeddingSet>,
    transcripts: Option<TranscriptSet>,
    labels: LabelMap,
    split: SplitTag,
}

impl LabeledDataset {
    /// Every labeled utterance must be present in at least one of the two views.
    pub fn new(
        embeddings: Option<EmbeddingSet>,
        transcripts: Option<TranscriptSet>,
        labels: LabelMap,
        split: SplitTag,
    ) -> Result<Self> {
        for id in labels.ids() {
            let in_emb = embeddings.as_ref().is_some_and(|e| e.get(id).is_some());
            let in_txt = transcripts.as_ref().is_some_and(|t| t.get(id).is_some());
            if !in_emb && !in_txt {
                return Err(AdiError::invalid(format!(
                    "labeled utterance `{id}` has neither embedding nor transcript"
                )));
            }
        }
        Ok(Self {
            embeddings,
            transcripts,
            labels,
            split,
        })
    }

    pub fn embeddings(&self) -> Option<&EmbeddingSet> {
        self.embeddings.as_ref()
    }

    pub fn transcripts(&self) -> Option<&TranscriptSet> {
        self.transcripts.as_ref()
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Labeled utterances with embeddings, in label order: ids, records, class indices.
    pub fn embedding_rows(&self) -> Result<(Vec<String>, Vec<&EmbeddingRecord>, Vec<usize>)> {
        let e = self
            .embeddings
            .as_ref()
            .ok_or_else(|| AdiError::invalid("dataset has no embeddings"))?;
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        for (id, l) in self.labels.iter() {
            if let Some(r) = e.get(id) {
                out.0.push(id.to_string());
                out.1.push(r);
                out.2.push(l.index());
            }
        }
        Ok(out)
    }

    /// Labeled utterances with transcripts, in label order: ids, token lists, class indices.
    pub fn transcript_rows(&self) -> Result<(Vec<String>, Vec<Vec<String>>, Vec<usize>)> {
        let t = self
            .transcripts
            .as_ref()
            .ok_or_else(|| AdiError::invalid("dataset has no transcripts"))?;
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        for (id, l) in self.labels.iter() {
            if let Some(r) = t.get(id) {
                out.0.push(id.to_string());
                out.1.push(r.tokens.clone());
                out.2.push(l.index());
            }
        }
        Ok(out)
    }

    /// Restriction to `ids` (all must be labeled), keeping `ids` order.
    pub fn subset(&self, ids: &[&str], split: SplitTag) -> Result<Self> {
        let mut labels = LabelMap::new();
        for id in ids {
            let l = self
                .labels
                .get(id)
                .ok_or_else(|| AdiError::invalid(format!("`{id}` is not labeled")))?;
            labels.insert(*id, l)?;
        }
        let embeddings = match &self.embeddings {
            Some(e) => Some(e.subset(ids.iter().copied().filter(|id| e.get(id).is_some()))?),
            None => None,
        };
        let transcripts = match &self.transcripts {
            Some(t) => Some(t.subset(ids.iter().copied().filter(|id| t.get(id).is_some()))?),
            None => None,
        };
        LabeledDataset::new(embeddings, transcripts, labels, split)
    }

    /// Concatenation of two disjoint datasets carrying the same views.
    pub fn concat(&self, other: &LabeledDataset, split: SplitTag) -> Result<Self> {
        let mut labels = self.labels.clone();
        for (u, l) in other.labels.iter() {
            labels.insert(u, l)?;
        }
        let embeddings = match (&self.embeddings, &other.embeddings) {
            (Some(a), Some(b)) => {
                let mut e = a.clone();
                for r in b.records() {
                    e.push(r.clone())?;
                }
                Some(e)
            }
            (None, None) => None,
            _ => return Err(AdiError::invalid("cannot concatenate: embedding views differ")),
        };
        let transcripts = match (&self.transcripts, &other.transcripts) {
            (Some(a), Some(b)) => {
                let mut t = a.clone();
                for r in b.records() {
                    t.push(r.clone())?;
                }
                Some(t)
            }
            (None, None) => None,
            _ => return Err(AdiError::invalid("cannot concatenate: transcript views differ")),
        };
        LabeledDataset::new(embeddings, transcripts, labels, split)
    }
}

/// Per-class stratified random partition. Within each class the members are
/// shuffled and cut by largest-remainder allocation, so every part's per-class
/// count is within one of `fraction * class_size`.
pub fn split_dataset(
    ds: &LabeledDataset,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<LabeledDataset>> {
    let parts = stratified_partition(ds.labels(), fractions, seed)?;
    parts
        .iter()
        .map(|ids| {
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            ds.subset(&refs, ds.split())
        })
        .collect()
}

/// Id-level stratified partition shared by dataset splitting and k-fold.
pub fn stratified_partition(
    labels: &LabelMap,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    let ids: Vec<&str> = labels.ids().collect();
    let classes: Vec<usize> = labels.iter().map(|(_, l)| l.index()).collect();
    let parts = stratified_indices(&classes, NUM_DIALECTS, fractions, seed)?;
    Ok(parts
        .into_iter()
        .map(|p| p.into_iter().map(|i| ids[i].to_string()).collect())
        .collect())
}

/// Stratified partition of sample indices `0..labels.len()`. Each part lists
/// classes in ascending order, members in shuffled order.
pub fn stratified_indices(
    labels: &[usize],
    num_classes: usize,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0)) {
        return Err(AdiError::invalid("split fractions must be positive"));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(AdiError::invalid(format!(
            "split fractions sum to {sum}, not 1"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(AdiError::invalid(format!("label {l} ≥ {num_classes} classes")));
        }
        by_class[l].push(i);
    }
    let mut rng = rng::seeded(seed);
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); fractions.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let sizes = largest_remainder(members.len(), fractions);
        if let Some(j) = sizes.iter().position(|&s| s == 0) {
            let name = DialectLabel::from_index(class)
                .filter(|_| num_classes == NUM_DIALECTS)
                .map_or(class.to_string(), |d| d.to_string());
            return Err(AdiError::invalid(format!(
                "class {name} has {} sample(s); part {j} would receive none",
                members.len()
            )));
        }
        let mut start = 0;
        for (part, size) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&members[start..start + size]);
            start += size;
        }
    }
    Ok(parts)
}

fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // largest fractional part first, lowest index on ties
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &j in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[j] += 1;
        left -= 1;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ManifestStats {
    pub utterances: [usize; NUM_DIALECTS],
    pub hours: [f64; NUM_DIALECTS],
    pub kwords: [f64; NUM_DIALECTS],
}

impl ManifestStats {
    pub fn total_utterances(&self) -> usize {
        self.utterances.iter().sum()
    }

    pub fn total_hours(&self) -> f64 {
        self.hours.iter().sum()
    }

    pub fn total_kwords(&self) -> f64 {
        self.kwords.iter().sum()
    }
}

pub fn manifest_stats(ds: &LabeledDataset) -> ManifestStats {
    let mut stats = ManifestStats::default();
    for (u, l) in ds.labels().iter() {
        let c = l.index();
        stats.utterances[c] += 1;
        if let Some(r) = ds.embeddings().and_then(|e| e.get(u)) {
            stats.hours[c] += r.duration_s / 3600.0;
        }
        if let Some(r) = ds.transcripts().and_then(|t| t.get(u)) {
            stats.kwords[c] += r.tokens.len() as f64 / 1000.0;
        }
    }
    stats
}

/// Expected per-split, per-dialect corpus statistics.
///
/// TSV columns: `split dialect utterances hours kwords`, with one optional
/// `TOTAL` row per split that must agree with the per-dialect rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub split: SplitTag,
    /// `None` for the TOTAL row.
    pub dialect: Option<DialectLabel>,
    pub utterances: usize,
    pub hours: f64,
    pub kwords: f64,
}

const BUNDLED_MANIFEST: &str = include_str!("../data/mgb3_adi_manifest.tsv");

impl Manifest {
    /// Published statistics of the MGB-3 ADI training, development and test sets.
    pub fn bundled() -> Self {
        Manifest::parse(BUNDLED_MANIFEST.as_bytes(), "bundled manifest")
            .expect("bundled manifest parses")
    }

    pub fn parse<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') || line.starts_with("split\t") {
                continue;
            }
            let bad = |msg: String| AdiError::parse(source_name, i + 1, msg);
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(format!("expected 5 columns, found {}", f.len())));
            }
            let split: SplitTag = f[0].parse().map_err(|e: AdiError| bad(e.to_string()))?;
            let dialect = if f[1] == "TOTAL" {
                None
            } else {
                Some(f[1].parse().map_err(|e: AdiError| bad(e.to_string()))?)
            };
            let utterances = f[2]
                .replace(',', "")
                .parse()
                .map_err(|_| bad(format!("bad utterance count `{}`", f[2])))?;
            let hours = f[3]
                .parse()
                .map_err(|_| bad(format!("bad hours `{}`", f[3])))?;
            let kwords = f[4]
                .parse()
                .map_err(|_| bad(format!("bad word count `{}`", f[4])))?;
            rows.push(ManifestRow {
                split,
                dialect,
                utterances,
                hours,
                kwords,
            });
        }
        Ok(Manifest { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Manifest::parse(fs::File::open(path)?, &path.display().to_string())
    }

    pub fn splits(&self) -> Vec<SplitTag> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.split) {
                seen.push(r.split);
            }
        }
        seen
    }

    pub fn expected(&self, split: SplitTag) -> Option<ManifestStats> {
        let mut stats = ManifestStats::default();
        let mut any = false;
        for r in self.rows.iter().filter(|r| r.split == split) {
            if let Some(d) = r.dialect {
                any = true;
                stats.utterances[d.index()] = r.utterances;
                stats.hours[d.index()] = r.hours;
                stats.kwords[d.index()] = r.kwords;
            }
        }
        any.then_some(stats)
    }

    pub fn total(&self, split: SplitTag) -> Option<&ManifestRow> {
        self.rows
            .iter()
            .find(|r| r.split == split && r.dialect.is_none())
    }

    /// Internal consistency: no dialect listed twice per split, and TOTAL rows
    /// equal the per-dialect sums (hours and words to the table's 0.05 rounding).
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.rows {
            if !seen.insert((r.split, r.dialect)) {
                return Err(AdiError::invalid(format!(
                    "{} {} listed twice",
                    r.split.as_str(),
                    r.dialect.map_or("TOTAL", DialectLabel::symbol)
                )));
            }
        }
        for split in self.splits() {
            let Some(expected) = self.expected(split) else {
                continue;
            };
            if let Some(total) = self.total(split) {
                if expected.total_utterances() != total.utterances {
                    return Err(AdiError::invalid(format!(
                        "{}: dialect rows sum to {} utterances, TOTAL says {}",
                        split.as_str(),
                        expected.total_utterances(),
                        total.utterances
                    )));
                }
                for (what, sum, stated) in [
                    ("hours", expected.total_hours(), total.hours),
                    ("kwords", expected.total_kwords(), total.kwords),
                ] {
                    if (sum - stated).abs() > 0.05 + 1e-9 {
                        return Err(AdiError::invalid(format!(
                            "{}: dialect rows sum to {sum:.2} {what}, TOTAL says {stated}",
                            split.as_str()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-dialect utterance counts of `stats` must match the manifest exactly.
    pub fn check(&self, split: SplitTag, stats: &ManifestStats) -> Result<()> {
        let expected = self.expected(split).ok_or_else(|| {
            AdiError::invalid(format!("manifest has no rows for split {}", split.as_str()))
        })?;
        let mismatches: Vec<String> = DialectLabel::ALL
            .iter()
            .filter(|d| expected.utterances[d.index()] != stats.utterances[d.index()])
            .map(|d| {
                format!(
                    "{d}: expected {} got {}",
                    expected.utterances[d.index()],
                    stats.utterances[d.index()]
                )
            })
            .collect();
        if mismatches.is_empty() {
            Ok(())
        } else {
            Err(AdiError::invalid(format!(
                "{} counts differ from manifest: {}",
                split.as_str(),
                mismatches.join("; ")
            )))
        }
    }
}

/// Parameters for a synthetic corpus whose class geometry resembles the
/// published 2-D LDA scatter: five Gaussian clusters with means on a regular
/// pentagon in the first two embedding axes, plus class-dependent unigram
/// distributions for transcripts.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub counts: [usize; NUM_DIALECTS],
    /// Distance of every class mean from the grand mean, in units of `sigma`.
    pub separation: f64,
    /// Per-axis within-class standard deviation (isotropic, shared).
    pub sigma: f64,
    /// Log-normal duration parameters (of ln seconds).
    pub duration_log_mean: f64,
    pub duration_log_sd: f64,
    pub text: TextSynth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextSynth {
    pub vocab_size: usize,
    /// Mean transcript length; lengths are 1 + Poisson(mean - 1).
    pub mean_tokens: f64,
    /// Each class owns a disjoint block of this many vocabulary entries.
    pub marker_words: usize,
    /// Relative unigram weight of a class's own marker words (others weigh 1).
    pub marker_boost: f64,
}

impl Default for TextSynth {
    fn default() -> Self {
        Self {
            vocab_size: 200,
            mean_tokens: 20.0,
            marker_words: 20,
            marker_boost: 6.0,
        }
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dim: 20,
            counts: [100; NUM_DIALECTS],
            separation: 4.0,
            sigma: 1.0,
            duration_log_mean: 4.0f64.ln(),
            duration_log_sd: 0.5,
            text: TextSynth::default(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(AdiError::invalid("synthetic dimension must be at least 2"));
        }
        if self.counts.iter().any(|&c| c == 0) {
            return Err(AdiError::invalid("synthetic class counts must be positive"));
        }
        if !(self.sigma > 0.0) || !(self.separation >= 0.0) {
            return Err(AdiError::invalid("sigma must be positive, separation nonnegative"));
        }
        let t = &self.text;
        if t.vocab_size == 0 || t.mean_tokens < 1.0 {
            return Err(AdiError::invalid("vocabulary and transcript length must be positive"));
        }
        if t.marker_words * NUM_DIALECTS > t.vocab_size {
            return Err(AdiError::invalid("marker blocks exceed the vocabulary"));
        }
        Ok(())
    }

    pub fn class_mean(&self, class: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        let angle = 2.0 * std::f64::consts::PI * class as f64 / NUM_DIALECTS as f64;
        let r = self.separation * self.sigma;
        m[0] = r * angle.cos();
        m[1] = r * angle.sin();
        m
    }

    pub fn token(i: usize) -> String {
        format!("w{i:03}")
    }

    pub fn unigram_weights(&self, class: usize) -> Vec<f64> {
        let t = &self.text;
        let mut w = vec![1.0; t.vocab_size];
        for v in &mut w[class * t.marker_words..(class + 1) * t.marker_words] {
            *v = t.marker_boost;
        }
        let z: f64 = w.iter().sum();
        w.iter().map(|v| v / z).collect()
    }
}

/// Draws a labeled corpus with embeddings, durations and transcripts.
/// Utterance ids are `<split>-<DIALECT>-<nnnnn>`, so corpora generated for
/// different splits never collide.
pub fn synth_generate(spec: &SyntheticSpec, split: SplitTag, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = rng::seeded(seed);
    let noise = Normal::new(0.0, spec.sigma).expect("sigma validated");
    let duration = LogNormal::new(spec.duration_log_mean, spec.duration_log_sd)
        .map_err(|e| AdiError::invalid(format!("duration distribution: {e}")))?;
    let extra_tokens = (spec.text.mean_tokens > 1.0)
        .then(|| Poisson::new(spec.text.mean_tokens - 1.0).expect("positive rate"));

    let mut embeddings = EmbeddingSet::new();
    let mut transcripts = TranscriptSet::new();
    let mut labels = LabelMap::new();
    for (class, &count) in spec.counts.iter().enumerate() {
        let label = DialectLabel::ALL[class];
        let mean = spec.class_mean(class);
        let words = WeightedIndex::new(spec.unigram_weights(class)).expect("positive weights");
        for i in 0..count {
            let utt_id = format!("{}-{}-{:05}", split.as_str(), label, i);
            let vector = mean.iter().map(|m| m + noise.sample(&mut rng)).collect();
            let duration_s = duration.sample(&mut rng);
            let n_tokens = 1 + extra_tokens
                .as_ref()
                .map_or(0, |p| p.sample(&mut rng) as usize);
            let tokens = (0..n_tokens)
                .map(|_| SyntheticSpec::token(words.sample(&mut rng)))
                .collect();
            embeddings.push(EmbeddingRecord {
                utt_id: utt_id.clone(),
                vector,
                duration_s,
            })?;
            transcripts.push(TranscriptRecord {
                utt_id: utt_id.clone(),
                tokens,
            })?;
            labels.insert(utt_id, label)?;
        }
    }
    // interleave classes so file order carries no label information
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    let ids: Vec<String> = labels.ids().map(str::to_string).collect();
    let shuffled: Vec<&str> = order.iter().map(|&i| ids[i].as_str()).collect();
    let ds = LabeledDataset::new(Some(embeddings), Some(transcripts), labels, split)?;
    ds.subset(&shuffled, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(text: &str) -> Result<EmbeddingSet> {
        EmbeddingSet::parse(text.as_bytes(), "test")
    }

    #[test]
    fn parses_embedding_line() {
        let set = emb("u1 3 0.1 0.2 0.3 dur=4.5\n").unwrap();
        assert_eq!(set.dim(), Some(3));
        let r = set.get("u1").unwrap();
        assert_eq!(r.vector, vec![0.1, 0.2, 0.3]);
        assert_eq!(r.duration_s, 4.5);
    }

    #[test]
    fn empty_embedding_file() {
        let set = emb("").unwrap();
        assert!(set.is_empty());
        assert_eq!(set.dim(), None);
    }

    #[test]
    fn dimension_change_reports_line() {
        let err = emb("u1 3 0 0 0 dur=1\nu2 4 0 0 0 0 dur=1\n").unwrap_err();
        match err {
            AdiError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn embedding_errors() {
        assert!(emb("u1 2 0.1 abc dur=1\n").is_err());
        assert!(emb("u1 1 0.1 dur=1\nu1 1 0.2 dur=1\n").is_err());
        assert!(emb("u1 2 0.1 dur=1\n").is_err());
        assert!(emb("u1 1 0.1\n").is_err());
        assert!(emb("u1 1 0.1 dur=-2\n").is_err());
    }

    #[test]
    fn labels_and_alias() {
        let m = LabelMap::parse("u1\tEGY\nu2\tLEV\n".as_bytes(), "t").unwrap();
        assert_eq!(m.get("u1"), Some(DialectLabel::Egy));
        assert_eq!(m.get("u2"), Some(DialectLabel::Lav));
        assert!(LabelMap::parse("u1\tXYZ\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn dialect_index_bijection() {
        for (i, d) in DialectLabel::ALL.iter().enumerate() {
            assert_eq!(d.index(), i);
            assert_eq!(DialectLabel::from_index(i), Some(*d));
            assert_eq!(d.symbol().parse::<DialectLabel>().unwrap(), *d);
        }
        assert_eq!(DialectLabel::from_index(5), None);
    }

    #[test]
    fn transcripts_allow_empty_token_list() {
        let t = TranscriptSet::parse("u1\ta b c\nu2\t\n".as_bytes(), "t").unwrap();
        assert_eq!(t.get("u1").unwrap().tokens, vec!["a", "b", "c"]);
        assert!(t.get("u2").unwrap().tokens.is_empty());
    }

    #[test]
    fn dataset_requires_some_view() {
        let mut labels = LabelMap::new();
        labels.insert("u1", DialectLabel::Egy).unwrap();
        assert!(LabeledDataset::new(None, None, labels.clone(), SplitTag::Train).is_err());
        let t = TranscriptSet::parse("u1\ta\n".as_bytes(), "t").unwrap();
        assert!(LabeledDataset::new(None, Some(t), labels, SplitTag::Train).is_ok());
    }

    #[test]
    fn largest_remainder_is_exhaustive() {
        assert_eq!(largest_remainder(10, &[1.0 / 3.0, 2.0 / 3.0]), vec![3, 7]);
        assert_eq!(largest_remainder(7, &[1.0]), vec![7]);
        assert_eq!(largest_remainder(3, &[0.5, 0.5]), vec![2, 1]);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let ds = synth_generate(&SyntheticSpec::default(), SplitTag::Dev, 1).unwrap();
        assert!(split_dataset(&ds, &[0.5, 0.4], 1).is_err());
        assert!(split_dataset(&ds, &[1.5, -0.5], 1).is_err());
        assert!(split_dataset(&ds, &[], 1).is_err());
    }

    #[test]
    fn split_empty_class_part_is_error() {
        let spec = SyntheticSpec {
            counts: [1, 5, 5, 5, 5],
            ..Default::default()
        };
        let ds = synth_generate(&spec, SplitTag::Dev, 1).unwrap();
        assert!(split_dataset(&ds, &[0.5, 0.5], 3).is_err());
    }

    #[test]
    fn bundled_manifest_is_consistent() {
        let m = Manifest::bundled();
        m.validate().unwrap();
        assert_eq!(m.total(SplitTag::Train).unwrap().utterances, 13_825);
        assert_eq!(m.expected(SplitTag::Train).unwrap().utterances[0], 3_093);
    }

    #[test]
    fn manifest_total_mismatch_detected() {
        let text = "train\tEGY\t10\t1.0\t1\ntrain\tGLF\t5\t1.0\t1\ntrain\tTOTAL\t16\t2.0\t2\n";
        let m = Manifest::parse(text.as_bytes(), "t").unwrap();
        assert!(m.validate().is_err());
    }

    #[test]
    fn empty_dataset_stats_are_zero() {
        let ds = LabeledDataset::new(None, None, LabelMap::new(), SplitTag::Test).unwrap();
        let s = manifest_stats(&ds);
        assert_eq!(s, ManifestStats::default());
        assert_eq!(s.total_utterances(), 0);
    }

    #[test]
    fn synth_rejects_bad_spec() {
        let mut spec = SyntheticSpec::default();
        spec.counts[2] = 0;
        assert!(synth_generate(&spec, SplitTag::Train, 0).is_err());
        let spec = SyntheticSpec {
            dim: 1,
            ..Default::default()
        };
        assert!(synth_generate(&spec, SplitTag::Train, 0).is_err());
    }
}
