//! Transcript pre-processing, n-gram statistics and bag-of-n-gram vectors.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{AdiError, Result};

/// History symbol preceding the first token of an utterance.
pub const SENTENCE_START: &str = "<s>";

/// One of the eight stop-word / stemming / bigram pipelines.
///
/// The id encodes the flags as bits: stop-word removal is bit 2, stemming
/// bit 1 and bigram features bit 0, so id 0 is the identity pre-processor
/// with unigram features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PreprocCombo {
    id: u8,
}

impl PreprocCombo {
    pub fn new(id: u8) -> Result<Self> {
        if id > 7 {
            return Err(AdiError::invalid(format!(
                "pre-processing combination {id} is outside 0..=7"
            )));
        }
        Ok(Self { id })
    }

    pub fn all() -> impl Iterator<Item = PreprocCombo> {
        (0..8).map(|id| PreprocCombo { id })
    }

    pub fn id(self) -> u8 {
        self.id
    }

    pub fn stopword(self) -> bool {
        self.id & 0b100 != 0
    }

    pub fn stemming(self) -> bool {
        self.id & 0b010 != 0
    }

    pub fn bigram(self) -> bool {
        self.id & 0b001 != 0
    }
}

pub fn remove_stopwords(tokens: &[String], stoplist: &HashSet<String>) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !stoplist.contains(t.as_str()))
        .cloned()
        .collect()
}

/// One token per line; blank lines and `#` comments ignored.
pub fn load_word_list(path: &Path) -> Result<Vec<String>> {
    Ok(parse_word_list(&fs::read_to_string(path)?))
}

pub fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Suffix-stripping stemmer driven by a suffix table.
///
/// The longest suffix whose removal leaves at least `min_stem` characters is
/// stripped, repeatedly, until none applies. Iterating to a fixed point makes
/// the stemmer idempotent.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffixStemmer {
    suffixes: Vec<String>,
    min_stem: usize,
}

pub const DEFAULT_MIN_STEM: usize = 3;

const ARABIC_SUFFIXES: &str = include_str!("../data/suffixes_ar.txt");
const BUCKWALTER_SUFFIXES: &str = include_str!("../data/suffixes_ar_buckwalter.txt");
const ENGLISH_SUFFIXES: &str = include_str!("../data/suffixes_en.txt");

impl SuffixStemmer {
    pub fn new(suffixes: impl IntoIterator<Item = String>, min_stem: usize) -> Self {
        let mut suffixes: Vec<String> = suffixes.into_iter().filter(|s| !s.is_empty()).collect();
        suffixes.sort_by(|a, b| {
            b.chars()
                .count()
                .cmp(&a.chars().count())
                .then_with(|| a.cmp(b))
        });
        suffixes.dedup();
        Self { suffixes, min_stem }
    }

    pub fn arabic() -> Self {
        Self::new(parse_word_list(ARABIC_SUFFIXES), DEFAULT_MIN_STEM)
    }

    /// Arabic suffixes in Buckwalter transliteration, the encoding of the
    /// challenge ASR transcripts.
    pub fn buckwalter() -> Self {
        Self::new(parse_word_list(BUCKWALTER_SUFFIXES), DEFAULT_MIN_STEM)
    }

    pub fn english() -> Self {
        Self::new(parse_word_list(ENGLISH_SUFFIXES), DEFAULT_MIN_STEM)
    }

    pub fn from_file(path: &Path, min_stem: usize) -> Result<Self> {
        Ok(Self::new(load_word_list(path)?, min_stem))
    }

    pub fn stem(&self, token: &str) -> String {
        let mut current = token;
        'strip: loop {
            let len = current.chars().count();
            for suf in &self.suffixes {
                let suf_len = suf.chars().count();
                if len >= self.min_stem + suf_len && current.ends_with(suf.as_str()) {
                    current = &current[..current.len() - suf.len()];
                    continue 'strip;
                }
            }
            return current.to_string();
        }
    }
}

/// n-gram counts of one token sequence, keyed by the space-joined n-gram.
/// Order 2 prefixes the sequence with [`SENTENCE_START`].
pub fn ngrams(tokens: &[String], order: usize) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    match order {
        1 => {
            for t in tokens {
                *counts.entry(t.clone()).or_insert(0) += 1;
            }
        }
        2 => {
            let mut prev = SENTENCE_START;
            for t in tokens {
                *counts.entry(bigram_key(prev, t)).or_insert(0) += 1;
                prev = t;
            }
        }
        _ => panic!("only unigram and bigram orders are supported"),
    }
    counts
}

fn bigram_key(prev: &str, cur: &str) -> String {
    format!("{prev} {cur}")
}

/// Unigram or bigram language model with add-alpha smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    unigrams: BTreeMap<String, usize>,
    bigrams: BTreeMap<String, usize>,
    /// Number of times each symbol (including `<s>`) occurs as a bigram history.
    histories: BTreeMap<String, usize>,
    total: usize,
}

impl NGramModel {
    pub fn train(corpus: &[Vec<String>], order: usize, alpha: f64) -> Result<Self> {
        if !(order == 1 || order == 2) {
            return Err(AdiError::invalid("n-gram order must be 1 or 2"));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(AdiError::invalid("smoothing constant must be nonnegative"));
        }
        let mut unigrams = BTreeMap::new();
        let mut bigrams = BTreeMap::new();
        let mut histories = BTreeMap::new();
        let mut total = 0;
        for sentence in corpus {
            total += sentence.len();
            for (w, c) in ngrams(sentence, 1) {
                *unigrams.entry(w).or_insert(0) += c;
            }
            let mut prev = SENTENCE_START;
            for t in sentence {
                *bigrams.entry(bigram_key(prev, t)).or_insert(0) += 1;
                *histories.entry(prev.to_string()).or_insert(0) += 1;
                prev = t;
            }
        }
        Ok(Self {
            order,
            alpha,
            unigrams,
            bigrams,
            histories,
            total,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.unigrams.len()
    }

    pub fn count(&self, word: &str) -> usize {
        self.unigrams.get(word).copied().unwrap_or(0)
    }

    /// ln P(W) as the sum of per-token log probabilities. Zero-probability
    /// events (only possible with alpha = 0) give `f64::NEG_INFINITY`.
    pub fn sequence_logprob(&self, tokens: &[String]) -> f64 {
        let v = self.vocab_size() as f64;
        let a = self.alpha;
        let ln_ratio = |num: f64, den: f64| {
            if num <= 0.0 || den <= 0.0 {
                f64::NEG_INFINITY
            } else {
                (num / den).ln()
            }
        };
        match self.order {
            1 => tokens
                .iter()
                .map(|t| ln_ratio(self.count(t) as f64 + a, self.total as f64 + a * v))
                .sum(),
            _ => {
                let mut prev = SENTENCE_START;
                let mut lp = 0.0;
                for t in tokens {
                    let c = self.bigrams.get(&bigram_key(prev, t)).copied().unwrap_or(0);
                    let h = self.histories.get(prev).copied().unwrap_or(0);
                    lp += ln_ratio(c as f64 + a, h as f64 + a * v);
                    prev = t;
                }
                lp
            }
        }
    }
}

/// Stop-word removal, stemming and n-gram extraction for one combination.
#[derive(Debug, Clone)]
pub struct TextPipeline {
    pub combo: PreprocCombo,
    pub stoplist: HashSet<String>,
    pub stemmer: SuffixStemmer,
}

impl TextPipeline {
    pub fn new(combo: PreprocCombo, stoplist: HashSet<String>, stemmer: SuffixStemmer) -> Self {
        Self {
            combo,
            stoplist,
            stemmer,
        }
    }

    pub fn preprocess(&self, tokens: &[String]) -> Vec<String> {
        let kept = if self.combo.stopword() {
            remove_stopwords(tokens, &self.stoplist)
        } else {
            tokens.to_vec()
        };
        if self.combo.stemming() {
            kept.iter().map(|t| self.stemmer.stem(t)).collect()
        } else {
            kept
        }
    }

    /// Feature counts: unigrams, plus bigrams when the combination asks for them.
    pub fn features(&self, tokens: &[String]) -> BTreeMap<String, usize> {
        let processed = self.preprocess(tokens);
        let mut counts = ngrams(&processed, 1);
        if self.combo.bigram() {
            counts.extend(ngrams(&processed, 2));
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermWeighting {
    Bin,
    Tf,
    TfIdf,
}

impl FromStr for TermWeighting {
    type Err = AdiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bin" => Ok(TermWeighting::Bin),
            "tf" => Ok(TermWeighting::Tf),
            "tfidf" | "tf-idf" => Ok(TermWeighting::TfIdf),
            other => Err(AdiError::invalid(format!("unknown term weighting `{other}`"))),
        }
    }
}

impl fmt::Display for TermWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermWeighting::Bin => "bin",
            TermWeighting::Tf => "tf",
            TermWeighting::TfIdf => "tfidf",
        })
    }
}

/// Feature-to-column map with document frequencies. Columns follow the
/// lexicographic order of the feature strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    features: BTreeMap<String, usize>,
    df: Vec<usize>,
    n_docs: usize,
}

impl Vocab {
    pub fn build<'a>(
        docs: impl IntoIterator<Item = &'a BTreeMap<String, usize>>,
        min_df: usize,
    ) -> Self {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            for f in doc.keys() {
                *df.entry(f.as_str()).or_insert(0) += 1;
            }
        }
        let kept: Vec<(&str, usize)> = df
            .into_iter()
            .filter(|&(_, d)| d >= min_df.max(1))
            .collect();
        Self {
            features: kept
                .iter()
                .enumerate()
                .map(|(i, (f, _))| (f.to_string(), i))
                .collect(),
            df: kept.iter().map(|&(_, d)| d).collect(),
            n_docs,
        }
    }

    /// Pre-processes each transcript with `pipeline` and builds the vocabulary.
    pub fn from_corpus(corpus: &[Vec<String>], pipeline: &TextPipeline, min_df: usize) -> Self {
        let docs: Vec<_> = corpus.iter().map(|t| pipeline.features(t)).collect();
        Self::build(&docs, min_df)
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index(&self, feature: &str) -> Option<usize> {
        self.features.get(feature).copied()
    }

    pub fn df(&self, index: usize) -> usize {
        self.df[index]
    }

    pub fn features(&self) -> impl Iterator<Item = (&str, usize)> {
        self.features.iter().map(|(f, &i)| (f.as_str(), i))
    }

    /// Smoothed inverse document frequency, ln((1 + N) / (1 + df)) + 1.
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.df[index] as f64)).ln() + 1.0
    }

    pub fn vectorize(&self, counts: &BTreeMap<String, usize>, scheme: TermWeighting) -> SparseVector {
        let mut entries: Vec<(usize, f64)> = counts
            .iter()
            .filter_map(|(f, &c)| {
                let i = self.index(f)?;
                let v = match scheme {
                    TermWeighting::Bin => 1.0,
                    TermWeighting::Tf => c as f64,
                    TermWeighting::TfIdf => c as f64 * self.idf(i),
                };
                (c > 0).then_some((i, v))
            })
            .collect();
        entries.sort_by_key(|&(i, _)| i);
        SparseVector::from_sorted(entries)
    }

    /// Writes `feature<TAB>df` rows preceded by a `#docs` header.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#docs\t{}", self.n_docs)?;
        for (f, &i) in &self.features {
            writeln!(w, "{f}\t{}", self.df[i])?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let n_docs = lines
            .next()
            .and_then(|l| l.strip_prefix("#docs\t"))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| AdiError::Format("vocabulary header `#docs<TAB>N` missing".into()))?;
        let mut features = BTreeMap::new();
        let mut df = Vec::new();
        for (i, line) in lines.enumerate() {
            let (f, d) = line
                .rsplit_once('\t')
                .ok_or_else(|| AdiError::Format(format!("vocabulary row {}: no tab", i + 2)))?;
            let d: usize = d
                .parse()
                .map_err(|_| AdiError::Format(format!("vocabulary row {}: bad df", i + 2)))?;
            if features.insert(f.to_string(), df.len()).is_some() {
                return Err(AdiError::Format(format!("duplicate vocabulary entry `{f}`")));
            }
            df.push(d);
        }
        // rows must already be in lexicographic order for the indices to line up
        if features.values().copied().ne(0..df.len()) {
            return Err(AdiError::Format("vocabulary rows are not sorted".into()));
        }
        Ok(Self {
            features,
            df,
            n_docs,
        })
    }
}

/// Sparse row with strictly increasing indices and no zero entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// `entries` must be sorted by index without duplicates; zeros are dropped.
    pub fn from_sorted(entries: Vec<(usize, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        Self {
            entries: entries.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_sorted(values.iter().copied().enumerate().collect())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, v)| dense.get(i).map_or(0.0, |w| w * v))
            .sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_sorted(self.entries.iter().map(|&(i, v)| (i, v * factor)).collect())
    }

    /// `index:value` pairs separated by spaces.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(i, v)| format!("{i}:{v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
