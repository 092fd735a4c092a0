//! Unsupervised bottleneck features.
//!
//! Frames are labeled with the most likely component of a diagonal GMM, a
//! frame classifier with a narrow linear layer learns those labels from
//! spliced context windows, and the narrow layer's activations are the
//! features. Utterance vectors are the frame mean.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{AdiError, Result};
use crate::neural::{
    gather_rows, log_sum_exp, softmax_cross_entropy, Activation, AdamConfig, AdamState, Dropout,
    Gradients, Mlp,
};
use crate::rng;
use crate::svm::argmax;

/// One utterance's frames, `T × F`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub utt_id: String,
    pub frames: DMatrix<f64>,
}

impl FrameMatrix {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// Writes utterances as a `utt_id T F` header followed by `T` rows.
pub fn write_frames<W: Write>(mut w: W, utts: &[FrameMatrix]) -> Result<()> {
    for u in utts {
        writeln!(w, "{} {} {}", u.utt_id, u.num_frames(), u.dim())?;
        for row in u.frames.row_iter() {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", vals.join(" "))?;
        }
    }
    Ok(())
}

pub fn save_frames(path: &Path, utts: &[FrameMatrix]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_frames(&mut w, utts)?;
    w.flush()?;
    Ok(())
}

pub fn parse_frames<R: Read>(reader: R, source_name: &str) -> Result<Vec<FrameMatrix>> {
    let mut out: Vec<FrameMatrix> = Vec::new();
    let mut lines = BufReader::new(reader).lines().enumerate();
    let mut dim: Option<usize> = None;
    while let Some((n, line)) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [id, t, f] = toks.as_slice() else {
            return Err(AdiError::parse(source_name, n + 1, "expected header `utt_id T F`"));
        };
        let (t, f): (usize, usize) = match (t.parse(), f.parse()) {
            (Ok(t), Ok(f)) => (t, f),
            _ => return Err(AdiError::parse(source_name, n + 1, "T and F must be integers")),
        };
        if *dim.get_or_insert(f) != f {
            return Err(AdiError::parse(
                source_name,
                n + 1,
                format!("frame dimension {f} differs from earlier {}", dim.unwrap()),
            ));
        }
        let mut m = DMatrix::zeros(t, f);
        for r in 0..t {
            let (rn, row) = lines
                .next()
                .ok_or_else(|| AdiError::parse(source_name, n + 1, format!("{id}: missing frame {r}")))?;
            let row = row?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| AdiError::parse(source_name, rn + 1, format!("bad value `{v}`")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != f {
                return Err(AdiError::parse(
                    source_name,
                    rn + 1,
                    format!("expected {f} values, found {}", vals.len()),
                ));
            }
            for (c, v) in vals.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        out.push(FrameMatrix {
            utt_id: id.to_string(),
            frames: m,
        });
    }
    Ok(out)
}

pub fn load_frames(path: &Path) -> Result<Vec<FrameMatrix>> {
    parse_frames(std::fs::File::open(path)?, &path.display().to_string())
}

/// Shifted-delta parameters `N-d-P-k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SdcParams {
    pub n: usize,
    pub d: usize,
    pub p: usize,
    pub k: usize,
}

impl Default for SdcParams {
    fn default() -> Self {
        Self { n: 7, d: 1, p: 3, k: 7 }
    }
}

/// Static frame followed by `k` delta blocks over the first `n` coefficients,
/// `Δc(t + iP) = c(t + iP + d) − c(t + iP − d)`, with frame indices clamped
/// to the utterance. Output width is `F + n·k`.
pub fn compute_sdc(frames: &DMatrix<f64>, params: SdcParams) -> Result<DMatrix<f64>> {
    let (t, f) = frames.shape();
    let SdcParams { n, d, p, k } = params;
    if n == 0 || n > f || k == 0 {
        return Err(AdiError::invalid(format!(
            "SDC needs 1 ≤ N ≤ {f} cepstra and k ≥ 1"
        )));
    }
    if t <= d + (k - 1) * p {
        return Err(AdiError::invalid(format!(
            "SDC needs more than {} frames, got {t}",
            d + (k - 1) * p
        )));
    }
    let clamp = |i: isize| i.clamp(0, t as isize - 1) as usize;
    let mut out = DMatrix::zeros(t, f + n * k);
    for row in 0..t {
        for c in 0..f {
            out[(row, c)] = frames[(row, c)];
        }
        for i in 0..k {
            let centre = (row + i * p) as isize;
            let ahead = clamp(centre + d as isize);
            let behind = clamp(centre - d as isize);
            for c in 0..n {
                out[(row, f + i * n + c)] = frames[(ahead, c)] - frames[(behind, c)];
            }
        }
    }
    Ok(out)
}

/// Stacks frames `t − context ..= t + context` (clamped) into one row.
pub fn splice(frames: &DMatrix<f64>, context: usize) -> DMatrix<f64> {
    let (t, f) = frames.shape();
    let width = 2 * context + 1;
    DMatrix::from_fn(t, f * width, |r, c| {
        let offset = (c / f) as isize - context as isize;
        let src = (r as isize + offset).clamp(0, t as isize - 1) as usize;
        frames[(src, c % f)]
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    /// N × D
    means: DMatrix<f64>,
    /// N × D
    variances: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    pub mixtures: usize,
    pub iters: usize,
    pub seed: u64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub var_floor: f64,
    /// Stop once the per-frame log-likelihood gains less than this.
    pub tol: f64,
    /// Independent initializations; the highest final log-likelihood wins.
    pub restarts: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            mixtures: 64,
            iters: 50,
            seed: 0,
            var_floor: 1e-4,
            tol: 1e-8,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GmmReport {
    /// Mean per-frame log-likelihood before each M-step and at the end.
    pub loglik: Vec<f64>,
    /// `(iteration, mixture)` for every empty mixture that was re-seeded.
    pub reseeded: Vec<(usize, usize)>,
}

impl GmmReport {
    /// Smallest step of the log-likelihood trace (positive when increasing).
    pub fn min_step(&self) -> f64 {
        self.loglik
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

const CHUNK: usize = 2048;

/// Sufficient statistics of one frame chunk.
struct Stats {
    occupancy: Vec<f64>,
    first: DMatrix<f64>,
    second: DMatrix<f64>,
    loglik: f64,
}

impl GmmModel {
    pub fn from_parts(weights: Vec<f64>, means: DMatrix<f64>, variances: DMatrix<f64>) -> Result<Self> {
        let n = weights.len();
        if n == 0 || means.nrows() != n || variances.shape() != means.shape() {
            return Err(AdiError::invalid("GMM parameter shapes disagree"));
        }
        if variances.iter().any(|v| !(*v > 0.0)) {
            return Err(AdiError::invalid("GMM variances must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-10 {
            return Err(AdiError::invalid("GMM weights must lie on the simplex"));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn num_mixtures(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &DMatrix<f64> {
        &self.means
    }

    pub fn variances(&self) -> &DMatrix<f64> {
        &self.variances
    }

    fn log_consts(&self) -> Vec<f64> {
        let d = self.dim() as f64;
        (0..self.num_mixtures())
            .map(|m| {
                let log_det: f64 = self.variances.row(m).iter().map(|v| v.ln()).sum();
                self.weights[m].ln() - 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det)
            })
            .collect()
    }

    /// `log w_m + log N(x | μ_m, diag σ²_m)` per mixture.
    fn joint(&self, consts: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.num_mixtures())
            .map(|m| {
                let quad: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(c, v)| {
                        let diff = v - self.means[(m, c)];
                        diff * diff / self.variances[(m, c)]
                    })
                    .sum();
                consts[m] - 0.5 * quad
            })
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.joint(&self.log_consts(), x))
    }

    /// `T × N` mixture posteriors.
    pub fn posteriors(&self, frames: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(frames)?;
        let consts = self.log_consts();
        let mut post = DMatrix::zeros(frames.nrows(), self.num_mixtures());
        for (r, row) in frames.row_iter().enumerate() {
            let x: Vec<f64> = row.iter().copied().collect();
            let j = self.joint(&consts, &x);
            let lse = log_sum_exp(&j);
            for (m, v) in j.iter().enumerate() {
                post[(r, m)] = (v - lse).exp();
            }
        }
        Ok(post)
    }

    fn check_dim(&self, frames: &DMatrix<f64>) -> Result<()> {
        if frames.ncols() != self.dim() {
            return Err(AdiError::DimensionMismatch {
                expected: self.dim(),
                got: frames.ncols(),
            });
        }
        Ok(())
    }

    fn chunk_stats(&self, consts: &[f64], frames: &DMatrix<f64>, start: usize, end: usize) -> Stats {
        let (n, d) = (self.num_mixtures(), self.dim());
        let mut s = Stats {
            occupancy: vec![0.0; n],
            first: DMatrix::zeros(n, d),
            second: DMatrix::zeros(n, d),
            loglik: 0.0,
        };
        let mut x = vec![0.0; d];
        for r in start..end {
            for (c, v) in x.iter_mut().enumerate() {
                *v = frames[(r, c)];
            }
            let j = self.joint(consts, &x);
            let lse = log_sum_exp(&j);
            s.loglik += lse;
            for m in 0..n {
                let g = (j[m] - lse).exp();
                s.occupancy[m] += g;
                for c in 0..d {
                    s.first[(m, c)] += g * x[c];
                    s.second[(m, c)] += g * x[c] * x[c];
                }
            }
        }
        s
    }

    /// E-step over fixed chunks, reduced in chunk order whatever the thread count.
    fn expectation(&self, frames: &DMatrix<f64>) -> Stats {
        let consts = self.log_consts();
        let t = frames.nrows();
        let bounds: Vec<(usize, usize)> = (0..t)
            .step_by(CHUNK)
            .map(|s| (s, (s + CHUNK).min(t)))
            .collect();
        let workers = std::thread::available_parallelism()
            .map_or(1, |n| n.get())
            .min(bounds.len())
            .max(1);
        let per = bounds.len().div_ceil(workers);
        let chunks: Vec<Stats> = std::thread::scope(|scope| {
            let handles: Vec<_> = bounds
                .chunks(per)
                .map(|group| {
                    let consts = &consts;
                    scope.spawn(move || {
                        group
                            .iter()
                            .map(|&(s, e)| self.chunk_stats(consts, frames, s, e))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("E-step worker panicked"))
                .collect()
        });
        let mut it = chunks.into_iter();
        let mut total = it.next().expect("at least one chunk");
        for c in it {
            for (a, b) in total.occupancy.iter_mut().zip(&c.occupancy) {
                *a += b;
            }
            total.first += c.first;
            total.second += c.second;
            total.loglik += c.loglik;
        }
        total
    }
}

fn column_moments(frames: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let t = frames.nrows() as f64;
    let mean: Vec<f64> = frames.column_iter().map(|c| c.sum() / t).collect();
    let var = frames
        .column_iter()
        .zip(&mean)
        .map(|(c, m)| c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t)
        .collect();
    (mean, var)
}

/// Frames drawn (without replacement) for seeding.
const SEED_FRAMES: usize = 4096;
/// Candidates per greedy k-means++ step.
const SEED_TRIES: usize = 16;

/// Greedy k-means++ on a frame subsample: each step draws several candidates
/// and keeps the one that most reduces the summed squared distance.
fn kmeans_pp(frames: &DMatrix<f64>, n: usize, rng: &mut rng::Rng) -> DMatrix<f64> {
    let all = frames.nrows();
    let rows: Vec<usize> = if all > SEED_FRAMES {
        rand::seq::index::sample(rng, all, SEED_FRAMES).into_vec()
    } else {
        (0..all).collect()
    };
    let t = rows.len();
    let dist_to = |r: usize, p: usize| (frames.row(rows[r]) - frames.row(rows[p])).norm_squared();
    let mut centers = DMatrix::zeros(n, frames.ncols());
    let first = rng.random_range(0..t);
    centers.set_row(0, &frames.row(rows[first]));
    let mut dist: Vec<f64> = (0..t).map(|r| dist_to(r, first)).collect();
    for m in 1..n {
        let weights = WeightedIndex::new(&dist).ok();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..SEED_TRIES {
            let pick = match &weights {
                Some(w) => w.sample(rng),
                None => rng.random_range(0..t),
            };
            let cand: Vec<f64> = (0..t).map(|r| dist[r].min(dist_to(r, pick))).collect();
            let pot: f64 = cand.iter().sum();
            if best.as_ref().is_none_or(|b| pot < b.0) {
                best = Some((pot, pick, cand));
            }
        }
        let (_, pick, cand) = best.expect("at least one candidate");
        centers.set_row(m, &frames.row(rows[pick]));
        dist = cand;
    }
    centers
}

/// Occupancy below which a mixture counts as empty.
const EMPTY: f64 = 1e-8;

/// Diagonal-covariance EM from k-means++ seeds, global variances and uniform
/// weights. Each run stops after `iters` M-steps or once the per-frame
/// log-likelihood gains less than `tol`; of `restarts` runs the best is kept.
pub fn fit_gmm_em(frames: &DMatrix<f64>, cfg: &GmmConfig) -> Result<(GmmModel, GmmReport)> {
    let mut best: Option<(GmmModel, GmmReport)> = None;
    for r in 0..cfg.restarts.max(1) {
        let seed = if r == 0 { cfg.seed } else { rng::derive(cfg.seed, r as u64) };
        let run = fit_gmm_once(frames, cfg, seed)?;
        let last = |rep: &GmmReport| *rep.loglik.last().unwrap_or(&f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| last(&run.1) > last(&b.1)) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

fn fit_gmm_once(frames: &DMatrix<f64>, cfg: &GmmConfig, seed: u64) -> Result<(GmmModel, GmmReport)> {
    let (t, d) = frames.shape();
    let n = cfg.mixtures;
    if n == 0 || d == 0 {
        return Err(AdiError::invalid("GMM needs at least one mixture and dimension"));
    }
    if t < 10 * n {
        return Err(AdiError::invalid(format!(
            "GMM with {n} mixtures needs at least {} frames, got {t}",
            10 * n
        )));
    }
    if frames.iter().any(|v| !v.is_finite()) {
        return Err(AdiError::invalid("non-finite frame value"));
    }
    let (_, global_var) = column_moments(frames);
    let floor: Vec<f64> = global_var
        .iter()
        .map(|v| (cfg.var_floor * v).max(f64::MIN_POSITIVE))
        .collect();
    let mut rng = rng::seeded(seed);
    let means = kmeans_pp(frames, n, &mut rng);
    let variances = DMatrix::from_fn(n, d, |_, c| global_var[c].max(floor[c]));
    let mut model = GmmModel {
        weights: vec![1.0 / n as f64; n],
        means,
        variances,
    };
    let mut report = GmmReport::default();
    for iter in 0..cfg.iters {
        let stats = model.expectation(frames);
        let ll = stats.loglik / t as f64;
        if let Some(&prev) = report.loglik.last() {
            if ll - prev < cfg.tol {
                report.loglik.push(ll);
                return Ok((model, report));
            }
        }
        report.loglik.push(ll);
        maximize(&mut model, &stats, &floor, t, iter, &mut report);
    }
    let stats = model.expectation(frames);
    report.loglik.push(stats.loglik / t as f64);
    Ok((model, report))
}

fn maximize(
    model: &mut GmmModel,
    stats: &Stats,
    floor: &[f64],
    t: usize,
    iter: usize,
    report: &mut GmmReport,
) {
    let (n, d) = (model.num_mixtures(), model.dim());
    let mut empty = Vec::new();
    for m in 0..n {
        let occ = stats.occupancy[m];
        if occ < EMPTY {
            empty.push(m);
            continue;
        }
        model.weights[m] = occ / t as f64;
        for c in 0..d {
            let mean = stats.first[(m, c)] / occ;
            let var = stats.second[(m, c)] / occ - mean * mean;
            model.means[(m, c)] = mean;
            model.variances[(m, c)] = var.max(floor[c]);
        }
    }
    for m in empty {
        // split the mixture with the largest total variance
        let donor = (0..n)
            .filter(|&j| j != m && model.weights[j] > 0.0)
            .max_by(|&a, &b| {
                let va: f64 = model.variances.row(a).sum();
                let vb: f64 = model.variances.row(b).sum();
                va.total_cmp(&vb).then(b.cmp(&a))
            })
            .expect("another mixture exists");
        log::info!("EM iteration {iter}: mixture {m} empty, re-seeded from mixture {donor}");
        report.reseeded.push((iter, m));
        for c in 0..d {
            let shift = 0.5 * model.variances[(donor, c)].sqrt();
            let mu = model.means[(donor, c)];
            model.means[(m, c)] = mu + shift;
            model.means[(donor, c)] = mu - shift;
            model.variances[(m, c)] = model.variances[(donor, c)];
        }
        model.weights[donor] *= 0.5;
        model.weights[m] = model.weights[donor];
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
}

/// Most probable mixture per frame, lowest index on ties.
pub fn frame_labels(gmm: &GmmModel, frames: &DMatrix<f64>) -> Result<Vec<usize>> {
    gmm.check_dim(frames)?;
    let consts = gmm.log_consts();
    Ok(frames
        .row_iter()
        .map(|r| {
            let x: Vec<f64> = r.iter().copied().collect();
            argmax(&gmm.joint(&consts, &x))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckConfig {
    pub hidden: Vec<usize>,
    pub bottleneck: usize,
    /// Frames of context on each side.
    pub context: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

pub const BOTTLENECK_WIDTH: usize = 40;

impl Default for BottleneckConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            bottleneck: BOTTLENECK_WIDTH,
            context: 4,
            dropout: 0.0,
            epochs: 10,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Frame classifier `spliced input → hidden… → bottleneck (linear) → mixtures`.
#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckNet {
    mlp: Mlp,
    context: usize,
    bottleneck_layer: usize,
}

impl BottleneckNet {
    pub fn new(frame_dim: usize, mixtures: usize, cfg: &BottleneckConfig) -> Result<Self> {
        let mut sizes = vec![frame_dim * (2 * cfg.context + 1)];
        sizes.extend(&cfg.hidden);
        sizes.push(cfg.bottleneck);
        sizes.push(mixtures);
        let mut acts = vec![Activation::Relu; cfg.hidden.len()];
        acts.push(Activation::Linear);
        let mlp = Mlp::with_activations(&sizes, &acts, cfg.dropout, cfg.seed)?;
        Ok(Self {
            mlp,
            context: cfg.context,
            bottleneck_layer: cfg.hidden.len(),
        })
    }

    pub fn from_parts(mlp: Mlp, context: usize, bottleneck_layer: usize) -> Result<Self> {
        if bottleneck_layer + 1 >= mlp.layers().len() {
            return Err(AdiError::invalid("bottleneck must sit below the output layer"));
        }
        if mlp.input_dim() % (2 * context + 1) != 0 {
            return Err(AdiError::invalid("input width is not a multiple of the splice window"));
        }
        Ok(Self {
            mlp,
            context,
            bottleneck_layer,
        })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn context(&self) -> usize {
        self.context
    }

    pub fn frame_dim(&self) -> usize {
        self.mlp.input_dim() / (2 * self.context + 1)
    }

    pub fn bottleneck_width(&self) -> usize {
        self.mlp.layers()[self.bottleneck_layer].output_dim()
    }

    pub fn num_mixtures(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Mean cross-entropy of spliced inputs against mixture labels, with gradients.
    pub fn loss(mlp: &Mlp, x: &DMatrix<f64>, labels: &[usize], dropout: Dropout<'_>) -> (f64, Gradients) {
        let fwd = mlp.forward(x, dropout);
        let (loss, g) = softmax_cross_entropy(fwd.output(), labels);
        (loss, mlp.backward(&fwd, &g))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "adi-bnf v1 context {} bottleneck {}", self.context, self.bottleneck_layer).unwrap();
        s.push_str(&self.mlp.to_text());
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let toks: Vec<&str> = header.split_whitespace().collect();
        let ["adi-bnf", "v1", "context", c, "bottleneck", b] = toks.as_slice() else {
            return Err(AdiError::Format("not an adi-bnf v1 model".into()));
        };
        let bad = || AdiError::Format("adi-bnf header values must be integers".into());
        let context = c.parse().map_err(|_| bad())?;
        let layer = b.parse().map_err(|_| bad())?;
        Self::from_parts(Mlp::parse_lines(&mut lines)?, context, layer)
    }
}

/// Trains the frame classifier on per-utterance frames and their GMM labels.
/// Returns the network and its frame-level training accuracy.
pub fn train_bottleneck(
    utts: &[&DMatrix<f64>],
    labels: &[Vec<usize>],
    mixtures: usize,
    cfg: &BottleneckConfig,
) -> Result<(BottleneckNet, f64)> {
    if utts.is_empty() || utts.len() != labels.len() {
        return Err(AdiError::invalid("need one label sequence per utterance"));
    }
    let dim = utts[0].ncols();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (u, l) in utts.iter().zip(labels) {
        if u.ncols() != dim {
            return Err(AdiError::DimensionMismatch {
                expected: dim,
                got: u.ncols(),
            });
        }
        if u.nrows() != l.len() {
            return Err(AdiError::invalid("label count differs from frame count"));
        }
        if let Some(&bad) = l.iter().find(|&&v| v >= mixtures) {
            return Err(AdiError::invalid(format!("label {bad} ≥ {mixtures} mixtures")));
        }
        let s = splice(u, cfg.context);
        rows.extend(s.row_iter().map(|r| r.into_owned()));
        y.extend_from_slice(l);
    }
    if rows.is_empty() {
        return Err(AdiError::invalid("no frames to train on"));
    }
    let x = DMatrix::from_rows(&rows);
    let mut net = BottleneckNet::new(dim, mixtures, cfg)?;
    let mut opt = AdamState::new(&net.mlp, cfg.adam);
    let mut rng = rng::seeded(rng::derive(cfg.seed, 1));
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let xb = gather_rows(&x, idx);
            let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            let (loss, grads) = BottleneckNet::loss(&net.mlp, &xb, &yb, Dropout::Sample(&mut rng));
            if !loss.is_finite() {
                return Err(AdiError::Diverged {
                    epoch,
                    batch,
                    what: format!("bottleneck cross-entropy {loss}"),
                });
            }
            opt.step(&mut net.mlp, &grads);
        }
    }
    let out = net.mlp.forward(&x, Dropout::Off);
    let correct = out
        .output()
        .row_iter()
        .zip(&y)
        .filter(|(r, &l)| argmax(&r.iter().copied().collect::<Vec<_>>()) == l)
        .count();
    Ok((net, correct as f64 / y.len() as f64))
}

/// Bottleneck pre-activations per frame, `T × width`, dropout off.
pub fn extract_ubnf(net: &BottleneckNet, frames: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if frames.ncols() != net.frame_dim() {
        return Err(AdiError::DimensionMismatch {
            expected: net.frame_dim(),
            got: frames.ncols(),
        });
    }
    let fwd = net.mlp.forward(&splice(frames, net.context), Dropout::Off);
    Ok(fwd.pre[net.bottleneck_layer].clone())
}

pub fn pool_utterance(features: &DMatrix<f64>) -> Result<Vec<f64>> {
    if features.nrows() == 0 {
        return Err(AdiError::invalid("cannot pool an utterance without frames"));
    }
    Ok(features.row_mean().iter().copied().collect())
}

/// Synthetic frames: a GMM whose component preferences depend on the class.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSynth {
    pub dim: usize,
    pub mixtures: usize,
    /// Pairwise distance between component means, in units of σ = 1.
    pub separation: f64,
    pub frames_per_utt: usize,
    /// Weight multiplier for the components a class prefers.
    pub class_boost: f64,
}

impl Default for FrameSynth {
    fn default() -> Self {
        Self {
            dim: 13,
            mixtures: 8,
            separation: 6.0,
            frames_per_utt: 50,
            class_boost: 4.0,
        }
    }
}

impl FrameSynth {
    /// Component `m` sits at `separation/√2 · e_m`, so every pair is `separation` apart.
    pub fn component_mean(&self, m: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[m] = self.separation / std::f64::consts::SQRT_2;
        v
    }

    pub fn class_weights(&self, class: usize, num_classes: usize) -> Vec<f64> {
        (0..self.mixtures)
            .map(|m| if m % num_classes == class { self.class_boost } else { 1.0 })
            .collect()
    }

    /// Frames for each `(utt_id, class)`, plus each frame's generating component.
    pub fn generate(
        &self,
        utts: &[(String, usize)],
        num_classes: usize,
        seed: u64,
    ) -> Result<(Vec<FrameMatrix>, Vec<Vec<usize>>)> {
        if self.mixtures == 0 || self.mixtures > self.dim || self.frames_per_utt == 0 {
            return Err(AdiError::invalid("synthetic frames need 1 ≤ mixtures ≤ dim and frames > 0"));
        }
        let means: Vec<Vec<f64>> = (0..self.mixtures).map(|m| self.component_mean(m)).collect();
        let pickers: Vec<WeightedIndex<f64>> = (0..num_classes)
            .map(|c| WeightedIndex::new(self.class_weights(c, num_classes)).expect("positive weights"))
            .collect();
        let mut out = Vec::with_capacity(utts.len());
        let mut comps = Vec::with_capacity(utts.len());
        for (i, (id, class)) in utts.iter().enumerate() {
            let picker = pickers
                .get(*class)
                .ok_or_else(|| AdiError::invalid(format!("class {class} ≥ {num_classes}")))?;
            let mut r = rng::seeded(rng::derive(seed, i as u64));
            let mut frames = DMatrix::zeros(self.frames_per_utt, self.dim);
            let mut c = Vec::with_capacity(self.frames_per_utt);
            for t in 0..self.frames_per_utt {
                let m = picker.sample(&mut r);
                for d in 0..self.dim {
                    let z: f64 = StandardNormal.sample(&mut r);
                    frames[(t, d)] = means[m][d] + z;
                }
                c.push(m);
            }
            out.push(FrameMatrix {
                utt_id: id.clone(),
                frames,
            });
            comps.push(c);
        }
        Ok((out, comps))
    }
}

/// Stacks the frames of several utterances.
pub fn stack_frames(utts: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let dim = utts
        .first()
        .ok_or_else(|| AdiError::invalid("no utterances"))?
        .ncols();
    let mut rows = Vec::new();
    for u in utts {
        if u.ncols() != dim {
            return Err(AdiError::DimensionMismatch {
                expected: dim,
                got: u.ncols(),
            });
        }
        rows.extend(u.row_iter().map(|r| r.into_owned()));
    }
    Ok(DMatrix::from_rows(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sdc_constant_input_has_zero_deltas() {
        let f = DMatrix::from_element(30, 7, 2.5);
        let s = compute_sdc(&f, SdcParams::default()).unwrap();
        assert_eq!(s.ncols(), 7 * 8);
        assert!(s.columns(7, 49).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sdc_ramp_interior() {
        let v = [1.0, -0.5, 2.0];
        let f = DMatrix::from_fn(40, 3, |t, c| t as f64 * v[c]);
        let p = SdcParams { n: 3, d: 1, p: 2, k: 3 };
        let s = compute_sdc(&f, p).unwrap();
        // rows whose every shifted window stays inside the utterance
        for t in 1..40 - (1 + 2 * 2) {
            for i in 0..3 {
                for c in 0..3 {
                    assert_eq!(s[(t, 3 + i * 3 + c)], 2.0 * v[c]);
                }
            }
        }
    }

    #[test]
    fn sdc_too_short() {
        let f = DMatrix::zeros(19, 7);
        assert!(compute_sdc(&f, SdcParams::default()).is_err());
        assert!(compute_sdc(&DMatrix::zeros(22, 7), SdcParams::default()).is_ok());
    }

    #[test]
    fn splice_clamps() {
        let f = DMatrix::from_fn(3, 1, |t, _| t as f64);
        let s = splice(&f, 1);
        assert_eq!(s.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
        assert_eq!(s.row(2).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 2.0]);
    }

    #[test]
    fn single_mixture_is_sample_moments() {
        let mut r = rng::seeded(2);
        let f = DMatrix::from_fn(200, 3, |_, c| {
            let z: f64 = StandardNormal.sample(&mut r);
            z * (c + 1) as f64 + c as f64
        });
        let cfg = GmmConfig {
            mixtures: 1,
            iters: 1,
            ..GmmConfig::default()
        };
        let (g, _) = fit_gmm_em(&f, &cfg).unwrap();
        let (mean, var) = column_moments(&f);
        for c in 0..3 {
            assert!((g.means()[(0, c)] - mean[c]).abs() < 1e-12);
            assert!((g.variances()[(0, c)] - var[c]).abs() < 1e-10 * var[c]);
        }
        assert_eq!(g.weights(), &[1.0]);
    }

    #[test]
    fn too_few_frames() {
        let f = DMatrix::zeros(19, 2);
        let cfg = GmmConfig {
            mixtures: 2,
            ..GmmConfig::default()
        };
        assert!(fit_gmm_em(&f, &cfg).is_err());
    }

    #[test]
    fn equidistant_frame_takes_lowest_index() {
        let g = GmmModel::from_parts(
            vec![0.5, 0.5],
            DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]),
            DMatrix::from_element(2, 1, 1.0),
        )
        .unwrap();
        assert_eq!(frame_labels(&g, &DMatrix::zeros(1, 1)).unwrap(), vec![0]);
        let p = g.posteriors(&DMatrix::from_row_slice(2, 1, &[0.3, 5.0])).unwrap();
        for r in p.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_net_gives_zero_features() {
        let cfg = BottleneckConfig {
            hidden: vec![8],
            context: 1,
            ..BottleneckConfig::default()
        };
        let mut net = BottleneckNet::new(3, 4, &cfg).unwrap();
        for l in net.mlp.layers_mut() {
            l.weights.fill(0.0);
        }
        let f = DMatrix::from_element(5, 3, 1.5);
        let u = extract_ubnf(&net, &f).unwrap();
        assert_eq!(u.shape(), (5, BOTTLENECK_WIDTH));
        assert!(u.iter().all(|v| *v == 0.0));
        assert_eq!(pool_utterance(&u).unwrap(), vec![0.0; BOTTLENECK_WIDTH]);
        assert!(pool_utterance(&DMatrix::zeros(0, 40)).is_err());
    }

    #[test]
    fn frame_text_roundtrip() {
        let utts = vec![
            FrameMatrix {
                utt_id: "a".into(),
                frames: DMatrix::from_row_slice(2, 2, &[1.0, 2.5, -3.0, 1e-7]),
            },
            FrameMatrix {
                utt_id: "b".into(),
                frames: DMatrix::from_row_slice(1, 2, &[0.0, 4.0]),
            },
        ];
        let mut buf = Vec::new();
        write_frames(&mut buf, &utts).unwrap();
        assert_eq!(parse_frames(&buf[..], "mem").unwrap(), utts);
        let err = parse_frames("a 2 2\n1 2\n".as_bytes(), "mem").unwrap_err();
        assert!(err.to_string().contains("missing frame 1"), "{err}");
    }

    #[test]
    fn bnf_text_roundtrip() {
        let cfg = BottleneckConfig {
            hidden: vec![6],
            context: 2,
            ..BottleneckConfig::default()
        };
        let net = BottleneckNet::new(3, 5, &cfg).unwrap();
        let back = BottleneckNet::parse(&net.to_text()).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.frame_dim(), 3);
    }
}
