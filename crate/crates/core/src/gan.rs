//! Semi-supervised GAN classifier over embedding + duration inputs.
//!
//! The discriminator emits `K` real-class logits `l_1..l_K`; the generated
//! class `K+1` has an implicit logit fixed at 0, so
//!
//! ```text
//! p(y = k | x)   = exp(l_k) / (1 + Σ_j exp(l_j))
//! p(y = K+1 | x) = 1 / (1 + Σ_j exp(l_j))
//! ```
//!
//! The discriminator minimizes `L_sup + L_unsup`:
//!
//! ```text
//! L_sup   = −E_labeled log p(y | x, y ≤ K)
//! L_unsup = −E_data log(1 − p(K+1 | x)) − E_generated log p(K+1 | x)
//! ```
//!
//! and the generator minimizes the feature-matching distance
//! `‖mean h(real) − mean h(fake)‖²` on the discriminator's last hidden layer.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::EmbeddingRecord;
use crate::error::{AdiError, Result};
use crate::neural::{
    gather_rows, log_sum_exp, rows_to_matrix, Activation, AdamConfig, AdamState, Dropout, Mlp,
};
use crate::rng;
use crate::svm::argmax;

#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    pub num_classes: usize,
    pub noise_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub discriminator_adam: AdamConfig,
    pub generator_adam: AdamConfig,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            num_classes: crate::corpus::NUM_DIALECTS,
            noise_dim: 100,
            generator_hidden: vec![500, 500],
            discriminator_hidden: vec![1024, 1024, 1024],
            dropout: 0.5,
            epochs: 50,
            batch_size: 100,
            discriminator_adam: AdamConfig::gan(),
            generator_adam: AdamConfig::gan(),
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn discriminator_sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut s = vec![input_dim];
        s.extend(&self.discriminator_hidden);
        s.push(self.num_classes);
        s
    }

    pub fn generator_sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut s = vec![self.noise_dim];
        s.extend(&self.generator_hidden);
        s.push(input_dim);
        s
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.noise_dim == 0 || self.batch_size == 0 {
            return Err(AdiError::invalid(
                "GAN needs ≥ 2 classes, a positive noise dimension and batch size",
            ));
        }
        if self.discriminator_hidden.is_empty() {
            return Err(AdiError::invalid(
                "discriminator needs a hidden layer for feature matching",
            ));
        }
        Ok(())
    }
}

/// Embedding followed by the duration feature `ln(1 + seconds)`.
pub fn with_duration(record: &EmbeddingRecord) -> Vec<f64> {
    let mut v = record.vector.clone();
    v.push(record.duration_s.ln_1p());
    v
}

/// Per-dimension affine standardization `(x − mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Sample mean and standard deviation; a constant column gets scale 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| AdiError::invalid("cannot standardize an empty pool"))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(AdiError::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        let dim = self.dim();
        DMatrix::from_fn(rows.len(), dim, |r, c| (rows[r][c] - self.mean[c]) / self.scale[c])
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The K+1 class probabilities with the generated-class logit pinned at 0.
pub fn class_probs(logits: &[f64]) -> Vec<f64> {
    let mut extended = logits.to_vec();
    extended.push(0.0);
    let lse = log_sum_exp(&extended);
    extended.iter().map(|l| (l - lse).exp()).collect()
}

/// −log p(y | x, y ≤ K): cross-entropy of the softmax restricted to real classes.
pub fn sup_loss(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

/// −log(1 − p(K+1|x)) for a real sample: softplus(lse) − lse.
fn real_term(logits: &[f64]) -> f64 {
    let lse = log_sum_exp(logits);
    softplus(-lse)
}

/// −log p(K+1|x) for a generated sample: softplus(lse).
fn fake_term(logits: &[f64]) -> f64 {
    softplus(log_sum_exp(logits))
}

/// Mean of −log(1 − p(K+1)) over the real batch plus mean of −log p(K+1)
/// over the generated batch.
pub fn unsup_loss(real_logits: &[Vec<f64>], fake_logits: &[Vec<f64>]) -> f64 {
    let real = real_logits.iter().map(|l| real_term(l)).sum::<f64>() / real_logits.len() as f64;
    let fake = fake_logits.iter().map(|l| fake_term(l)).sum::<f64>() / fake_logits.len() as f64;
    real + fake
}

/// Squared distance between the batch means of two feature sets.
pub fn gen_loss(real_features: &[Vec<f64>], fake_features: &[Vec<f64>]) -> f64 {
    let real = rows_to_matrix(real_features);
    let fake = rows_to_matrix(fake_features);
    feature_matching(&real, &fake).0
}

fn rows_of(m: &DMatrix<f64>) -> impl Iterator<Item = Vec<f64>> + '_ {
    m.row_iter().map(|r| r.iter().copied().collect())
}

/// Batch supervised loss and its gradient with respect to the logits.
fn sup_loss_batch(logits: &DMatrix<f64>, labels: &[usize]) -> (f64, DMatrix<f64>) {
    let b = logits.nrows() as f64;
    let mut grad = DMatrix::zeros(logits.nrows(), logits.ncols());
    let mut loss = 0.0;
    for (r, row) in rows_of(logits).enumerate() {
        let lse = log_sum_exp(&row);
        loss += lse - row[labels[r]];
        for (c, l) in row.iter().enumerate() {
            grad[(r, c)] = (l - lse).exp() / b;
        }
        grad[(r, labels[r])] -= 1.0 / b;
    }
    (loss / b, grad)
}

/// Unsupervised loss terms and gradients with respect to real and fake logits.
///
/// With `s = softmax(l)` and `σ` the logistic function, the real term has
/// gradient `(σ(lse) − 1)·s` and the fake term `σ(lse)·s`.
fn unsup_loss_batch(
    real: &DMatrix<f64>,
    fake: &DMatrix<f64>,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let (br, bf) = (real.nrows() as f64, fake.nrows() as f64);
    let mut g_real = DMatrix::zeros(real.nrows(), real.ncols());
    let mut g_fake = DMatrix::zeros(fake.nrows(), fake.ncols());
    let mut loss = 0.0;
    for (r, row) in rows_of(real).enumerate() {
        let lse = log_sum_exp(&row);
        loss += softplus(-lse) / br;
        let w = (sigmoid(lse) - 1.0) / br;
        for (c, l) in row.iter().enumerate() {
            g_real[(r, c)] = w * (l - lse).exp();
        }
    }
    for (r, row) in rows_of(fake).enumerate() {
        let lse = log_sum_exp(&row);
        loss += softplus(lse) / bf;
        let w = sigmoid(lse) / bf;
        for (c, l) in row.iter().enumerate() {
            g_fake[(r, c)] = w * (l - lse).exp();
        }
    }
    (loss, g_real, g_fake)
}

/// Feature-matching loss and its gradient with respect to the fake features.
fn feature_matching(real: &DMatrix<f64>, fake: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let diff = real.row_mean() - fake.row_mean();
    let loss = diff.norm_squared();
    let per_row = diff * (-2.0 / fake.nrows() as f64);
    let mut grad = DMatrix::zeros(fake.nrows(), fake.ncols());
    for mut row in grad.row_iter_mut() {
        row.copy_from(&per_row);
    }
    (loss, grad)
}

/// Discriminator objective on explicit batches, with parameter gradients.
/// `masks` fixes dropout for the three passes (labeled, real, fake).
pub fn discriminator_loss(
    disc: &Mlp,
    labeled: &DMatrix<f64>,
    labels: &[usize],
    real: &DMatrix<f64>,
    fake: &DMatrix<f64>,
    dropout: [Dropout<'_>; 3],
) -> (f64, f64, crate::neural::Gradients) {
    let [d_lab, d_real, d_fake] = dropout;
    let f_lab = disc.forward(labeled, d_lab);
    let f_real = disc.forward(real, d_real);
    let f_fake = disc.forward(fake, d_fake);
    let (l_sup, g_sup) = sup_loss_batch(f_lab.output(), labels);
    let (l_unsup, g_real, g_fake) = unsup_loss_batch(f_real.output(), f_fake.output());
    let mut grads = disc.backward(&f_lab, &g_sup);
    grads.add_assign(&disc.backward(&f_real, &g_real));
    grads.add_assign(&disc.backward(&f_fake, &g_fake));
    (l_sup, l_unsup, grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub sup_loss: f64,
    pub unsup_loss: f64,
    pub gen_loss: f64,
    pub dev_accuracy: Option<f64>,
}

/// Trained classifier. A model trained without adversarial data has no generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    discriminator: Mlp,
    generator: Option<Mlp>,
    standardizer: Standardizer,
    log: Vec<EpochLog>,
}

pub struct LabeledInputs<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [usize],
}

/// Adversarial training with labeled and unlabeled inputs (each already
/// carrying the duration column; see [`with_duration`]).
///
/// The unsupervised real-data term ranges over labeled and unlabeled inputs
/// together. One epoch is one pass over that pool; every step updates the
/// discriminator once and then the generator once.
pub fn train_gan(
    labeled: LabeledInputs<'_>,
    unlabeled: &[Vec<f64>],
    dev: Option<LabeledInputs<'_>>,
    cfg: &GanConfig,
) -> Result<GanModel> {
    cfg.validate()?;
    check_labeled(&labeled, cfg.num_classes)?;
    let dim = labeled.x[0].len();
    if let Some(u) = unlabeled.iter().find(|u| u.len() != dim) {
        return Err(AdiError::DimensionMismatch {
            expected: dim,
            got: u.len(),
        });
    }
    let pool_rows: Vec<Vec<f64>> = labeled.x.iter().chain(unlabeled).cloned().collect();
    let standardizer = Standardizer::fit(&pool_rows)?;
    let pool = standardizer.apply_all(&pool_rows);
    let lab = standardizer.apply_all(labeled.x);

    let mut disc = Mlp::new(
        &cfg.discriminator_sizes(dim),
        Activation::Relu,
        cfg.dropout,
        rng::derive(cfg.seed, 1),
    )?;
    let mut gen = Mlp::new(
        &cfg.generator_sizes(dim),
        Activation::Relu,
        0.0,
        rng::derive(cfg.seed, 2),
    )?;
    let mut d_opt = AdamState::new(&disc, cfg.discriminator_adam);
    let mut g_opt = AdamState::new(&gen, cfg.generator_adam);
    let mut rng = rng::seeded(rng::derive(cfg.seed, 3));
    let feature_layer = disc.layers().len() - 2;

    let mut pool_order: Vec<usize> = (0..pool.nrows()).collect();
    let mut lab_order: Vec<usize> = (0..lab.nrows()).collect();
    lab_order.shuffle(&mut rng);
    let mut lab_cursor = 0;
    let lab_batch = cfg.batch_size.min(lab.nrows());
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        pool_order.shuffle(&mut rng);
        let (mut sum_sup, mut sum_unsup, mut sum_gen, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for (batch, chunk) in pool_order.chunks(cfg.batch_size).enumerate() {
            let real = gather_rows(&pool, chunk);
            let mut lab_idx = Vec::with_capacity(lab_batch);
            for _ in 0..lab_batch {
                if lab_cursor == lab_order.len() {
                    lab_order.shuffle(&mut rng);
                    lab_cursor = 0;
                }
                lab_idx.push(lab_order[lab_cursor]);
                lab_cursor += 1;
            }
            let lab_x = gather_rows(&lab, &lab_idx);
            let lab_y: Vec<usize> = lab_idx.iter().map(|&i| labeled.y[i]).collect();

            // discriminator step
            let noise = noise_batch(chunk.len(), cfg.noise_dim, &mut rng);
            let fake = gen.forward(&noise, Dropout::Off).output().clone();
            let m_lab = disc.sample_masks(lab_x.nrows(), &mut rng);
            let m_real = disc.sample_masks(real.nrows(), &mut rng);
            let m_fake = disc.sample_masks(fake.nrows(), &mut rng);
            let (l_sup, l_unsup, d_grads) = discriminator_loss(
                &disc,
                &lab_x,
                &lab_y,
                &real,
                &fake,
                [
                    Dropout::Fixed(&m_lab),
                    Dropout::Fixed(&m_real),
                    Dropout::Fixed(&m_fake),
                ],
            );
            if !(l_sup.is_finite() && l_unsup.is_finite()) {
                return Err(AdiError::Diverged {
                    epoch,
                    batch,
                    what: format!("discriminator loss sup={l_sup} unsup={l_unsup}"),
                });
            }
            d_opt.step(&mut disc, &d_grads);

            // generator step
            let noise = noise_batch(chunk.len(), cfg.noise_dim, &mut rng);
            let g_fwd = gen.forward(&noise, Dropout::Off);
            let d_fake = disc.forward(g_fwd.output(), Dropout::Sample(&mut rng));
            let d_real = disc.forward(&real, Dropout::Sample(&mut rng));
            let (l_gen, g_feat) =
                feature_matching(&d_real.post[feature_layer], &d_fake.post[feature_layer]);
            if !l_gen.is_finite() {
                return Err(AdiError::Diverged {
                    epoch,
                    batch,
                    what: format!("generator loss {l_gen}"),
                });
            }
            let through_disc = disc.backward_from(&d_fake, feature_layer, &g_feat);
            let g_grads = gen.backward(&g_fwd, &through_disc.input);
            g_opt.step(&mut gen, &g_grads);

            sum_sup += l_sup;
            sum_unsup += l_unsup;
            sum_gen += l_gen;
            steps += 1;
        }
        let model_view = GanModel {
            discriminator: disc.clone(),
            generator: None,
            standardizer: standardizer.clone(),
            log: Vec::new(),
        };
        log.push(EpochLog {
            epoch,
            sup_loss: sum_sup / steps as f64,
            unsup_loss: sum_unsup / steps as f64,
            gen_loss: sum_gen / steps as f64,
            dev_accuracy: dev.as_ref().map(|d| model_view.accuracy(d.x, d.y)),
        });
    }
    if !disc.all_finite() || !gen.all_finite() {
        return Err(AdiError::Diverged {
            epoch: cfg.epochs,
            batch: 0,
            what: "non-finite network parameters".into(),
        });
    }
    Ok(GanModel {
        discriminator: disc,
        generator: Some(gen),
        standardizer,
        log,
    })
}

/// The discriminator architecture trained on labeled data alone with the
/// supervised loss, for the same number of updates `train_gan` would make
/// on a pool of `pool_size` inputs. Standardization uses the labeled inputs only.
pub fn train_labeled_only(
    labeled: LabeledInputs<'_>,
    pool_size: usize,
    cfg: &GanConfig,
) -> Result<GanModel> {
    cfg.validate()?;
    check_labeled(&labeled, cfg.num_classes)?;
    let dim = labeled.x[0].len();
    let standardizer = Standardizer::fit(labeled.x)?;
    let lab = standardizer.apply_all(labeled.x);
    let mut disc = Mlp::new(
        &cfg.discriminator_sizes(dim),
        Activation::Relu,
        cfg.dropout,
        rng::derive(cfg.seed, 1),
    )?;
    let mut opt = AdamState::new(&disc, cfg.discriminator_adam);
    let mut rng = rng::seeded(rng::derive(cfg.seed, 3));
    let steps_per_epoch = pool_size.max(lab.nrows()).div_ceil(cfg.batch_size);
    let lab_batch = cfg.batch_size.min(lab.nrows());
    let mut order: Vec<usize> = (0..lab.nrows()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        for batch in 0..steps_per_epoch {
            let mut idx = Vec::with_capacity(lab_batch);
            for _ in 0..lab_batch {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                idx.push(order[cursor]);
                cursor += 1;
            }
            let x = gather_rows(&lab, &idx);
            let y: Vec<usize> = idx.iter().map(|&i| labeled.y[i]).collect();
            let fwd = disc.forward(&x, Dropout::Sample(&mut rng));
            let (loss, g) = sup_loss_batch(fwd.output(), &y);
            if !loss.is_finite() {
                return Err(AdiError::Diverged {
                    epoch,
                    batch,
                    what: format!("supervised loss {loss}"),
                });
            }
            let grads = disc.backward(&fwd, &g);
            opt.step(&mut disc, &grads);
            sum += loss;
        }
        log.push(EpochLog {
            epoch,
            sup_loss: sum / steps_per_epoch as f64,
            unsup_loss: 0.0,
            gen_loss: 0.0,
            dev_accuracy: None,
        });
    }
    Ok(GanModel {
        discriminator: disc,
        generator: None,
        standardizer,
        log,
    })
}

fn check_labeled(labeled: &LabeledInputs<'_>, num_classes: usize) -> Result<()> {
    if labeled.x.is_empty() || labeled.x.len() != labeled.y.len() {
        return Err(AdiError::invalid("labeled set must be non-empty and aligned"));
    }
    let dim = labeled.x[0].len();
    if let Some(r) = labeled.x.iter().find(|r| r.len() != dim) {
        return Err(AdiError::DimensionMismatch {
            expected: dim,
            got: r.len(),
        });
    }
    if labeled.x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AdiError::invalid("non-finite input component"));
    }
    if let Some(&bad) = labeled.y.iter().find(|&&l| l >= num_classes) {
        return Err(AdiError::invalid(format!("label {bad} ≥ {num_classes} classes")));
    }
    Ok(())
}

fn noise_batch(rows: usize, dim: usize, rng: &mut rng::Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, dim, |_, _| StandardNormal.sample(rng))
}

impl GanModel {
    pub fn from_parts(
        discriminator: Mlp,
        generator: Option<Mlp>,
        standardizer: Standardizer,
    ) -> Result<Self> {
        if discriminator.input_dim() != standardizer.dim() {
            return Err(AdiError::DimensionMismatch {
                expected: discriminator.input_dim(),
                got: standardizer.dim(),
            });
        }
        if let Some(g) = &generator {
            if g.output_dim() != discriminator.input_dim() {
                return Err(AdiError::DimensionMismatch {
                    expected: discriminator.input_dim(),
                    got: g.output_dim(),
                });
            }
        }
        Ok(Self {
            discriminator,
            generator,
            standardizer,
            log: Vec::new(),
        })
    }

    pub fn discriminator(&self) -> &Mlp {
        &self.discriminator
    }

    pub fn generator(&self) -> Option<&Mlp> {
        self.generator.as_ref()
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    pub fn input_dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(AdiError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.discriminator.eval(&self.standardizer.apply(x)))
    }

    /// Predicted class and real-class log-probabilities log p(y | x, y ≤ K).
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let logits = self.logits(x)?;
        let lse = log_sum_exp(&logits);
        let logp: Vec<f64> = logits.iter().map(|l| l - lse).collect();
        Ok((argmax(&logp), logp))
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        let correct = x
            .iter()
            .zip(y)
            .filter(|(xi, &yi)| self.predict(xi).map(|(p, _)| p) .ok() == Some(yi))
            .count();
        correct as f64 / x.len().max(1) as f64
    }

    /// Training log as TSV: `epoch sup_loss unsup_loss gen_loss dev_acc`.
    pub fn log_tsv(&self) -> String {
        let mut s = String::from("epoch\tsup_loss\tunsup_loss\tgen_loss\tdev_acc\n");
        for e in &self.log {
            let dev = e.dev_accuracy.map_or("-".to_string(), |a| format!("{:.4}", a * 100.0));
            writeln!(
                s,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{dev}",
                e.epoch, e.sup_loss, e.unsup_loss, e.gen_loss
            )
            .unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "adi-gan v1").unwrap();
        let row = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "{}", row(&self.standardizer.mean)).unwrap();
        writeln!(s, "{}", row(&self.standardizer.scale)).unwrap();
        s.push_str(&self.discriminator.to_text());
        match &self.generator {
            Some(g) => {
                writeln!(s, "generator").unwrap();
                s.push_str(&g.to_text());
            }
            None => writeln!(s, "no-generator").unwrap(),
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("adi-gan v1") {
            return Err(AdiError::Format("not an adi-gan v1 model".into()));
        }
        let mut vec_line = |what: &str| -> Result<Vec<f64>> {
            lines
                .next()
                .ok_or_else(|| AdiError::Format(format!("gan {what} missing")))?
                .split_whitespace()
                .map(|v| {
                    v.parse()
                        .map_err(|_| AdiError::Format(format!("gan {what}: bad value `{v}`")))
                })
                .collect()
        };
        let mean = vec_line("mean")?;
        let scale = vec_line("scale")?;
        let discriminator = Mlp::parse_lines(&mut lines)?;
        let generator = match lines.next().map(str::trim) {
            Some("generator") => Some(Mlp::parse_lines(&mut lines)?),
            Some("no-generator") => None,
            _ => return Err(AdiError::Format("gan generator marker missing".into())),
        };
        GanModel::from_parts(discriminator, generator, Standardizer { mean, scale })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_probs() {
        let p = class_probs(&[0.0; 5]);
        assert_eq!(p.len(), 6);
        for v in p {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_logit_limit() {
        let p = class_probs(&[200.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[5] < 1e-80);
    }

    #[test]
    fn sup_loss_limits() {
        assert!((sup_loss(&[0.0; 5], 2) - 5f64.ln()).abs() < 1e-15);
        assert!(sup_loss(&[100.0, 0.0, 0.0, 0.0, 0.0], 0) < 1e-40);
    }

    #[test]
    fn unsup_uniform_value() {
        let real = vec![vec![0.0; 5]; 3];
        let fake = vec![vec![0.0; 5]; 4];
        let want = (6.0f64 / 5.0).ln() + 6f64.ln();
        assert!((unsup_loss(&real, &fake) - want).abs() < 1e-12);
    }

    #[test]
    fn unsup_real_term_vanishes_for_confident_real() {
        assert!(real_term(&[60.0, 0.0, 0.0, 0.0, 0.0]) < 1e-25);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        for l in [-50.0, 50.0] {
            let logits = vec![l; 5];
            assert!(unsup_loss(&[logits.clone()], &[logits.clone()]).is_finite());
            assert!(sup_loss(&logits, 0).is_finite());
        }
    }

    #[test]
    fn gen_loss_symmetry() {
        let a = vec![vec![1.0, 2.0], vec![3.0, -1.0]];
        let b = vec![vec![0.0, 0.5], vec![-1.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(gen_loss(&a, &a), 0.0);
        assert!((gen_loss(&a, &b) - gen_loss(&b, &a)).abs() < 1e-15);
    }

    #[test]
    fn standardizer_constant_column() {
        let s = Standardizer::fit(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 5.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn duration_column_is_log1p() {
        let r = EmbeddingRecord {
            utt_id: "u".into(),
            vector: vec![0.5, -1.0],
            duration_s: std::f64::consts::E - 1.0,
        };
        let v = with_duration(&r);
        assert_eq!(v.len(), 3);
        assert!((v[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_logits_predict_lowest_index() {
        let layer = crate::neural::Layer {
            weights: DMatrix::zeros(2, 5),
            bias: nalgebra::DVector::zeros(5),
            activation: Activation::Linear,
            dropout: 0.0,
        };
        let d = Mlp::from_layers(vec![layer]).unwrap();
        let m = GanModel::from_parts(
            d,
            None,
            Standardizer {
                mean: vec![0.0; 2],
                scale: vec![1.0; 2],
            },
        )
        .unwrap();
        let (label, logp) = m.predict(&[0.3, 0.7]).unwrap();
        assert_eq!(label, 0);
        for v in logp {
            assert!((v + 5f64.ln()).abs() < 1e-15);
        }
    }

    /// With the real batch equal to the labeled batch, the supervised plus
    /// unsupervised real-data terms equal −log p(y | x) under the K+1 model.
    #[test]
    fn combined_real_terms_are_joint_likelihood() {
        let logits = vec![vec![0.3, -1.2, 2.0, 0.0, 0.7], vec![-4.0, 1.0, 1.5, -0.2, 3.0]];
        let labels = [2usize, 4];
        for (l, &y) in logits.iter().zip(&labels) {
            let joint = -class_probs(l)[y].ln();
            let split = sup_loss(l, y) + real_term(l);
            assert!((joint - split).abs() < 1e-12, "{joint} vs {split}");
        }
    }

    #[test]
    fn discriminator_gradients_match_finite_differences() {
        let mut disc = Mlp::new(&[4, 6, 5, 3], Activation::Relu, 0.3, 5).unwrap();
        // zero biases put fully dropped rows exactly on the ReLU kink
        for l in disc.layers_mut() {
            l.bias.fill(0.1);
        }
        let mut r = rng::seeded(8);
        let lab = noise_batch(5, 4, &mut r);
        let real = noise_batch(6, 4, &mut r);
        let fake = noise_batch(4, 4, &mut r);
        let y = [0, 2, 1, 1, 0];
        let masks = [
            disc.sample_masks(5, &mut r),
            disc.sample_masks(6, &mut r),
            disc.sample_masks(4, &mut r),
        ];
        let worst = crate::neural::grad_check(
            &disc,
            |m| {
                let (a, b, g) = discriminator_loss(
                    m,
                    &lab,
                    &y,
                    &real,
                    &fake,
                    [
                        Dropout::Fixed(&masks[0]),
                        Dropout::Fixed(&masks[1]),
                        Dropout::Fixed(&masks[2]),
                    ],
                );
                (a + b, g)
            },
            1e-6,
            60,
            1,
        );
        assert!(worst < 1e-5, "relative error {worst}");
    }

    #[test]
    fn generator_gradient_matches_finite_differences() {
        let disc = Mlp::new(&[3, 6, 4, 2], Activation::Relu, 0.0, 2).unwrap();
        let gen = Mlp::new(&[2, 5, 3], Activation::Relu, 0.0, 3).unwrap();
        let mut r = rng::seeded(4);
        let real = noise_batch(7, 3, &mut r);
        let noise = noise_batch(5, 2, &mut r);
        let top = 1;
        let real_h = disc.forward(&real, Dropout::Off).post[top].clone();
        let worst = crate::neural::grad_check(
            &gen,
            |g| {
                let gf = g.forward(&noise, Dropout::Off);
                let df = disc.forward(gf.output(), Dropout::Off);
                let (loss, grad) = feature_matching(&real_h, &df.post[top]);
                let back = disc.backward_from(&df, top, &grad);
                (loss, g.backward(&gf, &back.input))
            },
            1e-6,
            40,
            2,
        );
        assert!(worst < 1e-5, "relative error {worst}");
    }

    #[test]
    fn small_run_is_deterministic_and_learns() {
        let mut r = rng::seeded(11);
        let centers = [[3.0, 0.0], [-3.0, 0.0], [0.0, 3.0]];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..150 {
            let c = i % 3;
            let n: DMatrix<f64> = noise_batch(1, 2, &mut r);
            x.push(vec![centers[c][0] + n[0], centers[c][1] + n[1]]);
            y.push(c);
        }
        let cfg = GanConfig {
            num_classes: 3,
            noise_dim: 4,
            generator_hidden: vec![16],
            discriminator_hidden: vec![16, 16],
            dropout: 0.1,
            epochs: 40,
            batch_size: 30,
            discriminator_adam: AdamConfig {
                learning_rate: 2e-3,
                ..AdamConfig::gan()
            },
            seed: 7,
            ..GanConfig::default()
        };
        let lab = LabeledInputs { x: &x[..30], y: &y[..30] };
        let a = train_gan(lab, &x[30..], None, &cfg).unwrap();
        let lab = LabeledInputs { x: &x[..30], y: &y[..30] };
        let b = train_gan(lab, &x[30..], None, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.accuracy(&x, &y) > 0.8, "accuracy {}", a.accuracy(&x, &y));
        assert_eq!(a.log().len(), 40);
        let back = GanModel::parse(&a.to_text()).unwrap();
        assert_eq!(back.discriminator(), a.discriminator());
        assert_eq!(back.standardizer(), a.standardizer());
    }

    #[test]
    fn config_dims() {
        let cfg = GanConfig::default();
        assert_eq!(cfg.discriminator_sizes(601), vec![601, 1024, 1024, 1024, 5]);
        assert_eq!(cfg.generator_sizes(601), vec![100, 500, 500, 601]);
    }
}
