//! One-vs-rest linear SVM trained by dual coordinate descent.
//!
//! Each class solves the L2-regularized hinge-loss problem
//!
//! ```text
//! min_w  ½‖w‖² + C Σ_i max(0, 1 − y_i wᵀx_i)
//! ```
//!
//! over inputs augmented with a constant bias feature, through its box-constrained
//! dual `min_α ½αᵀQα − eᵀα, 0 ≤ α_i ≤ C`. Passes stop once the relative
//! primal-dual gap falls to `tol`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use rand::seq::SliceRandom;

use crate::error::{AdiError, Result};
use crate::rng;
use crate::text::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Value of the constant feature that carries the bias.
    pub bias_scale: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_iter: 1000,
            bias_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassProblemReport {
    pub passes: usize,
    pub primal: f64,
    pub dual: f64,
    pub converged: bool,
    /// Smallest and largest dual variable at termination.
    pub alpha_range: (f64, f64),
}

impl ClassProblemReport {
    pub fn relative_gap(&self) -> f64 {
        (self.primal - self.dual) / self.primal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    params: SvmParams,
    reports: Vec<ClassProblemReport>,
}

impl SvmModel {
    pub fn from_parts(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != bias.len() || weights.is_empty() {
            return Err(AdiError::invalid("need one bias per weight row"));
        }
        let dim = weights[0].len();
        if weights.iter().any(|w| w.len() != dim) {
            return Err(AdiError::invalid("weight rows differ in length"));
        }
        Ok(Self {
            weights,
            bias,
            params: SvmParams::default(),
            reports: Vec::new(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn params(&self) -> &SvmParams {
        &self.params
    }

    pub fn reports(&self) -> &[ClassProblemReport] {
        &self.reports
    }

    /// Decision values `w_k·x + b_k`.
    pub fn scores(&self, x: &SparseVector) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| x.dot(w) + b)
            .collect()
    }

    pub fn predict(&self, x: &SparseVector) -> usize {
        argmax(&self.scores(x))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "adi-svm v1").unwrap();
        writeln!(
            s,
            "classes {} dim {} c {} tol {} max_iter {} bias_scale {} seed {}",
            self.num_classes(),
            self.dim(),
            self.params.c,
            self.params.tol,
            self.params.max_iter,
            self.params.bias_scale,
            self.params.seed
        )
        .unwrap();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            let row = SparseVector::from_dense(w);
            writeln!(s, "{b} {}", row.to_text()).unwrap();
        }
        s
    }

    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| AdiError::Format("svm model truncated".into()))
        };
        if next()?.trim() != "adi-svm v1" {
            return Err(AdiError::Format("not an adi-svm v1 model".into()));
        }
        let header = next()?;
        let kv = header_pairs(&header)?;
        let get = |k: &str| -> Result<&str> {
            kv.iter()
                .find(|(key, _)| *key == k)
                .map(|(_, v)| *v)
                .ok_or_else(|| AdiError::Format(format!("svm header lacks `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| AdiError::Format(format!("svm header `{k}` is not a number")))
        };
        let classes = num("classes")? as usize;
        let dim = num("dim")? as usize;
        let params = SvmParams {
            c: num("c")?,
            tol: num("tol")?,
            max_iter: num("max_iter")? as usize,
            bias_scale: num("bias_scale")?,
            seed: num("seed")? as u64,
        };
        let mut weights = Vec::with_capacity(classes);
        let mut bias = Vec::with_capacity(classes);
        for k in 0..classes {
            let line = next()?;
            let mut fields = line.split_whitespace();
            let b: f64 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| AdiError::Format(format!("class {k}: bad bias")))?;
            let mut w = vec![0.0; dim];
            for f in fields {
                let (i, v) = f
                    .split_once(':')
                    .and_then(|(i, v)| Some((i.parse::<usize>().ok()?, v.parse::<f64>().ok()?)))
                    .ok_or_else(|| AdiError::Format(format!("class {k}: bad entry `{f}`")))?;
                *w.get_mut(i)
                    .ok_or_else(|| AdiError::Format(format!("class {k}: index {i} ≥ dim")))? = v;
            }
            weights.push(w);
            bias.push(b);
        }
        let mut model = SvmModel::from_parts(weights, bias)?;
        model.params = params;
        Ok(model)
    }
}

pub(crate) fn header_pairs(line: &str) -> Result<Vec<(&str, &str)>> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() % 2 != 0 {
        return Err(AdiError::Format(format!("malformed header `{line}`")));
    }
    Ok(f.chunks(2).map(|c| (c[0], c[1])).collect())
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn train_svm(
    x: &[SparseVector],
    y: &[usize],
    num_classes: usize,
    params: &SvmParams,
) -> Result<SvmModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(AdiError::invalid(format!(
            "need equally many samples and labels, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(AdiError::invalid("C must be positive"));
    }
    if x.iter().any(|v| v.entries().iter().any(|(_, f)| !f.is_finite())) {
        return Err(AdiError::invalid("non-finite feature value"));
    }
    let mut present = vec![false; num_classes];
    for &label in y {
        *present
            .get_mut(label)
            .ok_or_else(|| AdiError::invalid(format!("label {label} ≥ {num_classes} classes")))? =
            true;
    }
    if let Some(k) = present.iter().position(|p| !p) {
        return Err(AdiError::MissingClass(k.to_string()));
    }
    let dim = x
        .iter()
        .filter_map(|v| v.entries().last().map(|&(i, _)| i + 1))
        .max()
        .unwrap_or(0);
    train_svm_with_dim(x, y, num_classes, dim, params)
}

/// As [`train_svm`] with an explicit feature dimension (a vocabulary size
/// may exceed the largest index seen in training).
pub fn train_svm_with_dim(
    x: &[SparseVector],
    y: &[usize],
    num_classes: usize,
    dim: usize,
    params: &SvmParams,
) -> Result<SvmModel> {
    if x
        .iter()
        .any(|v| v.entries().last().is_some_and(|&(i, _)| i >= dim))
    {
        return Err(AdiError::invalid("feature index exceeds dimension"));
    }
    let q_diag: Vec<f64> = x
        .iter()
        .map(|v| v.squared_norm() + params.bias_scale * params.bias_scale)
        .collect();
    let mut weights = Vec::with_capacity(num_classes);
    let mut bias = Vec::with_capacity(num_classes);
    let mut reports = Vec::with_capacity(num_classes);
    for k in 0..num_classes {
        let signs: Vec<f64> = y.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        let seed = rng::derive(params.seed, k as u64);
        let (w, b, report) = solve_binary(x, &signs, &q_diag, dim, params, seed);
        weights.push(w);
        bias.push(b);
        reports.push(report);
    }
    Ok(SvmModel {
        weights,
        bias,
        params: *params,
        reports,
    })
}

fn solve_binary(
    x: &[SparseVector],
    signs: &[f64],
    q_diag: &[f64],
    dim: usize,
    params: &SvmParams,
    seed: u64,
) -> (Vec<f64>, f64, ClassProblemReport) {
    let n = x.len();
    let c = params.c;
    let bs = params.bias_scale;
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    // weight of the constant bias feature
    let mut wb = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::seeded(seed);
    let mut passes = 0;
    let mut converged = false;
    let (mut primal, mut dual) = (f64::INFINITY, f64::NEG_INFINITY);

    while passes < params.max_iter {
        order.shuffle(&mut rng);
        for &i in &order {
            let yi = signs[i];
            let g = yi * (x[i].dot(&w) + wb * bs) - 1.0;
            let a = alpha[i];
            let pg = if a <= 0.0 {
                g.min(0.0)
            } else if a >= c {
                g.max(0.0)
            } else {
                g
            };
            if pg.abs() > 1e-15 {
                let a_new = (a - g / q_diag[i]).clamp(0.0, c);
                let step = (a_new - a) * yi;
                if step != 0.0 {
                    for &(j, v) in x[i].entries() {
                        w[j] += step * v;
                    }
                    wb += step * bs;
                }
                alpha[i] = a_new;
            }
        }
        passes += 1;
        let norm2 = w.iter().map(|v| v * v).sum::<f64>() + wb * wb;
        let hinge: f64 = x
            .iter()
            .zip(signs)
            .map(|(xi, yi)| (1.0 - yi * (xi.dot(&w) + wb * bs)).max(0.0))
            .sum();
        primal = 0.5 * norm2 + c * hinge;
        dual = alpha.iter().sum::<f64>() - 0.5 * norm2;
        if (primal - dual) <= params.tol * primal {
            converged = true;
            break;
        }
    }
    let alpha_range = alpha
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
            (lo.min(a), hi.max(a))
        });
    (
        w,
        wb * bs,
        ClassProblemReport {
            passes,
            primal,
            dual,
            converged,
            alpha_range,
        },
    )
}
