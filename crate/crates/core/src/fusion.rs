//! Linear score fusion calibrated by multiclass logistic regression.
//!
//! Fused scores are `f = Σ_s α_s · x_s + β` with one scalar weight per system
//! and a class bias vector. Training minimizes the mean cross-entropy of
//! `softmax(f)` plus `l2 · ‖α‖²`.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::corpus::stratified_indices;
use crate::error::{AdiError, Result};
use crate::eval::{self, Averaging, Metrics};
use crate::neural::log_sum_exp;
use crate::svm::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreKind {
    #[default]
    LogLikelihood,
    DecisionValue,
    LogProbability,
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LogLikelihood => "log-likelihood",
            Self::DecisionValue => "decision-value",
            Self::LogProbability => "log-probability",
        })
    }
}

impl FromStr for ScoreKind {
    type Err = AdiError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-likelihood" => Ok(Self::LogLikelihood),
            "decision-value" => Ok(Self::DecisionValue),
            "log-probability" => Ok(Self::LogProbability),
            _ => Err(AdiError::invalid(format!("unknown score kind `{s}`"))),
        }
    }
}

/// One system's class scores per utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub system_id: String,
    pub kind: ScoreKind,
    num_classes: usize,
    utt_ids: Vec<String>,
    scores: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl ScoreMatrix {
    pub fn new(system_id: impl Into<String>, kind: ScoreKind, num_classes: usize) -> Self {
        Self {
            system_id: system_id.into(),
            kind,
            num_classes,
            utt_ids: Vec::new(),
            scores: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn push(&mut self, utt_id: impl Into<String>, scores: Vec<f64>) -> Result<()> {
        let utt_id = utt_id.into();
        if scores.len() != self.num_classes {
            return Err(AdiError::DimensionMismatch {
                expected: self.num_classes,
                got: scores.len(),
            });
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(AdiError::invalid(format!("non-finite score for {utt_id}")));
        }
        if self.index.contains_key(&utt_id) {
            return Err(AdiError::invalid(format!("duplicate utterance {utt_id}")));
        }
        self.index.insert(utt_id.clone(), self.utt_ids.len());
        self.utt_ids.push(utt_id);
        self.scores.push(scores);
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.utt_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utt_ids.is_empty()
    }

    pub fn utt_ids(&self) -> &[String] {
        &self.utt_ids
    }

    pub fn get(&self, utt_id: &str) -> Option<&[f64]> {
        self.index.get(utt_id).map(|&i| self.scores[i].as_slice())
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.utt_ids
            .iter()
            .zip(&self.scores)
            .map(|(u, s)| (u.as_str(), s.as_slice()))
    }

    /// TSV rows `utt_id s1 .. sK`, preceded by a `# system <id> kind <kind>` line.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# system {} kind {}", self.system_id, self.kind)?;
        for (u, s) in self.rows() {
            let vals: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{u}\t{}", vals.join("\t"))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a score file. Without a header line the system id is `default_id`
    /// and the kind is log-likelihood; the class count comes from the first row.
    pub fn parse<R: Read>(reader: R, source_name: &str, default_id: &str) -> Result<Self> {
        let mut m: Option<ScoreMatrix> = None;
        let mut header: Option<(String, ScoreKind)> = None;
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if let ["system", id, "kind", kind] = toks.as_slice() {
                    let kind = kind
                        .parse()
                        .map_err(|_| AdiError::parse(source_name, lineno, "unknown score kind"))?;
                    header = Some((id.to_string(), kind));
                }
                continue;
            }
            let mut fields = trimmed.split_whitespace();
            let utt = fields.next().unwrap_or_default();
            let vals: Vec<f64> = fields
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| AdiError::parse(source_name, lineno, format!("bad score `{v}`")))
                })
                .collect::<Result<_>>()?;
            let sm = m.get_or_insert_with(|| {
                let (id, kind) = header
                    .clone()
                    .unwrap_or_else(|| (default_id.to_string(), ScoreKind::default()));
                ScoreMatrix::new(id, kind, vals.len())
            });
            sm.push(utt, vals)
                .map_err(|e| AdiError::parse(source_name, lineno, e.to_string()))?;
        }
        m.ok_or_else(|| AdiError::parse(source_name, 0, "no score rows"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(std::fs::File::open(path)?, &path.display().to_string(), &stem)
    }
}

/// Several systems' scores aligned on one utterance order.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedScores {
    system_ids: Vec<String>,
    utt_ids: Vec<String>,
    /// One N × K matrix per system.
    scores: Vec<DMatrix<f64>>,
}

impl AlignedScores {
    /// Aligns `systems` on `utt_ids`; every system must cover every id.
    pub fn new(systems: &[ScoreMatrix], utt_ids: &[String]) -> Result<Self> {
        let first = systems
            .first()
            .ok_or_else(|| AdiError::invalid("fusion needs at least one system"))?;
        let k = first.num_classes();
        let mut seen = std::collections::HashSet::new();
        let mut scores = Vec::with_capacity(systems.len());
        for s in systems {
            if !seen.insert(s.system_id.as_str()) {
                return Err(AdiError::invalid(format!("duplicate system id {}", s.system_id)));
            }
            if s.num_classes() != k {
                return Err(AdiError::DimensionMismatch {
                    expected: k,
                    got: s.num_classes(),
                });
            }
            let missing: Vec<String> = utt_ids
                .iter()
                .filter(|u| s.get(u).is_none())
                .cloned()
                .collect();
            if !missing.is_empty() {
                return Err(AdiError::Coverage {
                    system: s.system_id.clone(),
                    missing,
                });
            }
            scores.push(DMatrix::from_fn(utt_ids.len(), k, |r, c| {
                s.get(&utt_ids[r]).expect("checked")[c]
            }));
        }
        Ok(Self {
            system_ids: systems.iter().map(|s| s.system_id.clone()).collect(),
            utt_ids: utt_ids.to_vec(),
            scores,
        })
    }

    pub fn from_matrices(system_ids: Vec<String>, scores: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = scores
            .first()
            .ok_or_else(|| AdiError::invalid("fusion needs at least one system"))?;
        if system_ids.len() != scores.len()
            || scores
                .iter()
                .any(|m| m.shape() != first.shape())
        {
            return Err(AdiError::invalid("system score matrices disagree in shape"));
        }
        let n = first.nrows();
        Ok(Self {
            system_ids,
            utt_ids: (0..n).map(|i| format!("u{i:06}")).collect(),
            scores,
        })
    }

    pub fn num_systems(&self) -> usize {
        self.scores.len()
    }

    pub fn num_classes(&self) -> usize {
        self.scores[0].ncols()
    }

    pub fn len(&self) -> usize {
        self.utt_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utt_ids.is_empty()
    }

    pub fn system_ids(&self) -> &[String] {
        &self.system_ids
    }

    pub fn utt_ids(&self) -> &[String] {
        &self.utt_ids
    }

    pub fn system(&self, s: usize) -> &DMatrix<f64> {
        &self.scores[s]
    }

    pub fn rows(&self, idx: &[usize]) -> Self {
        Self {
            system_ids: self.system_ids.clone(),
            utt_ids: idx.iter().map(|&i| self.utt_ids[i].clone()).collect(),
            scores: self
                .scores
                .iter()
                .map(|m| DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)]))
                .collect(),
        }
    }

    pub fn systems(&self, subset: &[usize]) -> Self {
        Self {
            system_ids: subset.iter().map(|&s| self.system_ids[s].clone()).collect(),
            utt_ids: self.utt_ids.clone(),
            scores: subset.iter().map(|&s| self.scores[s].clone()).collect(),
        }
    }

    /// Argmax decisions of one system alone.
    pub fn system_predictions(&self, s: usize) -> Vec<usize> {
        self.scores[s]
            .row_iter()
            .map(|r| argmax(&r.iter().copied().collect::<Vec<_>>()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    system_ids: Vec<String>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Objective after initialization and after every accepted step.
    objective_trace: Vec<f64>,
    grad_norm: f64,
}

/// Cross-entropy, gradient and Hessian of the fusion objective at `theta = (α, β)`.
struct Objective<'a> {
    data: &'a AlignedScores,
    labels: &'a [usize],
    l2: f64,
}

impl Objective<'_> {
    fn fused(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let s = self.data.num_systems();
        let k = self.data.num_classes();
        let mut f = DMatrix::zeros(self.data.len(), k);
        for (j, m) in self.data.scores.iter().enumerate() {
            f += m * theta[j];
        }
        for mut row in f.row_iter_mut() {
            for c in 0..k {
                row[c] += theta[s + c];
            }
        }
        f
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let s = self.data.num_systems();
        let f = self.fused(theta);
        let n = f.nrows() as f64;
        let ce: f64 = f
            .row_iter()
            .zip(self.labels)
            .map(|(r, &y)| {
                let v: Vec<f64> = r.iter().copied().collect();
                log_sum_exp(&v) - v[y]
            })
            .sum::<f64>()
            / n;
        ce + self.l2 * theta.rows(0, s).norm_squared()
    }

    fn derivatives(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let s = self.data.num_systems();
        let k = self.data.num_classes();
        let p_dim = s + k;
        let f = self.fused(theta);
        let n = f.nrows();
        let mut grad = DVector::zeros(p_dim);
        let mut hess = DMatrix::zeros(p_dim, p_dim);
        let mut jac = DMatrix::zeros(k, p_dim);
        for c in 0..k {
            jac[(c, s + c)] = 1.0;
        }
        for i in 0..n {
            let row: Vec<f64> = f.row(i).iter().copied().collect();
            let lse = log_sum_exp(&row);
            let p = DVector::from_iterator(k, row.iter().map(|v| (v - lse).exp()));
            let mut r = p.clone();
            r[self.labels[i]] -= 1.0;
            for j in 0..s {
                for c in 0..k {
                    jac[(c, j)] = self.data.scores[j][(i, c)];
                }
            }
            grad += jac.transpose() * &r;
            let w = DMatrix::from_diagonal(&p) - &p * p.transpose();
            hess += jac.transpose() * w * &jac;
        }
        grad /= n as f64;
        hess /= n as f64;
        for j in 0..s {
            grad[j] += 2.0 * self.l2 * theta[j];
            hess[(j, j)] += 2.0 * self.l2;
        }
        (grad, hess)
    }
}

/// Fits α and β from aligned scores and labels.
///
/// Iterates damped Newton steps (falling back to the negative gradient where
/// the Hessian is not positive definite) with Armijo backtracking, from
/// `α = 1/S`, `β = 0`, until the gradient norm drops to `tol`. Every accepted
/// step decreases the objective. Since softmax ignores a common shift and β
/// starts at zero with gradient summing to zero, β stays in the sum-zero subspace.
pub fn train_fusion(
    data: &AlignedScores,
    labels: &[usize],
    params: &FusionParams,
) -> Result<FusionModel> {
    let s = data.num_systems();
    let k = data.num_classes();
    if labels.len() != data.len() {
        return Err(AdiError::invalid(format!(
            "{} labels for {} utterances",
            labels.len(),
            data.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(AdiError::invalid(format!("label {bad} ≥ {k} classes")));
    }
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    if let Some(c) = counts.iter().position(|&n| n < 2) {
        return Err(AdiError::MissingClass(format!(
            "{c} (fusion needs ≥ 2 utterances per class, has {})",
            counts[c]
        )));
    }
    if !(params.l2 >= 0.0 && params.tol > 0.0) {
        return Err(AdiError::invalid("fusion needs l2 ≥ 0 and tol > 0"));
    }

    let obj = Objective {
        data,
        labels,
        l2: params.l2,
    };
    let mut theta = DVector::zeros(s + k);
    theta.rows_mut(0, s).fill(1.0 / s as f64);
    let mut value = obj.value(&theta);
    let mut trace = vec![value];
    let (mut grad, mut hess) = obj.derivatives(&theta);
    // softmax is invariant along the all-ones β direction; a tiny ridge keeps
    // the Newton system solvable without moving along it
    let ridge = 1e-12;
    for _ in 0..params.max_iter {
        if grad.norm() <= params.tol {
            break;
        }
        let direction = (&hess + DMatrix::identity(s + k, s + k) * ridge)
            .cholesky()
            .map(|c| -c.solve(&grad))
            .filter(|d| d.dot(&grad) < 0.0)
            .unwrap_or_else(|| -grad.clone());
        let slope = direction.dot(&grad);
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-20 {
            let cand = &theta + &direction * step;
            let v = obj.value(&cand);
            if v <= value + 1e-4 * step * slope {
                if v <= value {
                    theta = cand;
                    value = v;
                    trace.push(v);
                    accepted = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        (grad, hess) = obj.derivatives(&theta);
    }
    let grad_norm = grad.norm();
    if grad_norm > params.tol {
        log::warn!("fusion stopped with gradient norm {grad_norm:e} > tol {:e}", params.tol);
    }
    Ok(FusionModel {
        system_ids: data.system_ids.clone(),
        alpha: theta.rows(0, s).iter().copied().collect(),
        beta: theta.rows(s, k).iter().copied().collect(),
        objective_trace: trace,
        grad_norm,
    })
}

impl FusionModel {
    pub fn from_parts(system_ids: Vec<String>, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if system_ids.is_empty() || system_ids.len() != alpha.len() || beta.is_empty() {
            return Err(AdiError::invalid(
                "fusion model needs one weight per system and a non-empty bias",
            ));
        }
        Ok(Self {
            system_ids,
            alpha,
            beta,
            objective_trace: Vec::new(),
            grad_norm: 0.0,
        })
    }

    pub fn system_ids(&self) -> &[String] {
        &self.system_ids
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad_norm
    }

    /// Fused scores for one utterance from each system's row, in model order.
    pub fn fuse(&self, rows: &[&[f64]]) -> Result<Vec<f64>> {
        if rows.len() != self.alpha.len() {
            return Err(AdiError::DimensionMismatch {
                expected: self.alpha.len(),
                got: rows.len(),
            });
        }
        let mut out = self.beta.clone();
        for (row, a) in rows.iter().zip(&self.alpha) {
            if row.len() != out.len() {
                return Err(AdiError::DimensionMismatch {
                    expected: out.len(),
                    got: row.len(),
                });
            }
            for (o, v) in out.iter_mut().zip(row.iter()) {
                *o += a * v;
            }
        }
        Ok(out)
    }

    /// Fused scores for aligned data whose systems match the model's, by id.
    pub fn fuse_all(&self, data: &AlignedScores) -> Result<DMatrix<f64>> {
        let order: Vec<usize> = self
            .system_ids
            .iter()
            .map(|id| {
                data.system_ids
                    .iter()
                    .position(|d| d == id)
                    .ok_or_else(|| AdiError::invalid(format!("scores lack system {id}")))
            })
            .collect::<Result<_>>()?;
        if data.num_classes() != self.beta.len() {
            return Err(AdiError::DimensionMismatch {
                expected: self.beta.len(),
                got: data.num_classes(),
            });
        }
        let mut f = DMatrix::from_fn(data.len(), self.beta.len(), |_, c| self.beta[c]);
        for (&j, a) in order.iter().zip(&self.alpha) {
            f += &data.scores[j] * *a;
        }
        Ok(f)
    }

    pub fn predict_all(&self, data: &AlignedScores) -> Result<Vec<usize>> {
        let f = self.fuse_all(data)?;
        Ok(f.row_iter()
            .map(|r| argmax(&r.iter().copied().collect::<Vec<_>>()))
            .collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("adi-fusion v1\n");
        for (id, a) in self.system_ids.iter().zip(&self.alpha) {
            writeln!(s, "alpha {id} {a}").unwrap();
        }
        let b: Vec<String> = self.beta.iter().map(|v| v.to_string()).collect();
        writeln!(s, "beta {}", b.join(" ")).unwrap();
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("adi-fusion v1") {
            return Err(AdiError::Format("not an adi-fusion v1 model".into()));
        }
        let (mut ids, mut alpha, mut beta) = (Vec::new(), Vec::new(), Vec::new());
        let bad = |l: &str| AdiError::Format(format!("fusion: bad line `{l}`"));
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["alpha", id, a] => {
                    ids.push(id.to_string());
                    alpha.push(a.parse().map_err(|_| bad(line))?);
                }
                ["beta", rest @ ..] => {
                    beta = rest
                        .iter()
                        .map(|v| v.parse().map_err(|_| bad(line)))
                        .collect::<Result<_>>()?;
                }
                _ => return Err(bad(line)),
            }
        }
        Self::from_parts(ids, alpha, beta)
    }
}

/// Metrics of `model`'s argmax decisions on `data`.
pub fn evaluate(
    model: &FusionModel,
    data: &AlignedScores,
    labels: &[usize],
    avg: Averaging,
) -> Result<Metrics> {
    let preds = model.predict_all(data)?;
    let cm = eval::confusion(&preds, labels, data.num_classes())?;
    Ok(eval::metrics(&cm, avg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KFoldResult {
    pub folds: Vec<Metrics>,
    pub mean: Metrics,
    /// Held-out indices per fold.
    pub fold_indices: Vec<Vec<usize>>,
}

/// Stratified k folds; fusion trained on k−1 folds, scored on the held-out one.
pub fn kfold_eval(
    data: &AlignedScores,
    labels: &[usize],
    folds: usize,
    seed: u64,
    params: &FusionParams,
    avg: Averaging,
) -> Result<KFoldResult> {
    if folds < 2 {
        return Err(AdiError::invalid("k-fold needs at least 2 folds"));
    }
    let parts = stratified_indices(labels, data.num_classes(), &vec![1.0 / folds as f64; folds], seed)?;
    let mut results = Vec::with_capacity(folds);
    for (f, held) in parts.iter().enumerate() {
        let train: Vec<usize> = parts
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, p)| p.iter().copied())
            .collect();
        let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let y_held: Vec<usize> = held.iter().map(|&i| labels[i]).collect();
        let model = train_fusion(&data.rows(&train), &y_train, params)?;
        results.push(evaluate(&model, &data.rows(held), &y_held, avg)?);
    }
    let n = results.len() as f64;
    let mean = Metrics {
        acc: results.iter().map(|m| m.acc).sum::<f64>() / n,
        rcl: results.iter().map(|m| m.rcl).sum::<f64>() / n,
        prc: results.iter().map(|m| m.prc).sum::<f64>() / n,
    };
    Ok(KFoldResult {
        folds: results,
        mean,
        fold_indices: parts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Protocol {
    /// Fusion trained on a stratified `fraction` of the data, evaluated on the rest.
    Split { fraction: f64, seed: u64 },
    KFold { folds: usize, seed: u64 },
}

impl Protocol {
    pub fn one_third_split(seed: u64) -> Self {
        Protocol::Split {
            fraction: 1.0 / 3.0,
            seed,
        }
    }

    pub fn ten_fold(seed: u64) -> Self {
        Protocol::KFold { folds: 10, seed }
    }

    pub fn evaluate(
        &self,
        data: &AlignedScores,
        labels: &[usize],
        params: &FusionParams,
        avg: Averaging,
    ) -> Result<Metrics> {
        match *self {
            Protocol::Split { fraction, seed } => {
                let parts =
                    stratified_indices(labels, data.num_classes(), &[fraction, 1.0 - fraction], seed)?;
                let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
                let model = train_fusion(&data.rows(&parts[0]), &pick(&parts[0]), params)?;
                evaluate(&model, &data.rows(&parts[1]), &pick(&parts[1]), avg)
            }
            Protocol::KFold { folds, seed } => {
                Ok(kfold_eval(data, labels, folds, seed, params, avg)?.mean)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Indices into the swept system list, ascending.
    pub subset: Vec<usize>,
    pub system_ids: Vec<String>,
    pub metrics: Metrics,
}

pub const MAX_SWEEP_SYSTEMS: usize = 16;

/// Evaluates every non-empty subset of systems under `protocol`, ranked by
/// accuracy (descending), then subset size, then the subset's system indices.
pub fn sweep_combinations(
    data: &AlignedScores,
    labels: &[usize],
    protocol: &Protocol,
    params: &FusionParams,
    avg: Averaging,
) -> Result<Vec<SweepRow>> {
    sweep_with(data.system_ids(), |subset| {
        protocol.evaluate(&data.systems(subset), labels, params, avg)
    })
}

/// As [`sweep_combinations`], but every subset's fusion is trained on `train`
/// and scored on the separate `test` set (same systems, same order).
pub fn sweep_heldout(
    train: &AlignedScores,
    train_labels: &[usize],
    test: &AlignedScores,
    test_labels: &[usize],
    params: &FusionParams,
    avg: Averaging,
) -> Result<Vec<SweepRow>> {
    if train.system_ids() != test.system_ids() {
        return Err(AdiError::invalid("train and test score sets list different systems"));
    }
    sweep_with(train.system_ids(), |subset| {
        let model = train_fusion(&train.systems(subset), train_labels, params)?;
        evaluate(&model, &test.systems(subset), test_labels, avg)
    })
}

fn sweep_with<F>(ids: &[String], eval_subset: F) -> Result<Vec<SweepRow>>
where
    F: Fn(&[usize]) -> Result<Metrics> + Sync,
{
    let s = ids.len();
    if s == 0 || s > MAX_SWEEP_SYSTEMS {
        return Err(AdiError::invalid(format!(
            "sweep takes 1..={MAX_SWEEP_SYSTEMS} systems, got {s}"
        )));
    }
    let masks: Vec<u32> = (1..(1u32 << s)).collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(masks.len());
    let chunk = masks.len().div_ceil(workers);
    let eval_subset = &eval_subset;
    let mut rows: Vec<SweepRow> = std::thread::scope(|scope| {
        let handles: Vec<_> = masks
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&mask| {
                            let subset: Vec<usize> = (0..s).filter(|j| mask & (1 << j) != 0).collect();
                            let metrics = eval_subset(&subset)?;
                            Ok(SweepRow {
                                system_ids: subset.iter().map(|&j| ids[j].clone()).collect(),
                                subset,
                                metrics,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect::<Result<Vec<Vec<_>>>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    rows.sort_by(|a, b| {
        b.metrics
            .acc
            .total_cmp(&a.metrics.acc)
            .then(a.subset.len().cmp(&b.subset.len()))
            .then_with(|| a.subset.cmp(&b.subset))
    });
    Ok(rows)
}

/// TSV `subset acc rcl prc`; subsets are `+`-joined system ids.
pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut s = String::from("subset\tacc\trcl\tprc\n");
    for r in rows {
        writeln!(
            s,
            "{}\t{:.2}\t{:.2}\t{:.2}",
            r.system_ids.join("+"),
            r.metrics.acc,
            r.metrics.rcl,
            r.metrics.prc
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    /// Scores equal to log-probabilities of a known softmax model, labels
    /// drawn from it.
    fn calibrated(n: usize, k: usize, seed: u64) -> (AlignedScores, Vec<usize>) {
        let mut r = rng::seeded(seed);
        let mut m = DMatrix::zeros(n, k);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let logits: Vec<f64> = (0..k).map(|_| r.random_range(-2.0..2.0)).collect();
            let lse = log_sum_exp(&logits);
            let u: f64 = r.random();
            let mut acc = 0.0;
            let mut label = k - 1;
            for (c, l) in logits.iter().enumerate() {
                acc += (l - lse).exp();
                if u < acc {
                    label = c;
                    break;
                }
            }
            for c in 0..k {
                m[(i, c)] = logits[c] - lse;
            }
            y.push(label);
        }
        (
            AlignedScores::from_matrices(vec!["sys".into()], vec![m]).unwrap(),
            y,
        )
    }

    #[test]
    fn self_calibrated_system_keeps_unit_weight() {
        let (data, y) = calibrated(20000, 5, 3);
        let m = train_fusion(&data, &y, &FusionParams::default()).unwrap();
        assert!((m.alpha()[0] - 1.0).abs() < 0.1, "alpha {:?}", m.alpha());
        for b in m.beta() {
            assert!(b.abs() < 0.1, "beta {:?}", m.beta());
        }
    }

    #[test]
    fn identical_systems_split_weight_evenly() {
        let (data, y) = calibrated(500, 3, 5);
        let m0 = data.system(0).clone();
        let twin = AlignedScores::from_matrices(vec!["a".into(), "b".into()], vec![m0.clone(), m0]).unwrap();
        let m = train_fusion(&twin, &y, &FusionParams::default()).unwrap();
        assert!((m.alpha()[0] - m.alpha()[1]).abs() < 1e-6);
    }

    #[test]
    fn objective_decreases_to_tolerance() {
        let (data, y) = calibrated(300, 4, 9);
        let params = FusionParams::default();
        let m = train_fusion(&data, &y, &params).unwrap();
        assert!(m.objective_trace().windows(2).all(|w| w[1] <= w[0]));
        assert!(m.grad_norm() <= params.tol, "grad norm {}", m.grad_norm());
    }

    #[test]
    fn zero_weights_predict_bias_argmax() {
        let m = FusionModel::from_parts(vec!["a".into()], vec![0.0], vec![0.1, 0.5, 0.5]).unwrap();
        let f = m.fuse(&[&[9.0, -3.0, 1.0]]).unwrap();
        assert_eq!(argmax(&f), 1);
    }

    #[test]
    fn identity_fusion_keeps_decisions() {
        let (data, _) = calibrated(200, 5, 1);
        let m = FusionModel::from_parts(vec!["sys".into()], vec![1.0], vec![0.0; 5]).unwrap();
        assert_eq!(m.predict_all(&data).unwrap(), data.system_predictions(0));
    }

    #[test]
    fn coverage_error_names_missing() {
        let mut a = ScoreMatrix::new("a", ScoreKind::LogLikelihood, 2);
        a.push("u1", vec![0.0, 1.0]).unwrap();
        let err = AlignedScores::new(&[a], &["u1".into(), "u2".into()]).unwrap_err();
        assert!(err.to_string().contains("u2"), "{err}");
    }

    #[test]
    fn score_file_roundtrip() {
        let mut a = ScoreMatrix::new("gb", ScoreKind::DecisionValue, 3);
        a.push("u1", vec![0.25, -1.0, 3.5]).unwrap();
        a.push("u2", vec![1e-300, 2.0, -0.0]).unwrap();
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        let back = ScoreMatrix::parse(&buf[..], "mem", "x").unwrap();
        assert_eq!(back, a);
        let bare = ScoreMatrix::parse("u1 1 2\nu2 3 4\n".as_bytes(), "mem", "bare").unwrap();
        assert_eq!(bare.system_id, "bare");
        assert_eq!(bare.get("u2"), Some(&[3.0, 4.0][..]));
    }

    #[test]
    fn model_text_roundtrip() {
        let m = FusionModel::from_parts(vec!["a".into(), "b".into()], vec![0.5, 1.25], vec![0.1, -0.1]).unwrap();
        assert_eq!(FusionModel::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn sweep_counts_and_order() {
        let (data, y) = calibrated(300, 3, 2);
        let base = data.system(0).clone();
        let noisy = base.map(|v| v * 0.5);
        let three = AlignedScores::from_matrices(
            vec!["a".into(), "b".into(), "c".into()],
            vec![base.clone(), noisy, base.map(|v| -v)],
        )
        .unwrap();
        let rows = sweep_combinations(
            &three,
            &y,
            &Protocol::one_third_split(1),
            &FusionParams::default(),
            Averaging::Macro,
        )
        .unwrap();
        assert_eq!(rows.len(), 7);
        assert!(rows.windows(2).all(|w| w[0].metrics.acc >= w[1].metrics.acc));
        let single = sweep_combinations(
            &three.systems(&[0]),
            &y,
            &Protocol::one_third_split(1),
            &FusionParams::default(),
            Averaging::Macro,
        )
        .unwrap();
        assert_eq!(single.len(), 1);
    }
}
