//! Acceptance suite: each criterion runs at its stated tolerance and time
//! budget and prints one PASS/FAIL line. Run with
//! `cargo test -p adi-cli --test acceptance -- --nocapture`.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use adi_cli::commands::{run, Cli, Outcome};
use adi_cli::config::{ExperimentConfig, ProtocolKind};
use adi_cli::pipeline::{Plan, Workspace};
use adi_core::corpus::{
    split_dataset, synth_generate, LabeledDataset, Manifest, SplitTag, SyntheticSpec, NUM_DIALECTS,
};
use adi_core::eval::Averaging;
use adi_core::fusion::{
    kfold_eval, sweep_combinations, train_fusion, AlignedScores, FusionModel, FusionParams, Protocol,
};
use adi_core::gan::{
    discriminator_loss, sup_loss, train_gan, train_labeled_only, unsup_loss, with_duration, GanConfig,
    LabeledInputs,
};
use adi_core::gb::{fit_gb, GbModel, DEFAULT_SHRINKAGE};
use adi_core::lda::{fit_lda, Shrinkage};
use adi_core::neural::{grad_check, Activation, AdamConfig, Dropout, Mlp};
use adi_core::rng;
use adi_core::svm::{train_svm_with_dim, SvmParams};
use adi_core::text::{PreprocCombo, SparseVector, SuffixStemmer, TermWeighting, TextPipeline, Vocab};
use adi_core::ubnf::{
    compute_sdc, fit_gmm_em, stack_frames, BottleneckConfig, BottleneckNet, FrameSynth, GmmConfig,
    SdcParams,
};
use clap::Parser;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Runs one criterion, enforcing its time budget; prints the result line.
fn criterion(n: usize, name: &str, budget: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let t0 = Instant::now();
    let r = f();
    let el = t0.elapsed();
    let (ok, detail) = match r {
        Ok(d) if el <= budget => (true, d),
        Ok(d) => (false, format!("{d}; over budget {:.1}s > {:.0}s", el.as_secs_f64(), budget.as_secs_f64())),
        Err(d) => (false, d),
    };
    println!(
        "criterion {n} [{}] {name}: {detail} ({:.1}s)",
        if ok { "PASS" } else { "FAIL" },
        el.as_secs_f64()
    );
    ok
}

fn accuracy(pred: &[usize], y: &[usize]) -> f64 {
    100.0 * pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

// ---- 1. formula oracles ----------------------------------------------------

fn random_spd(d: usize, r: &mut rng::Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.5
}

fn mvn_logpdf(w: &DVector<f64>, m: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = w.len() as f64;
    let chol = cov.clone().cholesky().unwrap();
    let diff = w - m;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + logdet + diff.dot(&chol.solve(&diff)))
}

fn brute_tfidf(docs: &[Vec<String>], doc: usize) -> BTreeMap<String, f64> {
    let n = docs.len() as f64;
    docs[doc]
        .iter()
        .map(|f| {
            let tf = docs[doc].iter().filter(|g| *g == f).count() as f64;
            let df = docs.iter().filter(|d| d.contains(f)).count() as f64;
            (f.clone(), tf * (((1.0 + n) / (1.0 + df)).ln() + 1.0))
        })
        .collect()
}

/// Every static coefficient, then `k` blocks of `c(t+iP+d) − c(t+iP−d)`
/// over the first `n`, with frame indices clamped to the utterance.
fn brute_sdc(c: &DMatrix<f64>, p: SdcParams) -> DMatrix<f64> {
    let t = c.nrows() as i64;
    let f = c.ncols();
    let at = |i: i64, j: usize| c[(i.clamp(0, t - 1) as usize, j)];
    let mut out = DMatrix::zeros(c.nrows(), f + p.n * p.k);
    for row in 0..t {
        for j in 0..f {
            out[(row as usize, j)] = c[(row as usize, j)];
        }
        for i in 0..p.k {
            for j in 0..p.n {
                let base = row + (i * p.p) as i64;
                out[(row as usize, f + i * p.n + j)] = at(base + p.d as i64, j) - at(base - p.d as i64, j);
            }
        }
    }
    out
}

fn formula_oracles() -> Verdict {
    let mut r = rng::seeded(100);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = r.random_range(1..7);
        let k = r.random_range(2..6);
        let cov = random_spd(d, &mut r);
        let means: Vec<DVector<f64>> = (0..k).map(|_| DVector::from_fn(d, |_, _| r.random_range(-3.0..3.0))).collect();
        let w = DVector::from_fn(d, |_, _| r.random_range(-3.0..3.0));
        let s = GbModel::from_parts(means.clone(), cov.clone(), 0.0)
            .map_err(|e| e.to_string())?
            .loglik(w.as_slice())
            .map_err(|e| e.to_string())?;
        let dens: Vec<f64> = means.iter().map(|m| mvn_logpdf(&w, m, &cov)).collect();
        for a in 0..k {
            for b in 0..k {
                worst = worst.max(((s[a] - s[b]) - (dens[a] - dens[b])).abs());
            }
        }
    }
    if worst >= 1e-8 {
        return Err(format!("gb difference error {worst:.2e}"));
    }
    let u = vec![0.0; NUM_DIALECTS];
    let e_sup = (sup_loss(&u, 2) - 5f64.ln()).abs();
    let e_unsup = (unsup_loss(&[u.clone()], &[u]) - ((6.0f64 / 5.0).ln() + 6f64.ln())).abs();
    if e_sup >= 1e-12 || e_unsup >= 1e-12 {
        return Err(format!("uniform-logit losses off by {e_sup:.1e} / {e_unsup:.1e}"));
    }
    let words: Vec<String> = (0..12).map(|i| format!("t{i}")).collect();
    let corpus: Vec<Vec<String>> = (0..40)
        .map(|_| (0..r.random_range(1..15)).map(|_| words[r.random_range(0..12)].clone()).collect())
        .collect();
    let pipeline = TextPipeline::new(PreprocCombo::new(0).unwrap(), HashSet::new(), SuffixStemmer::english());
    let vocab = Vocab::from_corpus(&corpus, &pipeline, 1);
    for (i, doc) in corpus.iter().enumerate() {
        let v = vocab.vectorize(&pipeline.features(doc), TermWeighting::TfIdf);
        let want = brute_tfidf(&corpus, i);
        let got: BTreeMap<String, f64> = v
            .entries()
            .iter()
            .map(|&(j, w)| (vocab.features().find(|&(_, c)| c == j).unwrap().0.to_string(), w))
            .collect();
        if got != want {
            return Err(format!("tf-idf of document {i} differs from the definition"));
        }
    }
    for p in [SdcParams::default(), SdcParams { n: 3, d: 2, p: 1, k: 4 }, SdcParams { n: 5, d: 1, p: 3, k: 1 }] {
        let c = DMatrix::from_fn(60, 7, |_, _| r.random_range(-5.0..5.0));
        if compute_sdc(&c, p).map_err(|e| e.to_string())? != brute_sdc(&c, p) {
            return Err(format!("SDC {p:?} differs from the definition"));
        }
    }
    Ok(format!("gb max error {worst:.1e}, losses exact to {:.0e}, tf-idf and SDC exact", e_sup.max(e_unsup).max(1e-16)))
}

// ---- 2. gradient checks ----------------------------------------------------

fn gradient_checks() -> Verdict {
    const COORDS: usize = 80;
    let mut disc = Mlp::new(&[6, 16, 16, 5], Activation::Relu, 0.5, 3).unwrap();
    for l in disc.layers_mut() {
        l.bias.fill(0.05);
    }
    let mut r = rng::seeded(12);
    let m = |n: usize, r: &mut rng::Rng| DMatrix::from_fn(n, 6, |_, _| r.random_range(-2.0..2.0));
    let (lab, real, fake) = (m(8, &mut r), m(10, &mut r), m(10, &mut r));
    let y: Vec<usize> = (0..8).map(|i| i % 5).collect();
    let masks = [disc.sample_masks(8, &mut r), disc.sample_masks(10, &mut r), disc.sample_masks(10, &mut r)];
    let gan = grad_check(
        &disc,
        |d| {
            let drop = [Dropout::Fixed(&masks[0]), Dropout::Fixed(&masks[1]), Dropout::Fixed(&masks[2])];
            let (s, u, g) = discriminator_loss(d, &lab, &y, &real, &fake, drop);
            (s + u, g)
        },
        1e-6,
        COORDS,
        4,
    );
    let cfg = BottleneckConfig {
        hidden: vec![12, 12],
        bottleneck: 6,
        context: 1,
        dropout: 0.3,
        ..BottleneckConfig::default()
    };
    let mut net = BottleneckNet::new(4, 5, &cfg).unwrap().mlp().clone();
    for l in net.layers_mut() {
        l.bias.fill(0.05);
    }
    let x = DMatrix::from_fn(9, 12, |_, _| r.random_range(-2.0..2.0));
    let yb: Vec<usize> = (0..9).map(|i| i % 5).collect();
    let mb = net.sample_masks(9, &mut r);
    let bnf = grad_check(&net, |m| BottleneckNet::loss(m, &x, &yb, Dropout::Fixed(&mb)), 1e-6, COORDS, 6);
    check(
        gan < 1e-4 && bnf < 1e-4,
        format!("max relative error GAN {gan:.1e}, bottleneck {bnf:.1e} over {COORDS} coordinates each"),
    )
}

// ---- 3. end-to-end benchmark -----------------------------------------------

fn bench_spec(per_class: usize, separation: f64) -> SyntheticSpec {
    SyntheticSpec {
        dim: 20,
        counts: [per_class; NUM_DIALECTS],
        separation,
        ..SyntheticSpec::default()
    }
}

fn xy(ds: &LabeledDataset) -> (Vec<Vec<f64>>, Vec<usize>) {
    let (_, recs, y) = ds.embedding_rows().unwrap();
    (recs.iter().map(|r| r.vector.clone()).collect(), y)
}

fn benchmark() -> Verdict {
    let mut gb_accs = Vec::new();
    let mut svm_accs = Vec::new();
    for seed in 1..=5u64 {
        let train = synth_generate(&bench_spec(500, 4.0), SplitTag::Train, seed).unwrap();
        let test = synth_generate(&bench_spec(200, 4.0), SplitTag::Test, rng::derive(seed, 1)).unwrap();
        let ((x, y), (xt, yt)) = (xy(&train), xy(&test));
        let lda = fit_lda(&x, &y, NUM_DIALECTS, 4, Shrinkage::default()).unwrap();
        let gb = fit_gb(&lda.project_all(&x).unwrap(), &y, NUM_DIALECTS, DEFAULT_SHRINKAGE).unwrap();
        let pred: Vec<usize> = lda.project_all(&xt).unwrap().iter().map(|p| gb.predict(p).unwrap()).collect();
        gb_accs.push(accuracy(&pred, &yt));

        let (_, docs, y) = train.transcript_rows().unwrap();
        let (_, tdocs, ty) = test.transcript_rows().unwrap();
        let pipeline = TextPipeline::new(PreprocCombo::new(0).unwrap(), HashSet::new(), SuffixStemmer::english());
        let vocab = Vocab::from_corpus(&docs, &pipeline, 1);
        let vec = |d: &Vec<String>| vocab.vectorize(&pipeline.features(d), TermWeighting::TfIdf);
        let xs: Vec<SparseVector> = docs.iter().map(vec).collect();
        let svm = train_svm_with_dim(&xs, &y, NUM_DIALECTS, vocab.len(), &SvmParams { seed, ..SvmParams::default() }).unwrap();
        let pred: Vec<usize> = tdocs.iter().map(|d| svm.predict(&vec(d))).collect();
        svm_accs.push(accuracy(&pred, &ty));
    }
    let fmt = |v: &[f64]| v.iter().map(|a| format!("{a:.1}")).collect::<Vec<_>>().join(" ");
    check(
        gb_accs.iter().all(|&a| a >= 95.0) && svm_accs.iter().all(|&a| a >= 90.0),
        format!("LDA+GB [{}] (≥ 95), SVM [{}] (≥ 90)", fmt(&gb_accs), fmt(&svm_accs)),
    )
}

// ---- 4. semi-supervised GAN ------------------------------------------------

fn gan_benchmark_config(seed: u64) -> GanConfig {
    let adam = AdamConfig {
        learning_rate: 1e-3,
        ..AdamConfig::gan()
    };
    GanConfig {
        discriminator_hidden: vec![64, 64],
        generator_hidden: vec![256, 256],
        noise_dim: 32,
        dropout: 0.5,
        epochs: 100,
        batch_size: 100,
        discriminator_adam: adam,
        generator_adam: adam,
        seed,
        ..GanConfig::default()
    }
}

fn semi_supervised_gan() -> Verdict {
    let mut diffs = Vec::new();
    for seed in 1..=5u64 {
        let train = synth_generate(&bench_spec(500, 2.0), SplitTag::Train, seed).unwrap();
        let test = synth_generate(&bench_spec(200, 2.0), SplitTag::Test, seed + 1000).unwrap();
        let parts = split_dataset(&train, &[0.1, 0.9], seed).unwrap();
        let rows = |d: &LabeledDataset| {
            let (_, r, y) = d.embedding_rows().unwrap();
            (r.iter().map(|r| with_duration(r)).collect::<Vec<_>>(), y)
        };
        let ((lx, ly), (ux, _), (tx, ty)) = (rows(&parts[0]), rows(&parts[1]), rows(&test));
        let cfg = gan_benchmark_config(seed);
        let gan = train_gan(LabeledInputs { x: &lx, y: &ly }, &ux, None, &cfg).map_err(|e| e.to_string())?;
        let base = train_labeled_only(LabeledInputs { x: &lx, y: &ly }, lx.len() + ux.len(), &cfg)
            .map_err(|e| e.to_string())?;
        let (g, b) = (100.0 * gan.accuracy(&tx, &ty), 100.0 * base.accuracy(&tx, &ty));
        diffs.push((g, b));
    }
    let not_worse = diffs.iter().filter(|(g, b)| g >= &(b - 2.0)).count();
    let better = diffs.iter().filter(|(g, b)| g >= &(b + 1.0)).count();
    let detail = diffs
        .iter()
        .map(|(g, b)| format!("{g:.1}/{b:.1}"))
        .collect::<Vec<_>>()
        .join(" ");
    check(
        not_worse >= 4 && better >= 2,
        format!("GAN/baseline [{detail}]: ≥ base−2 on {not_worse}/5 (need 4), ≥ base+1 on {better}/5 (need 2)"),
    )
}

// ---- 5. fusion gain --------------------------------------------------------

/// Scores `mu·onehot(y) + N(0, 1)`: an observer whose errors are independent
/// of every other observer's.
fn observer(labels: &[usize], mu: f64, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut r = rng::seeded(seed);
    DMatrix::from_fn(labels.len(), NUM_DIALECTS, |i, c| {
        let z: f64 = StandardNormal.sample(&mut r);
        scale * (z + if c == labels[i] { mu } else { 0.0 })
    })
}

fn fusion_gain() -> Verdict {
    let n = 3000;
    let y: Vec<usize> = (0..n).map(|i| i % NUM_DIALECTS).collect();
    // μ = 1.9 puts each observer's argmax error near 20%
    let (a, b) = (observer(&y, 1.9, 1.0, 1), observer(&y, 1.9, 10.0, 2));
    let data = AlignedScores::from_matrices(vec!["a".into(), "b".into()], vec![a.clone(), b]).unwrap();
    let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % 3 == 0);
    let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
    let model = train_fusion(&data.rows(&train), &pick(&train), &FusionParams::default()).unwrap();
    let held = data.rows(&test);
    let fused = accuracy(&model.predict_all(&held).unwrap(), &pick(&test));
    let singles: Vec<f64> = (0..2).map(|s| accuracy(&held.system_predictions(s), &pick(&test))).collect();
    let best = singles.iter().cloned().fold(0.0, f64::max);

    let single = AlignedScores::from_matrices(vec!["a".into()], vec![a]).unwrap();
    let identity = FusionModel::from_parts(vec!["a".into()], vec![1.0], vec![0.0; NUM_DIALECTS]).unwrap();
    let preserved = identity.predict_all(&single).unwrap() == single.system_predictions(0);
    check(
        fused >= best + 2.0 && preserved,
        format!(
            "singles {:.2}/{:.2}, fused {fused:.2} (gain {:+.2}); identity fusion preserves argmax: {preserved}",
            singles[0],
            singles[1],
            fused - best
        ),
    )
}

// ---- 6. protocol shape -----------------------------------------------------

fn bundled_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn protocol_shape() -> Verdict {
    let y: Vec<usize> = (0..300).map(|i| i % NUM_DIALECTS).collect();
    let systems: Vec<DMatrix<f64>> = (0..7).map(|s| observer(&y, 0.5 + 0.3 * s as f64, 1.0, 20 + s)).collect();
    let data = AlignedScores::from_matrices((0..7).map(|s| format!("s{s}")).collect(), systems).unwrap();
    let rows = sweep_combinations(&data, &y, &Protocol::one_third_split(1), &FusionParams::default(), Averaging::Macro)
        .map_err(|e| e.to_string())?;
    let distinct: HashSet<&Vec<usize>> = rows.iter().map(|r| &r.subset).collect();
    if rows.len() != 127 || distinct.len() != 127 {
        return Err(format!("sweep of 7 gave {} rows ({} distinct)", rows.len(), distinct.len()));
    }

    let kf = kfold_eval(&data.systems(&[0]), &y, 10, 7, &FusionParams::default(), Averaging::Macro)
        .map_err(|e| e.to_string())?;
    let mut covered: Vec<usize> = kf.fold_indices.concat();
    covered.sort_unstable();
    let stratified = kf.fold_indices.iter().all(|f| {
        (0..NUM_DIALECTS).all(|c| f.iter().filter(|&&i| y[i] == c).count() == 6)
    });
    if kf.folds.len() != 10 || covered != (0..300).collect::<Vec<_>>() || !stratified {
        return Err("10-fold partition is not a stratified cover".into());
    }

    // submission: back-ends on train + ⅔ dev, fusion on the other ⅓ dev
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load_with_env(&bundled_config("submission.toml"), std::iter::empty()).map_err(|e| e.to_string())?;
    if cfg.protocol.kind != ProtocolKind::Submission {
        return Err("submission.toml does not select the submission protocol".into());
    }
    cfg.out_dir = dir.path().to_path_buf();
    let ws = Workspace::new(cfg);
    adi_cli::pipeline::synthesize(&ws).map_err(|e| e.to_string())?;
    let plan = Plan::build(&ws).map_err(|e| e.to_string())?;
    let train = ws.load_split(SplitTag::Train).unwrap().unwrap();
    let dev = ws.load_split(SplitTag::Dev).unwrap().unwrap();
    let test = ws.load_split(SplitTag::Test).unwrap().unwrap();
    let ids = |d: &LabeledDataset| d.labels().ids().map(str::to_string).collect::<HashSet<_>>();
    let (backend, fusion, report) = (ids(&plan.backend), ids(&plan.fusion_set().1), ids(&plan.report_set().1));
    let (train_ids, dev_ids) = (ids(&train), ids(&dev));
    let dev_in_backend: HashSet<_> = backend.intersection(&dev_ids).cloned().collect();
    let per_class_ok = (0..NUM_DIALECTS).all(|c| {
        let n_dev = dev.labels().counts()[c] as f64;
        let n_fus = plan.fusion_set().1.labels().counts()[c] as f64;
        (n_fus - n_dev / 3.0).abs() <= 1.0
    });
    let ok = train_ids.is_subset(&backend)
        && fusion.is_subset(&dev_ids)
        && fusion.is_disjoint(&backend)
        && dev_in_backend.union(&fusion).count() == dev_ids.len()
        && backend.len() == train_ids.len() + dev_in_backend.len()
        && report == ids(&test)
        && per_class_ok;
    check(
        ok,
        format!(
            "127 sweep rows; 10 stratified folds; submission back-end {} = {} train + {} dev, fusion {} dev, report {} test",
            backend.len(),
            train_ids.len(),
            dev_in_backend.len(),
            fusion.len(),
            report.len()
        ),
    )
}

// ---- 7. EM discipline ------------------------------------------------------

fn em_discipline() -> Verdict {
    let mut r = rng::seeded(10);
    let truth = [[0.0, 0.0], [10.0, 0.0]];
    let toy = DMatrix::from_fn(4000, 2, |i, c| {
        let z: f64 = StandardNormal.sample(&mut r);
        truth[i % 2][c] + z
    });
    let mut runs = 0;
    let mut worst_step = f64::INFINITY;
    let mut worst_mean: f64 = 0.0;
    for seed in 0..5 {
        for restarts in [1, 3] {
            let cfg = GmmConfig { mixtures: 2, iters: 100, seed, restarts, ..GmmConfig::default() };
            let (g, rep) = fit_gmm_em(&toy, &cfg).map_err(|e| e.to_string())?;
            runs += 1;
            worst_step = worst_step.min(rep.min_step());
            let mut means: Vec<[f64; 2]> = (0..2).map(|m| [g.means()[(m, 0)], g.means()[(m, 1)]]).collect();
            means.sort_by(|a, b| a[0].total_cmp(&b[0]));
            for (m, t) in means.iter().zip(&truth) {
                worst_mean = worst_mean.max((m[0] - t[0]).abs()).max((m[1] - t[1]).abs());
            }
        }
    }
    let synth = FrameSynth::default();
    let utts: Vec<(String, usize)> = (0..40).map(|i| (format!("u{i}"), i % NUM_DIALECTS)).collect();
    let (frames, _) = synth.generate(&utts, NUM_DIALECTS, 3).unwrap();
    let refs: Vec<&DMatrix<f64>> = frames.iter().map(|f| &f.frames).collect();
    let pooled = stack_frames(&refs).unwrap();
    for (seed, mixtures) in [(1, 8), (2, 8), (3, 4), (4, 16)] {
        let cfg = GmmConfig { mixtures, iters: 40, seed, restarts: 1, ..GmmConfig::default() };
        let (_, rep) = fit_gmm_em(&pooled, &cfg).map_err(|e| e.to_string())?;
        runs += 1;
        worst_step = worst_step.min(rep.min_step());
    }
    check(
        worst_step >= -1e-9 && worst_mean < 0.1,
        format!("{runs} EM runs, smallest log-likelihood step {worst_step:.2e}; 10σ pair means within {worst_mean:.3}"),
    )
}

// ---- 8. determinism --------------------------------------------------------

fn pipeline_once(out: &Path) -> Result<Outcome, String> {
    let cfg = bundled_config("synthetic.toml");
    let args = ["adi", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "pipeline"];
    run(Cli::parse_from(args)).map_err(|e| format!("{e:#}"))
}

fn metric_files(root: &Path) -> Vec<PathBuf> {
    let mut files = vec![root.join("report.tsv"), root.join("report.md"), root.join("fusion/sweep.tsv"), root.join("fusion/model.txt")];
    let mut scores: Vec<PathBuf> = std::fs::read_dir(root.join("scores")).unwrap().map(|e| e.unwrap().path()).collect();
    scores.sort();
    files.extend(scores);
    files
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (a.path().join("run"), b.path().join("run"));
    pipeline_once(&ra)?;
    pipeline_once(&rb)?;
    let files = metric_files(&ra);
    for f in &files {
        let rel = f.strip_prefix(&ra).unwrap();
        if std::fs::read(f).unwrap() != std::fs::read(rb.join(rel)).map_err(|e| e.to_string())? {
            return Err(format!("{} differs between runs", rel.display()));
        }
    }
    let manifest = |p: &Path| {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("run_manifest.json")).unwrap()).unwrap();
        (v["metrics"].clone(), v["artifacts"].clone())
    };
    check(
        manifest(&ra) == manifest(&rb),
        format!("{} metric and score files byte-identical across two pipeline runs", files.len()),
    )
}

// ---- 9. manifest -----------------------------------------------------------

fn manifest() -> Verdict {
    let m = Manifest::bundled();
    m.validate().map_err(|e| e.to_string())?;
    let total = |s| m.expected(s).map(|e| e.total_utterances()).unwrap_or(0);
    let got = [total(SplitTag::Train), total(SplitTag::Dev), total(SplitTag::Test)];
    check(got == [13_825, 1_524, 1_492], format!("train {} dev {} test {}", got[0], got[1], got[2]))
}

#[test]
fn acceptance() {
    let s = Duration::from_secs;
    let results = [
        criterion(1, "formula oracles", s(10), formula_oracles),
        criterion(2, "gradient checks", s(30), gradient_checks),
        criterion(3, "synthetic benchmark", s(120), benchmark),
        criterion(4, "semi-supervised GAN", s(600), semi_supervised_gan),
        criterion(5, "fusion gain", Duration::MAX, fusion_gain),
        criterion(6, "protocol shape", Duration::MAX, protocol_shape),
        criterion(7, "EM discipline", Duration::MAX, em_discipline),
        criterion(8, "determinism", Duration::MAX, determinism),
        criterion(9, "manifest", Duration::MAX, manifest),
    ];
    let failed: Vec<usize> = (1..=9).filter(|&i| !results[i - 1]).collect();
    println!("acceptance: {}/9 passed", 9 - failed.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
