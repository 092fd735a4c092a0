use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn adi(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_adi"));
    c.args(args).env("RUST_LOG", "warn");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run_manifest.json")).unwrap()).unwrap()
}

#[test]
fn bundled_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = config("synthetic.toml");
    let (cfg, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());

    let o = adi(&["--config", cfg, "--out-dir", out_s, "pipeline"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scores: Vec<_> = fs::read_dir(out.join("scores")).unwrap().collect();
    assert_eq!(scores.len(), 5);
    let sweep = fs::read_to_string(out.join("fusion/sweep.tsv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 31);
    let report = fs::read_to_string(out.join("report.tsv")).unwrap();
    assert_eq!(report, String::from_utf8(o.stdout.clone()).unwrap());
    assert_eq!(report.lines().count(), 1 + 5 + 1);
    assert!(out.join("report.md").is_file());

    let m = manifest(&out);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["commands"], serde_json::json!(["pipeline"]));
    assert!(m["artifacts"]["fusion/sweep.tsv"].is_string());
    assert!(m["metrics"]["gb-ivec"]["acc"].is_number());

    // clean slate
    let again = adi(&["--config", cfg, "--out-dir", out_s, "pipeline"], &[]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("not empty"));

    // accuracy gate: every row clears 0, no row clears 100
    let ok = adi(&["--config", cfg, "--out-dir", out_s, "--min-acc", "0", "evaluate"], &[]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let low = adi(&["--config", cfg, "--out-dir", out_s, "--min-acc", "100", "evaluate"], &[]);
    assert_eq!(low.status.code(), Some(2));
    assert!(stderr(&low).contains("below"));

    // file mode over the run's score files
    let s = |id: &str| out.join(format!("scores/{id}.dev.tsv")).display().to_string();
    let lab = out.join("data/dev.lab").display().to_string();
    let o = adi(&["fuse-sweep", "--scores", &s("gb-ivec"), "--scores", &s("svm-words"), "--labels", &lab], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1 + 3);
    let model = tmp.path().join("fusion.txt");
    let o = adi(
        &["fuse-train", "--scores", &s("gb-ivec"), "--labels", &lab, "--model-out", model.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = adi(
        &["evaluate", "--scores", &s("gb-ivec"), "--labels", &lab, "--model", model.to_str().unwrap()],
        &[],
    );
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("system\tacc"));
}

#[test]
fn stepwise_commands_match_pipeline_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("steps");
    let cfg = config("synthetic.toml");
    let base = ["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    for step in [
        &["synth"][..],
        &["ubnf-train"],
        &["ubnf-extract"],
        &["train-gb"],
        &["train-gan"],
        &["train-text", "--system", "svm-words", "--system", "svm-bigram-stem"],
        &["score"],
        &["fuse-train"],
        &["fuse-sweep"],
        &["project-dump", "--split", "dev"],
    ] {
        let args: Vec<&str> = base.iter().chain(step).copied().collect();
        let o = adi(&args, &[]);
        assert!(o.status.success(), "{step:?}: {}", stderr(&o));
    }
    let proj = fs::read_to_string(out.join("projection.dev.tsv")).unwrap();
    assert!(proj.starts_with("utt_id\tlabel\tld1\tld2\n"));
    assert_eq!(proj.lines().count(), 1 + 5 * 120);
    let m = manifest(&out);
    assert_eq!(m["commands"].as_array().unwrap().len(), 10);
    assert!(m["artifacts"]["ubnf/bnf.model"].is_string());

    let wrong = adi(&[&base[..], &["train-gb", "--system", "svm-words"]].concat(), &[]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn environment_overrides_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("synthetic.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = adi(&["--config", cfg.to_str().unwrap(), "--out-dir", a.to_str().unwrap(), "synth"], &[("ADI_SEED", "7")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(manifest(&a)["seed"], 7);
    let o = adi(
        &["--config", cfg.to_str().unwrap(), "--out-dir", b.to_str().unwrap(), "--seed", "9", "synth"],
        &[("ADI_SEED", "7"), ("ADI_DATA__SYNTHETIC__DEV_PER_CLASS", "10")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&b);
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["data"]["synthetic"]["dev_per_class"], 10);
    assert_eq!(fs::read_to_string(b.join("data/dev.lab")).unwrap().lines().count(), 50);
    assert_ne!(manifest(&a)["config_hash"], m["config_hash"]);

    let bad = adi(&["--config", cfg.to_str().unwrap(), "synth"], &[("ADI_EVAL__AVG", "median")]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("median"));
    let unknown = adi(&["--config", cfg.to_str().unwrap(), "synth"], &[("ADI_BOGUS", "1")]);
    assert_eq!(unknown.status.code(), Some(1));
    let missing = adi(&["synth"], &[]);
    assert!(stderr(&missing).contains("--config"));
}

#[test]
fn manifest_validation() {
    let o = adi(&["validate-manifest"], &[]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("train\t13825 utterances"));
    assert!(text.contains("dev\t1524 utterances"));
    assert!(text.contains("test\t1492 utterances"));

    let tmp = tempfile::tempdir().unwrap();
    let labels = tmp.path().join("few.lab");
    fs::write(&labels, "u1\tEGY\nu2\tMSA\n").unwrap();
    let o = adi(&["validate-manifest", "--labels", labels.to_str().unwrap(), "--split", "dev"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("differ"));
}
