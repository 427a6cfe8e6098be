use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use uosr::metrics::evaluate;
use uosr::outcomes::classify_outcomes;
use uosr::scorers::{max_probability, predictions_from_logits, LogitScorer, Temperature};
use uosr::synth::{gen_bundle, BundleSpec};
use uosr::tensorio::{load_labels, load_matrix, parse_matrix_csv, EvaluationBundle, Format};

fn uosr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uosr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Saves the demo bundle under `dir/bundle`.
fn demo_bundle(dir: &Path) -> (PathBuf, EvaluationBundle) {
    let b = gen_bundle(&BundleSpec::fewshot_demo(), 11).unwrap();
    let path = dir.join("bundle");
    b.save(&path).unwrap();
    (path, b)
}

#[test]
fn ingest_round_trips_csv() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("feats.csv");
    let text = "0.5,1.25,-3\n2,0,1e-3\n";
    std::fs::write(&csv, text).unwrap();
    let labels = dir.path().join("labels.csv");
    std::fs::write(&labels, "3\n1\n").unwrap();
    let out = dir.path().join("bin");
    let o = uosr(&["ingest", "--matrix", p(&csv), "--labels", p(&labels), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = load_matrix(out.join("feats.bin"), Format::Binary).unwrap();
    assert_eq!(m, parse_matrix_csv(text).unwrap());
    assert_eq!(load_labels(out.join("labels.bin"), Format::Binary).unwrap().as_slice(), &[3, 1]);

    // idempotent
    let first = std::fs::read(out.join("feats.bin")).unwrap();
    assert!(uosr(&["ingest", "--matrix", p(&csv), "--out", p(&out)]).status.success());
    assert_eq!(first, std::fs::read(out.join("feats.bin")).unwrap());
}

#[test]
fn ingest_missing_file_is_io_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.csv");
    let o = uosr(&["ingest", "--matrix", p(&missing), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.csv"));
}

#[test]
fn ingest_ragged_rows_report_line() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("ragged.csv");
    std::fs::write(&csv, "1,2,3\n4,5,6\n7,8\n").unwrap();
    let out = dir.path().join("out");
    let o = uosr(&["ingest", "--matrix", p(&csv), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(!out.join("ragged.bin").exists());
}

#[test]
fn eval_json_matches_in_process() {
    let dir = TempDir::new().unwrap();
    let (bundle_dir, b) = demo_bundle(dir.path());
    let out = dir.path().join("report.json");
    let o = uosr(&["eval", "--bundle", p(&bundle_dir), "--scorer", "msp", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();

    let logits = b.test_logits.as_ref().unwrap().vstack(b.ood_logits.as_ref().unwrap()).unwrap();
    let outcomes = classify_outcomes(&predictions_from_logits(b.test_logits.as_ref().unwrap()), &b.test_labels, b.n_ood()).unwrap();
    let t = Temperature::default();
    let conf = max_probability(&logits, t);
    let r = evaluate(&LogitScorer::Msp.score(&logits, t), &outcomes, Some(&conf)).unwrap();
    for (key, value) in [
        ("auroc_uosr", r.auroc_uosr),
        ("auroc_osr", r.auroc_osr),
        ("auroc_inc_inw", r.auroc_inc_inw),
        ("aurc_uosr", r.aurc_uosr),
        ("ece", r.ece),
        ("accuracy", r.accuracy),
    ] {
        assert_eq!(json[key].as_f64(), value, "{key}");
    }
    assert_eq!(json["n_ood"].as_u64(), Some(b.n_ood() as u64));
}

#[test]
fn eval_markdown_has_seven_columns() {
    let dir = TempDir::new().unwrap();
    let (bundle_dir, _) = demo_bundle(dir.path());
    let out = dir.path().join("r.md");
    let o = uosr(&["eval", "--bundle", p(&bundle_dir), "--format", "markdown", "--out", p(&out)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "| Method | Acc. | AURC | UOSR | OSR | InC/InW | InC/OoD | InW/OoD |");
    assert_eq!(lines[2].matches('|').count(), 9);
    assert!(lines[2].starts_with("| MSP |"));
}

#[test]
fn knn_without_train_features() {
    let dir = TempDir::new().unwrap();
    let (bundle_dir, _) = demo_bundle(dir.path());
    std::fs::remove_file(bundle_dir.join("train_feats.bin")).unwrap();
    let o = uosr(&["eval", "--bundle", p(&bundle_dir), "--scorer", "knn"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing train features"));
}

#[test]
fn individual_files_and_config_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let (bundle_dir, _) = demo_bundle(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "test_logits = {:?}\ntest_labels = {:?}\nood_logits = {:?}\nscorer = \"energy\"\nformat = \"csv\"\n",
            p(&bundle_dir.join("test_logits.bin")),
            p(&bundle_dir.join("test_labels.bin")),
            p(&bundle_dir.join("ood_logits.bin")),
        ),
    )
    .unwrap();
    let o = uosr(&["eval", "--config", p(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("eval scorer=energy "));
    assert!(stdout(&o).contains("method,Acc.,AURC,UOSR,OSR,InC/InW,InC/OoD,InW/OoD\nENERGY,"));

    let o = uosr(&["eval", "--config", p(&cfg), "--scorer", "entropy"]);
    assert!(stdout(&o).starts_with("eval scorer=entropy "));

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(uosr(&["eval", "--config", p(&cfg)]).status.code(), Some(2));
}

#[test]
fn missing_bundle_dir_is_io_error() {
    let dir = TempDir::new().unwrap();
    let o = uosr(&["eval", "--bundle", p(&dir.path().join("nope"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fewshot_is_deterministic_and_thread_independent() {
    let dir = TempDir::new().unwrap();
    let (bundle_dir, _) = demo_bundle(dir.path());
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = uosr(&[
            "--threads", threads, "fewshot", "--bundle", p(&bundle_dir), "--format", "json", "--seed", "5", "--out", p(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (std::fs::read(&out).unwrap(), stdout(&o))
    };
    let (a, sa) = run("a.json", "1");
    let (b, sb) = run("b.json", "1");
    let (c, _) = run("c.json", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(sa.replace("a.json", ""), sb.replace("b.json", ""));
    let doc: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(doc["mean"].as_array().unwrap().len(), 6);
    assert_eq!(doc["repeats"].as_array().unwrap().len(), doc["n_repeats"].as_u64().unwrap() as usize);
}

#[test]
fn fewshot_rows_and_shot_limits() {
    let dir = TempDir::new().unwrap();
    let (bundle_dir, _) = demo_bundle(dir.path());
    let out = dir.path().join("t.md");
    let o = uosr(&["fewshot", "--bundle", p(&bundle_dir), "--rows", "fsknns", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(2).unwrap().starts_with("| FS-KNNS |"));

    let o = uosr(&["fewshot", "--bundle", p(&bundle_dir), "--shots", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fewer than 1000 shots"));
    let o = uosr(&["fewshot", "--bundle", p(&bundle_dir), "--rows", "ssd"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_grid() {
    let dir = TempDir::new().unwrap();
    let (bundle_dir, _) = demo_bundle(dir.path());
    let out = dir.path().join("grid.csv");
    let o = uosr(&["sweep", "--bundle", p(&bundle_dir), "--ks", "3,1", "--betas", "0,1", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,alpha,beta,uosr_auroc,osr_auroc,inc_inw,inc_ood,aurc");
    let keys: Vec<String> = lines[1..].iter().map(|l| l.split(',').take(3).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys, ["1,50,0", "1,50,1", "3,50,0", "3,50,1"]);
}

#[test]
fn synth_outputs_and_determinism() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(
        &cfg,
        "seed = 2\ncalibration = true\n[bundle]\npreset = \"fewshot-demo\"\n\
         [scores.inc]\nn = 30\ndist = { kind = \"point\", v = 0.1 }\n\
         [scores.inw]\nn = 20\ndist = { kind = \"point\", v = 0.5 }\n\
         [scores.ood]\nn = 10\ndist = { kind = \"point\", v = 0.9 }\n",
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(uosr(&["synth", "--config", p(&cfg), "--out", p(&a)]).status.success());
    assert!(uosr(&["synth", "--config", p(&cfg), "--out", p(&b)]).status.success());

    let calib: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| format!("calibration/{s}.bin")).collect();
    let mut files: Vec<String> = calib.clone();
    files.push("calibration/manifest.json".into());
    for f in ["train_feats", "train_labels", "test_feats", "test_logits", "test_labels", "ood_feats", "ood_logits", "ood_class_ids"] {
        files.push(format!("bundle/{f}.bin"));
    }
    files.extend(["scores.bin".into(), "outcomes.bin".into()]);
    for f in &files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("calibration/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.as_array().unwrap().len(), 5);

    // histogram of the point-mass scores
    let h = dir.path().join("h.csv");
    let o = uosr(&["hist", "--scores", p(&a.join("scores.bin")), "--outcomes", p(&a.join("outcomes.bin")), "--bins", "8", "--out", p(&h)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&h).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 8);
    for col in 3..6 {
        assert_eq!(rows.iter().filter(|r| r[col] != "0").count(), 1);
    }
    assert_eq!(rows[0][1].parse::<f32>().unwrap(), 0.1);
    assert_eq!(rows[7][2].parse::<f32>().unwrap(), 0.9);

    let o = uosr(&["hist", "--scores", p(&a.join("scores.bin")), "--outcomes", p(&a.join("outcomes.bin")), "--bins", "1", "--out", p(&h)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&h).unwrap().lines().nth(1).unwrap().split(',').skip(3).collect::<Vec<_>>(), ["30", "20", "10"]);
}

#[test]
fn synth_rejects_bad_spec() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[scores.inc]\nn = 3\ndist = { kind = \"gaussian\", mu = 0.0, sigma = -1.0 }\n[scores.inw]\nn = 1\ndist = { kind = \"point\", v = 0.0 }\n[scores.ood]\nn = 1\ndist = { kind = \"point\", v = 0.0 }\n").unwrap();
    let out = dir.path().join("out");
    let o = uosr(&["synth", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn eval_stdout_is_stable() {
    let dir = TempDir::new().unwrap();
    let (bundle_dir, _) = demo_bundle(dir.path());
    let a = uosr(&["eval", "--bundle", p(&bundle_dir), "--format", "csv"]);
    let b = uosr(&["--threads", "2", "eval", "--bundle", p(&bundle_dir), "--format", "csv"]);
    assert_eq!(stdout(&a), stdout(&b));
    let first = stdout(&a).lines().next().unwrap().to_string();
    assert!(first.starts_with("eval scorer=msp n_inc="), "{first}");
}
