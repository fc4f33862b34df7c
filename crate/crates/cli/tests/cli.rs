use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgnn"))
        .args(args)
        .output()
        .expect("run hgnn")
}

fn ok(args: &[&str]) -> String {
    let out = hgnn(args);
    assert!(
        out.status.success(),
        "hgnn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(args: &[&str]) -> i32 {
    hgnn(args).status.code().expect("exit code")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Small synthetic dataset plus its precomputed directory.
fn prepared(root: &Path) -> (PathBuf, PathBuf) {
    let data = root.join("data");
    let pre = root.join("pre");
    ok(&["--seed", "3", "synth", "--out", &s(&data), "--targets", "200"]);
    ok(&["precompute", "--data", &s(&data), "--out", &s(&pre)]);
    (data, pre)
}

fn quick_train(pre: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec![
        "train", "--precomputed", &s(pre), "--out", &s(out), "--max-epochs", "15", "--patience", "5",
        "--hidden", "16",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    args.extend(extra.iter().map(|a| a.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs)
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["train", "--no-such-flag"]), 1);
    assert_eq!(code(&["bench", "--sweep", "nodes=1x"]), 1);
    assert_eq!(code(&["bench", "--sweep", "edges=1x,2x"]), 1);
    assert_eq!(code(&["--threads", "0", "synth", "--out", "/nonexistent/x"]), 1);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&["train", "--precomputed", &s(dir.path()), "--set", "nonsense=1"]),
        1
    );
    assert_eq!(
        code(&["train", "--precomputed", &s(dir.path()), "--lr", "-1"]),
        1
    );
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    assert_eq!(code(&["precompute", "--data", &s(&missing), "--out", &s(&dir.path().join("o"))]), 2);
    assert_eq!(code(&["train", "--precomputed", &s(&missing)]), 2);
}

#[test]
fn train_report_and_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (_, pre) = prepared(dir.path());
    let report = dir.path().join("run/report.json");
    quick_train(&pre, &report, &[]);
    let r = read_json(&report);
    for key in [
        "epochs", "best_epoch", "val_micro_f1", "val_macro_f1", "test_micro_f1", "test_macro_f1",
        "test_loss", "epoch_ms_mean", "precompute_ms", "metapaths", "num_parameters", "history",
    ] {
        assert!(r.get(key).is_some(), "report lacks {key}");
    }
    let ckpt = dir.path().join("run/model.ckpt");
    assert!(ckpt.exists());

    let metrics = dir.path().join("metrics.json");
    ok(&["eval", "--precomputed", &s(&pre), "--checkpoint", &s(&ckpt), "--out", &s(&metrics)]);
    let m = read_json(&metrics);
    for (a, b) in [("micro_f1", "test_micro_f1"), ("macro_f1", "test_macro_f1"), ("loss", "test_loss")] {
        let got = m[a].as_f64().unwrap();
        let want = r[b].as_f64().unwrap();
        assert!((got - want).abs() <= 1e-12, "{a}: {got} vs {want}");
    }
}

#[test]
fn f32_checkpoint_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let (_, pre) = prepared(dir.path());
    let report = dir.path().join("report.json");
    quick_train(&pre, &report, &["--precision", "f32"]);
    let ckpt = dir.path().join("model.ckpt");
    let out = ok(&["eval", "--precomputed", &s(&pre), "--checkpoint", &s(&ckpt), "--split", "val"]);
    let m: Value = serde_json::from_str(&out).unwrap();
    let want = read_json(&report)["val_micro_f1"].as_f64().unwrap();
    assert!((m["micro_f1"].as_f64().unwrap() - want).abs() <= 1e-6);
}

#[test]
fn eval_refuses_checkpoint_from_other_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (data, pre) = prepared(dir.path());
    let report = dir.path().join("report.json");
    quick_train(&pre, &report, &[]);
    let narrow = dir.path().join("narrow");
    ok(&["precompute", "--data", &s(&data), "--max-hop", "1", "--label-max-hop", "0", "--out", &s(&narrow)]);
    let ckpt = dir.path().join("model.ckpt");
    let out = hgnn(&["eval", "--precomputed", &s(&narrow), "--checkpoint", &s(&ckpt)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metapath"));
}

#[test]
fn train_refuses_hops_beyond_manifest_and_stale_hash() {
    let dir = tempfile::tempdir().unwrap();
    let (_, pre) = prepared(dir.path());
    let out = s(&dir.path().join("r.json"));
    assert_eq!(code(&["train", "--precomputed", &s(&pre), "--out", &out, "--max-hop-features", "3"]), 2);
    assert_eq!(
        code(&["train", "--precomputed", &s(&pre), "--out", &out, "--set", "graph_hash=deadbeef"]),
        2
    );
    let manifest = read_json(&pre.join("manifest.json"));
    let hash = manifest["graph_hash"].as_str().unwrap();
    quick_train(&pre, &dir.path().join("r.json"), &["--set", &format!("graph_hash={hash}")]);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let (_, pre) = prepared(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# tiny run\nhidden = 12\nmax_epochs = 4\npatience = 4\nfusion = weighted_sum\n").unwrap();
    let report = dir.path().join("report.json");
    ok(&["train", "--precomputed", &s(&pre), "--config", &s(&cfg), "--out", &s(&report), "--max-epochs", "3", "--patience", "3"]);
    let r = read_json(&report);
    assert_eq!(r["epochs"].as_u64(), Some(3));

    fs::write(&cfg, "hidden = twelve\n").unwrap();
    assert_eq!(code(&["train", "--precomputed", &s(&pre), "--config", &s(&cfg), "--out", &s(&report)]), 2);
}

#[test]
fn repeats_report_median() {
    let dir = tempfile::tempdir().unwrap();
    let (_, pre) = prepared(dir.path());
    let report = dir.path().join("report.json");
    quick_train(&pre, &report, &["--repeats", "3"]);
    let r = read_json(&report);
    let runs = r["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    let mut f: Vec<f64> = runs.iter().map(|x| x["test_micro_f1"].as_f64().unwrap()).collect();
    f.sort_by(f64::total_cmp);
    assert_eq!(r["median_test_micro_f1"].as_f64(), Some(f[1]));
}

#[test]
fn dblp_shaped_manifest_lists_expected_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dblp.json");
    let t = |n: &str, c: usize, d: usize| serde_json::json!({"name": n, "count": c, "feature_dim": d, "signal": 1.0});
    let r = |n: &str, a: &str, b: &str| serde_json::json!({"name": n, "src": a, "dst": b, "avg_degree": 2.0});
    let synth = serde_json::json!({
        "node_types": [t("A", 60, 4), t("P", 80, 4), t("T", 20, 3), t("V", 5, 2)],
        "relations": [r("ap", "A", "P"), r("pt", "P", "T"), r("pv", "P", "V")],
        "target_type": "A",
        "num_classes": 4,
        "homophily": 0.8,
        "edge_scale": 1.0,
        "train_frac": 0.5,
        "val_frac": 0.2,
    });
    fs::write(&cfg, synth.to_string()).unwrap();
    let data = dir.path().join("data");
    let pre = dir.path().join("pre");
    ok(&["synth", "--out", &s(&data), "--config", &s(&cfg)]);
    ok(&["precompute", "--data", &s(&data), "--max-hop", "2", "--label-max-hop", "4", "--out", &s(&pre)]);
    let m = read_json(&pre.join("manifest.json"));
    let mut feature = Vec::new();
    let mut label = Vec::new();
    for e in m["metapaths"].as_array().unwrap() {
        let name = e["name"].as_str().unwrap().to_string();
        match e["kind"].as_str().unwrap() {
            "feature" => feature.push(name),
            _ => label.push(name),
        }
        assert!(pre.join(e["file"].as_str().unwrap()).exists());
    }
    assert_eq!(feature, ["A", "AP", "APA", "APT", "APV"]);
    assert_eq!(label.len(), 4);
}

#[test]
fn precompute_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (data, pre) = prepared(dir.path());
    let snapshot = |d: &Path| {
        let mut v: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.clone(), fs::read(&p).unwrap()))
            .collect();
        v.sort();
        v
    };
    let first = snapshot(&pre);
    ok(&["--threads", "1", "precompute", "--data", &s(&data), "--out", &s(&pre), "--no-memo"]);
    assert_eq!(first, snapshot(&pre));
}

#[test]
fn small_bench_totals_add_up() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.json");
    ok(&[
        "bench", "--sweep", "edges=1x,2x,3x", "--targets", "150", "--epochs", "2", "--warmup", "1",
        "--hidden", "8", "--precompute-repeats", "1", "--no-k-sweep", "--out", &s(&out),
    ]);
    let b = read_json(&out);
    assert_eq!(b["points"].as_array().unwrap().len(), 3);
    let parts = ["generate_ms", "precompute_ms", "train_ms"]
        .iter()
        .map(|k| b[k].as_f64().unwrap())
        .sum::<f64>();
    assert!((b["total_ms"].as_f64().unwrap() - parts).abs() <= 1e-9 * parts.max(1.0));
}
