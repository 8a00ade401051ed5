//! End-to-end runs of the `compograph` binary on small graphs.

use compograph::model::Checkpoint;
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_compograph"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn compograph")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Two 8-cliques named `a0..a7` and `b0..b7` joined by one bridge.
fn two_cliques(dir: &Path) -> (PathBuf, PathBuf) {
    let mut edges = String::new();
    let mut labels = String::new();
    for side in ["a", "b"] {
        for i in 0..8 {
            labels.push_str(&format!("{side}{i}\t{side}\n"));
            for j in (i + 1)..8 {
                edges.push_str(&format!("{side}{i} {side}{j}\n"));
            }
        }
    }
    edges.push_str("a0 b0\n");
    let (e, l) = (dir.join("edges.txt"), dir.join("labels.tsv"));
    fs::write(&e, edges).unwrap();
    fs::write(&l, labels).unwrap();
    (e, l)
}

#[test]
fn train_writes_a_reloadable_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let (edges, _) = two_cliques(tmp.path());
    let out = tmp.path().join("run");
    ok(&["train", "--edges", s(&edges), "--K", "4", "--iters", "200", "--basis", "learned", "--out", s(&out)]);

    let ckpt = Checkpoint::load(out.join("checkpoint.json")).unwrap();
    assert_eq!((ckpt.num_nodes, ckpt.k, ckpt.iterations), (16, 4, 200));
    let state = ckpt.to_state().unwrap();
    let again = Checkpoint::from_state(&state, ckpt.seed, ckpt.iterations).to_state().unwrap();
    assert_eq!(state, again);

    let report = read_json(out.join("report.json"));
    assert_eq!(report["task"], "training");
    assert!(report["metrics"]["entropy_mean"].as_f64().is_some());
    let nodes = fs::read_to_string(out.join("nodes.tsv")).unwrap();
    assert_eq!(nodes.lines().count(), 17);
}

#[test]
fn missing_input_is_a_data_error_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.txt");
    let out = run(&["train", "--edges", s(&missing), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));
}

#[test]
fn k_below_two_is_rejected_before_writing() {
    let tmp = TempDir::new().unwrap();
    let (edges, _) = two_cliques(tmp.path());
    let out_dir = tmp.path().join("o");
    let out = run(&["train", "--edges", s(&edges), "--K", "1", "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
}

#[test]
fn bad_flag_exits_with_one() {
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn linkpred_reports_per_seed_metrics() {
    let tmp = TempDir::new().unwrap();
    let (edges, _) = two_cliques(tmp.path());
    let out = tmp.path().join("lp");
    ok(&["linkpred", "--edges", s(&edges), "--dims", "3", "--seeds", "5", "--iters", "300", "--out", s(&out)]);
    let report = read_json(out.join("report.json"));
    assert_eq!(report["task"], "link_prediction");
    let auc = report["metrics"]["auc_roc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert_eq!(report["per_seed"].as_array().unwrap().len(), 5);
    for seed in 0..5 {
        assert!(out.join(format!("checkpoint_d3_seed{seed}.json")).exists());
    }
}

#[test]
fn nodeclass_separates_two_cliques_and_exports_features() {
    let tmp = TempDir::new().unwrap();
    let (edges, labels) = two_cliques(tmp.path());
    let out = tmp.path().join("nc");
    ok(&[
        "nodeclass", "--edges", s(&edges), "--labels", s(&labels), "--dims", "3", "--iters", "1000",
        "--export-features", "--export-pair-features", "--out", s(&out),
    ]);
    let report = read_json(out.join("report.json"));
    assert!(report["metrics"]["micro_f1"].as_f64().unwrap() > 0.9, "{report}");

    let features = fs::read_to_string(out.join("features_d3_seed0.csv")).unwrap();
    let rows: Vec<&str> = features.lines().collect();
    assert_eq!(rows.len(), 17);
    assert!(rows.iter().all(|r| r.split(',').count() == 4));
    let pairs = fs::read_to_string(out.join("pair_features_d3_seed0.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 1 + 57);
}

#[test]
fn subcomp_records_every_mask() {
    let tmp = TempDir::new().unwrap();
    let (edges, _) = two_cliques(tmp.path());
    let trained = tmp.path().join("t");
    // Checkpoint from the residual of the same split the subcomp command rebuilds.
    ok(&["subcomp", "--edges", s(&edges), "--K", "65", "--iters", "50", "--keep", "65", "--masks", "1",
        "--calibration", "none", "--out", s(&trained)]);
    let out = tmp.path().join("sc");
    ok(&[
        "subcomp", "--edges", s(&edges), "--checkpoint", s(&trained.join("checkpoint.json")), "--keep", "32",
        "--masks", "50", "--out", s(&out),
    ]);
    let report = read_json(out.join("report.json"));
    let groups = report["groups"].as_array().unwrap();
    let labels: Vec<&str> = groups.iter().map(|g| g["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["k=32", "k=32,calibrated"]);
    for g in groups {
        assert_eq!(g["per_seed"].as_array().unwrap().len(), 50);
        assert!(g["retention"]["auc_roc"].as_f64().is_some());
    }
}

#[test]
fn synth_writes_recovery_scores() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("syn");
    ok(&["synth", "--n", "120", "--K", "3", "--degree", "8", "--iters", "300", "--out", s(&out)]);
    let rec = read_json(out.join("recovery.json"));
    let l1 = rec["l1"].as_f64().unwrap();
    assert!((0.0..=2.0).contains(&l1));
    assert_eq!(fs::read_to_string(out.join("truth.csv")).unwrap().lines().count(), 121);
    assert!(out.join("edges.tsv").exists());
    assert_eq!(read_json(out.join("report.json"))["task"], "recovery");
}

#[test]
fn probe_writes_both_bases() {
    let tmp = TempDir::new().unwrap();
    let (edges, labels) = two_cliques(tmp.path());
    let trained = tmp.path().join("t");
    ok(&["train", "--edges", s(&edges), "--K", "4", "--iters", "300", "--out", s(&trained)]);
    let out = tmp.path().join("p");
    ok(&[
        "probe", "--checkpoint", s(&trained.join("checkpoint.json")), "--edges", s(&edges), "--labels", s(&labels),
        "--bins", "4", "--out", s(&out),
    ]);
    for f in ["loadings.csv", "loadings_varimax.csv", "coords_by_label.csv", "coords_by_label_varimax.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report = read_json(out.join("report.json"));
    assert_eq!(report["task"], "balance_probe");
    assert_eq!(report["groups"][0]["label"], "varimax");
}

#[test]
fn trajectory_passes_through_the_node() {
    let tmp = TempDir::new().unwrap();
    let (edges, _) = two_cliques(tmp.path());
    let trained = tmp.path().join("t");
    ok(&["train", "--edges", s(&edges), "--K", "4", "--iters", "300", "--out", s(&trained)]);
    let ckpt_path = trained.join("checkpoint.json");
    let out = tmp.path().join("tr");
    ok(&["trajectory", "--checkpoint", s(&ckpt_path), "--node", "3", "--a", "0", "--b", "2", "--out", s(&out)]);

    let mut reader = csv::Reader::from_path(out.join("trajectory.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 41);
    let mid = &rows[20];
    assert_eq!(mid[0].parse::<f64>().unwrap(), 0.0);
    let z = Checkpoint::load(&ckpt_path).unwrap().to_state().unwrap().composition(3);
    for (c, want) in z.values().iter().enumerate() {
        let col = header.iter().position(|h| h == format!("z{c}")).unwrap();
        let got: f64 = mid[col].parse().unwrap();
        assert!((got - want).abs() < 1e-12, "z{c}: {got} vs {want}");
    }
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let tmp = TempDir::new().unwrap();
    let (edges, _) = two_cliques(tmp.path());
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "[train]\nK = 5\niterations = 40\nseed = 9\n").unwrap();

    let a = tmp.path().join("a");
    ok(&["--config", s(&cfg), "train", "--edges", s(&edges), "--out", s(&a)]);
    let ck = Checkpoint::load(a.join("checkpoint.json")).unwrap();
    assert_eq!((ck.k, ck.iterations, ck.seed), (5, 40, 9));

    let b = tmp.path().join("b");
    ok(&["--config", s(&cfg), "train", "--edges", s(&edges), "--K", "3", "--out", s(&b)]);
    let ck = Checkpoint::load(b.join("checkpoint.json")).unwrap();
    assert_eq!((ck.k, ck.iterations, ck.seed), (3, 40, 9));

    fs::write(&cfg, "[train]\nunknown = 1\n").unwrap();
    let out = run(&["--config", s(&cfg), "train", "--edges", s(&edges), "--out", s(&tmp.path().join("c"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rank_deficient_basis_is_a_numeric_failure() {
    let tmp = TempDir::new().unwrap();
    let (edges, _) = two_cliques(tmp.path());
    let trained = tmp.path().join("t");
    ok(&["train", "--edges", s(&edges), "--K", "4", "--iters", "20", "--basis", "learned", "--out", s(&trained)]);
    let path = trained.join("checkpoint.json");
    let mut ckpt = Checkpoint::load(&path).unwrap();
    ckpt.basis_params = Some(vec![0.0; 12]);
    ckpt.save(&path).unwrap();
    let out = run(&["trajectory", "--checkpoint", s(&path), "--node", "0", "--a", "0", "--b", "1", "--out", s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (edges, _) = two_cliques(tmp.path());
    let dirs: Vec<PathBuf> = (0..2).map(|r| tmp.path().join(format!("r{r}"))).collect();
    for d in &dirs {
        ok(&["linkpred", "--edges", s(&edges), "--dims", "2", "--seeds", "2", "--iters", "200", "--out", s(d)]);
    }
    for f in ["report.json", "checkpoint_d2_seed0.json", "checkpoint_d2_seed1.json", "nodes.tsv"] {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
}
