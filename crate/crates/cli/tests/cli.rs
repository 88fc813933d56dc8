use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use h2ncm_core::data::gen_synthetic;
use h2ncm_core::losses::{classify, score};
use h2ncm_core::{HybridConfig, ScoreFn, Standardizer, SyntheticConfig, TrainedModel, Variant};
use serde_json::Value;

fn h2ncm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_h2ncm")).args(args).env_remove("H2NCM_SEED").output().expect("spawn h2ncm")
}

fn ok(args: &[&str]) -> Output {
    let o = h2ncm(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn code(args: &[&str]) -> i32 {
    h2ncm(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// A small shared synthetic dataset.
fn data() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    &DIR.get_or_init(|| {
        let t = tempfile::tempdir().unwrap();
        let d = t.path().join("data");
        ok(&["gen-synthetic", "--out", s(&d), "--train", "24", "--val", "8", "--test", "8", "--seed", "7"]);
        (t, d)
    })
    .1
}

fn small_grid(dir: &Path) -> PathBuf {
    let p = dir.join("grid.json");
    let point = |n: usize, d: usize| format!(r#"{{"n":{n},"m":8,"d":{d},"a":0.0}}"#);
    let body = format!(r#"{{"mnode":[{}],"uva":[{}],"lp":[{}]}}"#, point(1, 0), point(0, 0), point(1, 4));
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn usage_errors_exit_one() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("d");
    assert_eq!(code(&["gen-synthetic", "--out", s(&out), "--train", "0"]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["train", "--model", "nope", "--data", s(data()), "--out", s(&out)]), 1);
    assert_eq!(code(&["train", "--model", "mnode", "--alpha", "1.5", "--data", s(data()), "--out", s(&out)]), 1);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn data_errors_exit_two() {
    let t = tempfile::tempdir().unwrap();
    let missing = t.path().join("missing");
    assert_eq!(code(&["train", "--model", "uva", "--data", s(&missing), "--out", s(&t.path().join("m.json"))]), 2);
}

#[test]
fn generation_is_seeded() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for d in [&a, &b] {
        ok(&["gen-synthetic", "--out", s(d), "--train", "5", "--val", "3", "--test", "3", "--seed", "11"]);
    }
    for name in ["train.episodes.jsonl", "val.interventions.jsonl", "test.episodes.jsonl"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let c = t.path().join("c");
    ok(&["gen-synthetic", "--out", s(&c), "--train", "5", "--val", "3", "--test", "3", "--seed", "12"]);
    assert_ne!(
        std::fs::read(a.join("train.episodes.jsonl")).unwrap(),
        std::fs::read(c.join("train.episodes.jsonl")).unwrap()
    );
    assert!(a.join("run_manifest.json").exists());
}

#[test]
fn train_and_replay_are_bit_exact() {
    let t = tempfile::tempdir().unwrap();
    let m = t.path().join("m.json");
    ok(&["train", "--model", "mnode", "--data", s(data()), "--epochs", "3", "--out", s(&m)]);
    let metrics = read_json(&t.path().join("m.metrics.json"));
    assert_eq!(metrics["causal_evals"], 0);
    assert_eq!(std::fs::read_to_string(t.path().join("m.history.csv")).unwrap().lines().count(), 4);
    let first = std::fs::read(&m).unwrap();
    ok(&["replay", "--manifest", s(&t.path().join("m.manifest.json"))]);
    assert_eq!(std::fs::read(&m).unwrap(), first);

    let hybrid = t.path().join("h.json");
    ok(&["train", "--model", "mnode", "--alpha", "0.5", "--data", s(data()), "--epochs", "2", "--out", s(&hybrid)]);
    assert!(read_json(&t.path().join("h.metrics.json"))["causal_evals"].as_u64().unwrap() > 0);
}

#[test]
fn replay_rejects_changed_inputs() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    ok(&["gen-synthetic", "--out", s(&d), "--train", "6", "--val", "3", "--test", "3"]);
    let m = t.path().join("m.json");
    ok(&["train", "--model", "uva", "--data", s(&d), "--epochs", "1", "--out", s(&m)]);
    std::fs::write(d.join("train.episodes.jsonl"), "").unwrap();
    assert_ne!(code(&["replay", "--manifest", s(&t.path().join("m.manifest.json"))]), 0);
}

#[test]
fn cv_writes_one_report_per_alpha_and_report_summarizes() {
    let t = tempfile::tempdir().unwrap();
    let runs = t.path().join("runs");
    let grid = small_grid(t.path());
    let alphas = "0,0.0001,0.001,0.01,0.1,1";
    let args = [
        "cv",
        "--model",
        "uva,lp",
        "--alphas",
        alphas,
        "--data",
        s(data()),
        "--grid",
        s(&grid),
        "--out",
        s(&runs),
        "--repeats",
        "1",
        "--outer",
        "2",
        "--inner",
        "2",
        "--epochs",
        "1",
    ];
    ok(&args);
    for model in ["uva", "lp"] {
        for a in alphas.split(',') {
            let dir = runs.join(model).join(format!("alpha_{}", a.parse::<f64>().unwrap()));
            let r = read_json(&dir.join("report.json"));
            assert_eq!(r["folds"].as_array().unwrap().len(), 2, "{}", dir.display());
        }
    }
    // a second invocation finds every report and does no work
    let before = std::fs::read(runs.join("uva/alpha_0/report.json")).unwrap();
    ok(&args);
    assert_eq!(std::fs::read(runs.join("uva/alpha_0/report.json")).unwrap(), before);

    ok(&["report", "--runs", s(&runs), "--format", "svg"]);
    let csv = std::fs::read_to_string(runs.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 6);
    assert!(csv.starts_with("model,alpha,folds,rmse_mean"));
    let svg = std::fs::read_to_string(runs.join("class_error.svg")).unwrap();
    assert!(svg.contains("class=\"reference\""));
    assert!(runs.join("rmse.svg").exists());
}

#[test]
fn report_without_runs_fails() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&["report", "--runs", s(t.path())]), 1);
}

#[test]
fn counterfactual_outputs_one_series_per_intervention() {
    let t = tempfile::tempdir().unwrap();
    let m = t.path().join("m.json");
    ok(&["train", "--model", "uva", "--data", s(data()), "--epochs", "1", "--out", s(&m)]);
    let sets = std::fs::read_to_string(data().join("test.interventions.jsonl")).unwrap();
    let mut seen_null = false;
    for line in sets.lines().skip(1) {
        let set: Value = serde_json::from_str(line).unwrap();
        let id = set["episode_id"].as_str().unwrap();
        let out = t.path().join(format!("{id}.json"));
        ok(&[
            "counterfactual",
            "--model",
            s(&m),
            "--episode",
            id,
            "--interventions",
            s(&data().join("test.interventions.jsonl")),
            "--data",
            s(data()),
            "--out",
            s(&out),
        ]);
        let cf = read_json(&out);
        let k = set["variants"].as_array().unwrap().len();
        let trajs = cf["trajectories"].as_array().unwrap();
        assert_eq!(trajs.len(), k);
        assert!(trajs.iter().all(|t| t.as_array().unwrap().len() == 10));
        assert_eq!(cf["scores"].as_array().unwrap().len(), k);
        assert!(cf["selected"].as_u64().unwrap() < k as u64);
        // the unmodified variant reproduces the factual prediction
        let episodes = std::fs::read_to_string(data().join("test.episodes.jsonl")).unwrap();
        let ep: Value = episodes
            .lines()
            .skip(1)
            .map(|l| serde_json::from_str::<Value>(l).unwrap())
            .find(|e| e["id"] == id)
            .unwrap();
        for (v, tr) in set["variants"].as_array().unwrap().iter().zip(trajs) {
            if *v == ep["future_x"] {
                assert_eq!(*tr, cf["prediction"]);
                seen_null = true;
            }
        }
    }
    assert!(seen_null, "no set contained the factual inputs");
}

#[test]
fn ground_truth_model_picks_oracle_labels() {
    let t = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig { n_train: 1, n_val: 1, n_test: 100, seed: 99, ..SyntheticConfig::default() };
    let d = gen_synthetic(&cfg).unwrap();
    let mut hc = HybridConfig::synthetic(Variant::Mechanistic);
    hc.dt = cfg.dt;
    let params = hc.layout().unwrap();
    let truth = TrainedModel::new(hc, params, Standardizer::identity(3)).unwrap();
    let path = t.path().join("truth.json");
    truth.save(&path).unwrap();
    let loaded = TrainedModel::load(&path).unwrap();
    for (ep, set) in d.test.iter().zip(&d.test_sets) {
        let trajs = loaded.counterfactual(&ep.episode, set).unwrap();
        let scores: Vec<f64> = trajs.iter().map(|tr| score(tr, ScoreFn::Mean).unwrap()).collect();
        assert_eq!(classify(&scores), set.true_label, "{}", set.episode_id);
    }
}

fn write_graph(path: &Path, edges: &[(&str, &str)]) {
    let nodes = r#"[{"name":"x1","role":"input"},{"name":"x2","role":"input"},{"name":"h","role":"state"},{"name":"y","role":"output"}]"#;
    let edges: Vec<String> = edges.iter().map(|(a, b)| format!(r#"["{a}","{b}"]"#)).collect();
    let body = format!(r#"{{"schema":"h2ncm-graph/1","nodes":{nodes},"edges":[{}]}}"#, edges.join(","));
    std::fs::write(path, body).unwrap();
}

#[test]
fn reduce_graph_without_candidates_returns_input() {
    let t = tempfile::tempdir().unwrap();
    let g = t.path().join("g.json");
    // h feeds y but has two parents, so nothing can be shortened or merged
    write_graph(&g, &[("x1", "h"), ("x2", "h"), ("h", "y"), ("y", "y")]);
    let out = t.path().join("r.json");
    ok(&["reduce-graph", "--graph", s(&g), "--data", s(data()), "--out", s(&out), "--epochs", "1"]);
    let (a, b) = (read_json(&g), read_json(&out));
    let sorted = |v: &Value| {
        let mut x = v.as_array().unwrap().clone();
        x.sort_by_key(|e| e.to_string());
        x
    };
    assert_eq!(sorted(&a["edges"]), sorted(&b["edges"]));
    assert_eq!(sorted(&a["nodes"]), sorted(&b["nodes"]));
    assert_eq!(b["metadata"]["steps"].as_array().unwrap().len(), 0);
    assert_eq!(std::fs::read_to_string(t.path().join("r.audit.jsonl")).unwrap(), "");
}

#[test]
fn reduce_graph_audit_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let g = t.path().join("g.json");
    write_graph(&g, &[("x1", "h"), ("h", "y"), ("x1", "y"), ("x2", "y"), ("y", "y")]);
    let run = |name: &str| {
        let out = t.path().join(format!("{name}.json"));
        ok(&["reduce-graph", "--graph", s(&g), "--data", s(data()), "--out", s(&out), "--epochs", "2"]);
        let audit = std::fs::read_to_string(t.path().join(format!("{name}.audit.jsonl"))).unwrap();
        (std::fs::read(&out).unwrap(), audit)
    };
    let (g1, a1) = run("r1");
    let (g2, a2) = run("r2");
    assert_eq!(g1, g2);
    assert_eq!(a1, a2);
    let entries: Vec<Value> = a1.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!entries.is_empty());
    let steps = read_json(&t.path().join("r1.json"))["metadata"]["steps"].as_array().unwrap().len();
    assert_eq!(entries.iter().filter(|e| e["accepted"] == true).count(), steps);
}
