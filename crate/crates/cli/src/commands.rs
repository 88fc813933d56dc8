use std::path::{Path, PathBuf};

use h2ncm_core::data::{gen_synthetic, read_episodes, read_interventions, SyntheticData};
use h2ncm_core::graphred::{reduce, CachedEvaluator, MnodeEvaluator, ReduceConfig};
use h2ncm_core::harness::{
    default_grid, evaluate_test, grid_search, nested_cv_with, train, write_run_dir, CachedFitter, HybridFitter,
};
use h2ncm_core::losses::{classify, score};
use h2ncm_core::{
    CvConfig, DataDir, DiGraph, Error, GraphFile, GridSpec, HybridConfig, Result, Schema, Split, SyntheticConfig,
    TrainConfig, TrainedModel, Variant,
};
use serde_json::{json, Value};

use crate::manifest::{hash_inputs, RunManifest};
use crate::report::write_report;
use crate::{CfArgs, Command, CvArgs, FitArgs, GenArgs, ReduceArgs, ReplayArgs, TrainArgs};

pub fn run(cmd: Command, argv: Vec<String>) -> Result<()> {
    match cmd {
        Command::GenSynthetic(a) => gen(&a, argv),
        Command::Train(a) => cmd_train(&a, argv),
        Command::Cv(a) => cmd_cv(&a, argv),
        Command::Counterfactual(a) => counterfactual(&a, argv),
        Command::ReduceGraph(a) => reduce_graph(&a, argv),
        Command::Report(a) => write_report(&a.runs, a.format, a.out.as_deref()),
        Command::Replay(a) => replay(&a),
    }
}

fn flags<T: serde::Serialize>(a: &T) -> Value {
    serde_json::to_value(a).expect("flags serialize")
}

/// `out` with `suffix` in place of its extension (`model.json` becomes
/// `model.history.csv`).
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

fn write_text(path: &Path, s: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn gen(a: &GenArgs, argv: Vec<String>) -> Result<()> {
    let cfg = SyntheticConfig {
        n_train: a.train,
        n_val: a.val,
        n_test: a.test,
        seq_len: a.seq_len,
        horizon: a.horizon,
        seed: a.seed,
        ..SyntheticConfig::default()
    };
    cfg.validate()?;
    let mpath = a.out.join("run_manifest.json");
    let m = RunManifest::new("gen-synthetic", argv, flags(a), json!({ "seed": a.seed }), vec![]);
    m.write(&mpath)?;
    let d = gen_synthetic(&cfg)?;
    let dd = DataDir {
        train: SyntheticData::dataset(&d.train),
        val: SyntheticData::dataset(&d.val),
        test: SyntheticData::dataset(&d.test),
        train_sets: d.train_sets,
        val_sets: d.val_sets,
        test_sets: d.test_sets,
    };
    dd.write(&a.out, serde_json::to_value(&cfg)?)?;
    println!("wrote {}/{}/{} episodes to {}", a.train, a.val, a.test, a.out.display());
    m.finish(&mpath)
}

struct Data {
    schema: Schema,
    input_names: Vec<String>,
    horizon: usize,
    train: Split,
    val: Split,
    test: Split,
}

fn load_data(dir: &Path) -> Result<Data> {
    let dd = DataDir::read(dir)?;
    let input_names = dd.train.input_names.clone();
    let schema = Schema::detect(&input_names)
        .ok_or_else(|| Error::Schema(format!("unrecognized input columns {input_names:?}")))?;
    for d in [&dd.val, &dd.test] {
        if d.input_names != input_names {
            return Err(Error::Schema("splits disagree on input columns".into()));
        }
    }
    let horizon =
        dd.train.episodes.first().map(|e| e.horizon()).ok_or_else(|| Error::Input("empty training split".into()))?;
    Ok(Data {
        schema,
        input_names,
        horizon,
        train: Split::new(dd.train.episodes, dd.train_sets)?,
        val: Split::new(dd.val.episodes, dd.val_sets)?,
        test: Split::new(dd.test.episodes, dd.test_sets)?,
    })
}

fn preset(schema: Schema, v: Variant, horizon: usize) -> (HybridConfig, TrainConfig) {
    let (mut hc, tc) = match schema {
        Schema::Synthetic => (HybridConfig::synthetic(v), TrainConfig::synthetic(v)),
        Schema::Glucose => (HybridConfig::glucose(v), TrainConfig::glucose(v)),
    };
    hc.horizon = horizon;
    (hc, tc)
}

/// Recursively overlays the keys of `patch` onto `base`.
fn overlay(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                overlay(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Presets, then the config file, then flags.
fn effective(f: &FitArgs, v: Variant, alpha: f64, data: &Data) -> Result<(HybridConfig, TrainConfig)> {
    let (mut hc, mut tc) = preset(data.schema, v, data.horizon);
    if let Some(path) = &f.config {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Value = serde_json::from_str(&s)?;
        if let Some(p) = file.get("model") {
            let mut b = serde_json::to_value(&hc)?;
            overlay(&mut b, p);
            hc = serde_json::from_value(b).map_err(|e| Error::Config(format!("{}: model: {e}", path.display())))?;
        }
        if let Some(p) = file.get("train") {
            let mut b = serde_json::to_value(&tc)?;
            overlay(&mut b, p);
            tc = serde_json::from_value(b).map_err(|e| Error::Config(format!("{}: train: {e}", path.display())))?;
        }
        if hc.variant != v {
            return Err(Error::Config(format!(
                "config file sets model {} but --model is {}",
                hc.variant.name(),
                v.name()
            )));
        }
    }
    tc.alpha = alpha;
    if let Some(x) = f.phi {
        tc.phi = x;
    }
    if let Some(x) = f.epochs {
        tc.epochs = x;
    }
    if let Some(x) = f.lr {
        tc.lr = x;
    }
    if let Some(x) = f.batch_size {
        tc.batch_size = Some(x);
    }
    if let Some(x) = f.score {
        tc.score = x.into();
    }
    if let Some(x) = f.seed {
        tc.seed = x;
    }
    tc.validate()?;
    if hc.input_names != data.input_names {
        return Err(Error::Schema(format!(
            "model inputs {:?} do not match data {:?}",
            hc.input_names, data.input_names
        )));
    }
    hc.validate()?;
    Ok((hc, tc))
}

fn load_grid(f: &FitArgs, data: &Data) -> Result<GridSpec> {
    let base = |v| preset(data.schema, v, data.horizon).0;
    match &f.grid {
        Some(p) => GridSpec::load(p, base),
        None => Ok(default_grid(data.schema == Schema::Synthetic)),
    }
}

fn cmd_train(a: &TrainArgs, argv: Vec<String>) -> Result<()> {
    let data = load_data(&a.fit.data)?;
    let (mut hc, tc) = effective(&a.fit, a.model, a.alpha, &data)?;
    let mut inputs = vec![a.fit.data.as_path()];
    inputs.extend(a.fit.grid.as_deref());
    inputs.extend(a.fit.config.as_deref());
    let mpath = sibling(&a.out, "manifest.json");
    let mut m = RunManifest::new("train", argv, flags(a), json!({ "train": tc.seed }), hash_inputs(&inputs)?);
    m.config = json!({ "model": hc, "train": tc });
    m.write(&mpath)?;
    let mut chosen = None;
    if a.fit.grid.is_some() {
        let grid = load_grid(&a.fit, &data)?;
        let points = grid.points(a.model)?;
        let fitter = HybridFitter { base: hc.clone(), train: tc.clone() };
        let (best, scores) = grid_search(points, &[(data.train.clone(), data.val.clone())], &fitter, tc.seed)?;
        log::info!("grid scores {scores:?}");
        hc = hc.with_hyper(&points[best]);
        chosen = Some(points[best]);
    }
    let (model, hist) = train(&hc, &data.train, &data.val, &tc)?;
    model.save(&a.out)?;
    write_text(&sibling(&a.out, "history.csv"), &hist.to_csv())?;
    let mut ev = evaluate_test(&model, &data.test, &tc)?;
    ev.best_epoch = hist.best + 1;
    let metrics = json!({
        "model": a.model.name(),
        "alpha": a.alpha,
        "hyper": chosen,
        "param_count": model.param_count(),
        "best_epoch": hist.best + 1,
        "causal_evals": hist.causal_evals,
        "test": ev,
    });
    write_text(&sibling(&a.out, "metrics.json"), &(serde_json::to_string_pretty(&metrics)? + "\n"))?;
    println!("{}", serde_json::to_string(&metrics)?);
    m.config = json!({ "model": hc, "train": tc });
    m.finish(&mpath)
}

fn alpha_dir(out: &Path, v: Variant, alpha: f64) -> PathBuf {
    out.join(v.name()).join(format!("alpha_{alpha}"))
}

fn cmd_cv(a: &CvArgs, argv: Vec<String>) -> Result<()> {
    let data = load_data(&a.fit.data)?;
    let cv = CvConfig {
        repeats: a.repeats,
        outer: a.outer,
        inner: a.inner,
        seed: a.fit.seed.unwrap_or(CvConfig::default().seed),
        corruption: a.corruption,
    };
    cv.validate()?;
    let grid = load_grid(&a.fit, &data)?;
    // resolve every configuration before any work starts
    let mut jobs = Vec::new();
    for &v in &a.model {
        let points = grid.points(v)?.to_vec();
        for &alpha in &a.alphas {
            let (hc, tc) = effective(&a.fit, v, alpha, &data)?;
            jobs.push((v, alpha, hc, tc, points.clone()));
        }
    }
    let mut inputs = vec![a.fit.data.as_path()];
    inputs.extend(a.fit.grid.as_deref());
    inputs.extend(a.fit.config.as_deref());
    let mpath = a.out.join("run_manifest.json");
    let mut m = RunManifest::new("cv", argv, flags(a), json!({ "cv": cv.seed }), hash_inputs(&inputs)?);
    m.config = json!({ "cv": cv, "grid": grid });
    m.write(&mpath)?;
    let pool = Split::concat(&[&data.train, &data.val, &data.test]);
    for (v, alpha, hc, tc, points) in jobs {
        let dir = alpha_dir(&a.out, v, alpha);
        if dir.join("report.json").exists() {
            log::info!("{} exists; skipping", dir.join("report.json").display());
            continue;
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let inner = HybridFitter { base: hc.clone(), train: tc.clone() };
        let fitter = CachedFitter::new(&inner, Some(dir.join("cache.jsonl")))?;
        let (report, arts) = nested_cv_with(&pool, &points, &cv, &fitter)?;
        let config = json!({ "model": v.name(), "alpha": alpha, "hybrid": hc, "train": tc, "cv": cv, "grid": points });
        write_run_dir(&dir, &config, &report, &arts)?;
        let ag = &report.aggregates;
        println!(
            "{} alpha={alpha}: rmse {:.5} +/- {:.5}, class error p50 {}",
            v.name(),
            ag.rmse_mean,
            ag.rmse_stderr,
            ag.class_error_p50.map_or("n/a".into(), |x| format!("{x:.3}"))
        );
    }
    m.finish(&mpath)
}

fn counterfactual(a: &CfArgs, argv: Vec<String>) -> Result<()> {
    let mut inputs = vec![a.model.as_path(), a.interventions.as_path()];
    inputs.extend(a.episodes.as_deref());
    inputs.extend(a.data.as_deref());
    let mpath = sibling(&a.out, "manifest.json");
    let m = RunManifest::new("counterfactual", argv, flags(a), Value::Null, hash_inputs(&inputs)?);
    m.write(&mpath)?;
    let model = TrainedModel::load(&a.model)?;
    let episodes = match (&a.episodes, &a.data) {
        (Some(p), _) => read_episodes(p)?.episodes,
        (None, Some(d)) => {
            let dd = DataDir::read(d)?;
            [dd.train, dd.val, dd.test].into_iter().flat_map(|s| s.episodes).collect()
        }
        (None, None) => return Err(Error::Input("give --episodes or --data".into())),
    };
    let ep = episodes
        .into_iter()
        .find(|e| e.id == a.episode)
        .ok_or_else(|| Error::Input(format!("no episode '{}'", a.episode)))?;
    let set = read_interventions(&a.interventions)?
        .into_iter()
        .find(|s| s.episode_id == a.episode)
        .ok_or_else(|| Error::Input(format!("no intervention set for '{}'", a.episode)))?;
    if ep.n_inputs() != model.config.n_inputs() || ep.horizon() != model.config.horizon {
        return Err(Error::Schema(format!(
            "episode has {} inputs and horizon {}, model expects {} and {}",
            ep.n_inputs(),
            ep.horizon(),
            model.config.n_inputs(),
            model.config.horizon
        )));
    }
    set.validate(model.config.horizon, model.config.n_inputs())?;
    let prediction = model.predict(&ep)?;
    let trajectories = model.counterfactual(&ep, &set)?;
    let scores = trajectories.iter().map(|t| score(t, a.score.into())).collect::<Result<Vec<_>>>()?;
    let selected = classify(&scores);
    let out = json!({
        "episode_id": ep.id,
        "category": set.category,
        "model": model.variant.name(),
        "prediction": prediction,
        "trajectories": trajectories,
        "scores": scores,
        "selected": selected,
        "true_label": set.true_label,
    });
    write_text(&a.out, &(serde_json::to_string_pretty(&out)? + "\n"))?;
    println!("selected intervention {selected} (label {})", set.true_label);
    m.finish(&mpath)
}

fn reduce_graph(a: &ReduceArgs, argv: Vec<String>) -> Result<()> {
    let s = std::fs::read_to_string(&a.graph).map_err(|e| Error::io(&a.graph, e))?;
    let file: GraphFile = serde_json::from_str(&s)?;
    let g = DiGraph::from_file(&file)?;
    let data = load_data(&a.data)?;
    let mut base = preset(data.schema, Variant::Mnode, data.horizon).0;
    base.mlp.hidden_layers = a.layers;
    base.mlp.hidden_units = a.units;
    let mpath = sibling(&a.out, "manifest.json");
    let m = RunManifest::new(
        "reduce-graph",
        argv,
        flags(a),
        json!({ "evaluator": a.seed }),
        hash_inputs(&[a.graph.as_path(), a.data.as_path()])?,
    );
    m.write(&mpath)?;
    let ev = MnodeEvaluator::new(base, data.train, data.val, a.epochs, a.seed);
    ev.config_for(&g)?.check_cap()?;
    let r = reduce(&g, &CachedEvaluator::new(ev), &ReduceConfig { tolerance: a.tolerance })?;
    let mut out = r.graph.to_file();
    out.metadata = Some(json!({
        "reduced_from": g.canonical_hash(),
        "initial_loss": r.initial_loss,
        "best_loss": r.best_loss,
        "steps": r.steps,
    }));
    write_text(&a.out, &(serde_json::to_string_pretty(&out)? + "\n"))?;
    write_text(&sibling(&a.out, "audit.jsonl"), &r.audit_jsonl()?)?;
    println!(
        "{} steps adopted over {} evaluations; {} -> {} nodes",
        r.steps.len(),
        r.audit.len(),
        g.node_count(),
        r.graph.node_count()
    );
    m.finish(&mpath)
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let m = RunManifest::read(&a.manifest)?;
    m.check_inputs()?;
    if m.command == "replay" {
        return Err(Error::Input("a replay manifest cannot be replayed".into()));
    }
    crate::dispatch(&m.argv)
}
