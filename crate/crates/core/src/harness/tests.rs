use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Mutex;

use super::*;
use crate::data::{gen_synthetic, SyntheticConfig, SyntheticData};
use crate::model::{HybridConfig, HyperParams, TrainedModel, Variant};

fn toy_split(n: usize) -> Split {
    let episodes = (0..n)
        .map(|i| Episode {
            id: format!("e{i:03}"),
            dt_minutes: 1.0,
            context: vec![vec![i as f64, 0.0, 0.0]; 2],
            y0: i as f64,
            future_x: vec![vec![0.0, 0.0]; 2],
            targets: vec![0.0; 2],
        })
        .collect();
    Split::new(episodes, vec![]).unwrap()
}

fn id_set(s: &Split) -> BTreeSet<String> {
    s.episodes.iter().map(|e| e.id.clone()).collect()
}

#[derive(Default)]
struct MockFitter {
    scores: Mutex<Vec<(HyperParams, BTreeSet<String>, BTreeSet<String>)>>,
    fits: Mutex<Vec<(BTreeSet<String>, BTreeSet<String>, BTreeSet<String>)>>,
}

impl Fitter for MockFitter {
    fn score(&self, h: &HyperParams, train: &Split, val: &Split, _seed: u64) -> Result<f64> {
        let (tr, va) = (id_set(train), id_set(val));
        assert!(tr.is_disjoint(&va));
        self.scores.lock().unwrap().push((*h, tr, va));
        // Lowest at m = 16, plus a deterministic fold-dependent term
        Ok((h.m as f64 - 16.0).abs() + val.episodes[0].y0 * 1e-3)
    }

    fn fit_eval(
        &self,
        h: &HyperParams,
        train: &Split,
        val: &Split,
        test: &Split,
        seed: u64,
    ) -> Result<(FoldEval, Option<(TrainedModel, History)>)> {
        let (tr, va, te) = (id_set(train), id_set(val), id_set(test));
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        self.fits.lock().unwrap().push((tr, va, te));
        let rmse = h.m as f64 + seed as f64 * 1e-3 + test.episodes[0].y0;
        let ev = FoldEval { pred_loss: rmse * rmse, rmse, causal_loss: None, class_error: None, best_epoch: 1 };
        Ok((ev, None))
    }
}

fn mock_grid() -> Vec<HyperParams> {
    [8, 16, 32].iter().map(|&m| HyperParams { n: 2, m, d: 0, a: 0.0 }).collect()
}

#[test]
fn nested_cv_bookkeeping() {
    let data = toy_split(48);
    let cv = CvConfig { repeats: 3, outer: 6, inner: 4, seed: 7, corruption: 0.0 };
    let grid = mock_grid();
    let f = MockFitter::default();
    let (rep, arts) = nested_cv_with(&data, &grid, &cv, &f).unwrap();
    assert_eq!(rep.folds.len(), 18);
    assert_eq!(arts.len(), 18);
    assert_eq!(rep.e_pred.len(), 18);
    assert!(rep.e_causal.is_empty());
    assert_eq!(rep.aggregates.class_error_p50, None);
    assert_eq!(f.fits.lock().unwrap().len(), 18);
    // every λ is scored on exactly M - 1 inner folds per outer fold
    assert_eq!(f.scores.lock().unwrap().len(), 18 * grid.len() * 3);
    for (k, rec) in rep.folds.iter().enumerate() {
        assert_eq!((rec.repeat, rec.fold), (k / 6 + 1, k % 6 + 1));
        assert_eq!(rec.seed, cv.repeat_seed(rec.repeat));
        assert_eq!(rec.lambda.m, 16);
        assert_eq!(rec.lambda_scores.len(), grid.len());
        assert_eq!(rec.n_test, 8);
        assert_eq!(rec.n_train + rec.n_val, 40);
    }
    let all: BTreeSet<String> = id_set(&data);
    for (tr, va, te) in f.fits.lock().unwrap().iter() {
        let u: BTreeSet<String> = tr.union(va).chain(te).cloned().collect();
        assert_eq!(u, all);
    }
    // test folds of one repeat partition the data
    for rep_folds in outer_folds(48, &cv) {
        let mut seen = BTreeSet::new();
        for (_, test) in rep_folds {
            for i in test {
                assert!(seen.insert(i));
            }
        }
        assert_eq!(seen.len(), 48);
    }
}

#[test]
fn inner_scores_cover_each_fold_once() {
    let data = toy_split(24);
    let cv = CvConfig { repeats: 1, outer: 2, inner: 4, seed: 1, corruption: 0.0 };
    let grid = mock_grid();
    let f = MockFitter::default();
    nested_cv_with(&data, &grid, &cv, &f).unwrap();
    let scores = f.scores.lock().unwrap();
    for h in &grid {
        let vals: Vec<&BTreeSet<String>> = scores.iter().filter(|s| s.0 == *h).map(|s| &s.2).collect();
        // 2 outer folds x 3 scoring folds, each of a distinct validation chunk
        assert_eq!(vals.len(), 6);
        let distinct: BTreeSet<_> = vals.iter().map(|v| v.iter().next().unwrap().clone()).collect();
        assert_eq!(distinct.len(), 6);
    }
}

#[test]
fn reports_are_deterministic() {
    let data = toy_split(30);
    let cv = CvConfig { repeats: 2, outer: 3, inner: 3, seed: 11, corruption: 0.0 };
    let run = || {
        let (r, _) = nested_cv_with(&data, &mock_grid(), &cv, &MockFitter::default()).unwrap();
        serde_json::to_string(&r).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn too_few_episodes_rejected() {
    let cv = CvConfig::default();
    let e = nested_cv_with(&toy_split(10), &mock_grid(), &cv, &MockFitter::default()).unwrap_err();
    assert_eq!(e.kind(), crate::error::ErrorKind::Usage);
    assert!(CvConfig { inner: 1, ..cv }.validate().is_err());
}

#[test]
fn grid_search_breaks_ties_first() {
    struct Flat;
    impl Fitter for Flat {
        fn score(&self, _: &HyperParams, _: &Split, _: &Split, _: u64) -> Result<f64> {
            Ok(1.0)
        }
        fn fit_eval(
            &self,
            _: &HyperParams,
            _: &Split,
            _: &Split,
            _: &Split,
            _: u64,
        ) -> Result<(FoldEval, Option<(TrainedModel, History)>)> {
            unreachable!()
        }
    }
    let s = toy_split(4);
    let folds = vec![(s.subset(&[0, 1]), s.subset(&[2, 3]))];
    let (best, totals) = grid_search(&mock_grid(), &folds, &Flat, 0).unwrap();
    assert_eq!(best, 0);
    assert_eq!(totals, vec![1.0; 3]);
}

#[test]
fn split_aligns_sets_by_id() {
    let s = toy_split(3);
    let set = InterventionSet {
        episode_id: "e001".into(),
        category: crate::data::Category::RaiseX1,
        variants: vec![vec![vec![0.0, 0.0]; 2]; 3],
        true_label: 0,
    };
    let a = Split::new(s.episodes.clone(), vec![set.clone()]).unwrap();
    assert_eq!(a.sets[1].as_ref(), Some(&set));
    assert_eq!(a.n_sets(), 1);
    let mut orphan = set.clone();
    orphan.episode_id = "zzz".into();
    assert!(Split::new(s.episodes.clone(), vec![orphan]).is_err());
    assert!(Split::new(s.episodes, vec![set.clone(), set]).is_err());
}

fn small_synthetic() -> SyntheticData {
    gen_synthetic(&SyntheticConfig { n_train: 24, n_val: 8, n_test: 8, seq_len: 30, ..Default::default() }).unwrap()
}

fn splits(d: &SyntheticData) -> (Split, Split) {
    let eps = |v: &[crate::data::SyntheticEpisode]| v.iter().map(|e| e.episode.clone()).collect();
    (Split::new(eps(&d.train), d.train_sets.clone()).unwrap(), Split::new(eps(&d.val), d.val_sets.clone()).unwrap())
}

#[test]
fn predictive_training_skips_causal_term() {
    let d = small_synthetic();
    let (tr, va) = splits(&d);
    let cfg = HybridConfig::synthetic(Variant::Mnode);
    let tc = TrainConfig { epochs: 4, batch_size: Some(8), ..TrainConfig::synthetic(Variant::Mnode) };
    let (model, hist) = train(&cfg, &tr, &va, &tc).unwrap();
    assert_eq!(hist.causal_evals, 0);
    assert_eq!(hist.epochs.len(), 4);
    assert!(hist.epochs.iter().all(|e| e.val_causal.is_none()));
    let min = hist.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(hist.best_val(), min);
    // the returned snapshot is the best epoch's
    let prep = train::Prepared::new(&va, &model.standardizer);
    let idx: Vec<usize> = (0..va.len()).collect();
    let b = prep.batch(&cfg, &idx, false, model.meal_zero()).unwrap();
    let (v, _, _) = train::evaluate(&cfg, &model.params, &b, &tc, 0.0).unwrap();
    assert!((v - min).abs() <= 1e-12 * min.max(1.0), "{v} vs {min}");
}

#[test]
fn hybrid_training_evaluates_causal_term() {
    let d = small_synthetic();
    let (tr, va) = splits(&d);
    let cfg = HybridConfig::synthetic(Variant::Mnode);
    let tc = TrainConfig { epochs: 2, batch_size: Some(8), ..TrainConfig::synthetic(Variant::Mnode) }.with_alpha(0.5);
    let (_, hist) = train(&cfg, &tr, &va, &tc).unwrap();
    assert_eq!(hist.causal_evals, 2 * 3);
    assert!(hist.epochs.iter().all(|e| e.val_causal.is_some()));
}

#[test]
fn training_is_seeded() {
    let d = small_synthetic();
    let (tr, va) = splits(&d);
    let cfg = HybridConfig::synthetic(Variant::Lstm).with_hyper(&HyperParams { n: 1, m: 4, d: 0, a: 0.2 });
    let tc = TrainConfig { epochs: 2, batch_size: Some(8), ..TrainConfig::default() };
    let (a, _) = train(&cfg, &tr, &va, &tc).unwrap();
    let (b, _) = train(&cfg, &tr, &va, &tc).unwrap();
    assert_eq!(a.params, b.params);
    let (c, _) = train(&cfg, &tr, &va, &TrainConfig { seed: 1, ..tc }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn training_improves_validation_loss() {
    let d = small_synthetic();
    let (tr, va) = splits(&d);
    let cfg = HybridConfig::synthetic(Variant::Mechanistic);
    let tc = TrainConfig { epochs: 15, batch_size: Some(8), ..TrainConfig::synthetic(Variant::Mechanistic) };
    let (_, hist) = train(&cfg, &tr, &va, &tc).unwrap();
    assert!(hist.best_val() < 0.5 * hist.epochs[0].val_loss, "{:?}", hist.epochs);
}

#[test]
fn lpsc_second_phase_moves_only_the_closure() {
    let d = small_synthetic();
    let (tr, va) = splits(&d);
    let cfg = HybridConfig::synthetic(Variant::Lpsc).with_hyper(&HyperParams { n: 2, m: 8, d: 4, a: 0.0 });
    let base =
        TrainConfig { epochs: 3, closure_epochs: 0, batch_size: Some(8), ..TrainConfig::synthetic(Variant::Lpsc) };
    let (p1, h1) = train(&cfg, &tr, &va, &base).unwrap();
    assert_eq!(h1.epochs.len(), 3);
    assert!(h1.epochs.iter().all(|e| e.phase == 1));
    let (p2, h2) = train(&cfg, &tr, &va, &TrainConfig { closure_epochs: 3, ..base }).unwrap();
    assert_eq!(h2.epochs.len(), 6);
    assert_eq!(h2.epochs[..3], h1.epochs[..]);
    assert!(h2.epochs[3..].iter().all(|e| e.phase == 2));
    assert!(h2.best_val() <= h1.best_val());
    for (name, _) in p1.params.segments() {
        if !name.starts_with("nn.closure") {
            assert_eq!(p1.params.slice(name).unwrap(), p2.params.slice(name).unwrap(), "{name}");
        }
    }
    let gate = if h2.epochs[h2.best].phase == 2 { 1.0 } else { 0.0 };
    assert_eq!(p2.config.closure_w, gate);
}

#[test]
fn history_csv_has_one_row_per_epoch() {
    let h = History {
        epochs: vec![EpochRecord {
            epoch: 1,
            phase: 1,
            lr: 0.1,
            train_loss: 1.0,
            val_loss: 2.0,
            val_predictive: 2.0,
            val_causal: None,
            divergent_batches: 0,
        }],
        best: 0,
        causal_evals: 0,
    };
    let csv = h.to_csv();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("1,1,0.1,1,2,2,,0"));
}

#[test]
fn cached_fitter_resumes_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let data = toy_split(24);
    let cv = CvConfig { repeats: 1, outer: 2, inner: 3, seed: 5, corruption: 0.0 };
    let inner = MockFitter::default();
    let first = {
        let f = CachedFitter::new(&inner, Some(path.clone())).unwrap();
        nested_cv_with(&data, &mock_grid(), &cv, &f).unwrap().0
    };
    let calls = inner.scores.lock().unwrap().len();
    assert_eq!(calls, 2 * 3 * 2);
    // a torn trailing line is tolerated
    std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"key\":").unwrap();
    let again = MockFitter::default();
    let f = CachedFitter::new(&again, Some(path)).unwrap();
    assert_eq!(f.len(), calls);
    let second = nested_cv_with(&data, &mock_grid(), &cv, &f).unwrap().0;
    assert!(again.scores.lock().unwrap().is_empty());
    // new entries after the torn line stay readable
    let other = CvConfig { seed: 6, ..cv.clone() };
    nested_cv_with(&data, &mock_grid(), &other, &f).unwrap();
    assert_eq!(CachedFitter::new(&again, Some(dir.path().join("cache.jsonl"))).unwrap().len(), f.len());
    assert_eq!(serde_json::to_string(&first).unwrap(), serde_json::to_string(&second).unwrap());
}
