use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::Aggregates;
use super::train::{train, History, Prepared, TrainConfig};
use super::Split;
use crate::autodiff::Tape;
use crate::data::{corrupt_sets, CorruptionConfig};
use crate::error::{Error, ErrorKind, Result};
use crate::losses::{causal_loss_from_scores, classify};
use crate::model::{rollout, HybridConfig, HyperParams, TrainedModel};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub repeats: usize,
    pub outer: usize,
    pub inner: usize,
    pub seed: u64,
    /// Fraction of training-side ranking labels to corrupt.
    #[serde(default)]
    pub corruption: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { repeats: 3, outer: 6, inner: 4, seed: 2024, corruption: 0.0 }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 || self.outer < 2 || self.inner < 2 {
            return Err(Error::Config(format!(
                "need R >= 1 and N, M >= 2; got R={} N={} M={}",
                self.repeats, self.outer, self.inner
            )));
        }
        if !(0.0..=1.0).contains(&self.corruption) {
            return Err(Error::Config(format!("corruption rate {} outside [0, 1]", self.corruption)));
        }
        Ok(())
    }

    /// Training seed of repeat `r` (1-based): `s + r - 2`.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64).wrapping_sub(2)
    }
}

/// Test-fold metrics of one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEval {
    /// Mean squared error on standardized observations.
    pub pred_loss: f64,
    /// Root mean squared error in original units.
    pub rmse: f64,
    pub causal_loss: Option<f64>,
    pub class_error: Option<f64>,
    pub best_epoch: usize,
}

/// Scores and fits models for the cross-validation driver.
pub trait Fitter: Sync {
    /// Best validation hybrid loss reached while training.
    fn score(&self, h: &HyperParams, train: &Split, val: &Split, seed: u64) -> Result<f64>;
    fn fit_eval(
        &self,
        h: &HyperParams,
        train: &Split,
        val: &Split,
        test: &Split,
        seed: u64,
    ) -> Result<(FoldEval, Option<(TrainedModel, History)>)>;
}

/// The real fitter: trains hybrid models with [`train`].
pub struct HybridFitter {
    pub base: HybridConfig,
    pub train: TrainConfig,
}

impl Fitter for HybridFitter {
    fn score(&self, h: &HyperParams, train_s: &Split, val: &Split, seed: u64) -> Result<f64> {
        let tc = TrainConfig { seed, ..self.train.clone() };
        match train(&self.base.with_hyper(h), train_s, val, &tc) {
            Ok((_, hist)) => Ok(hist.best_val()),
            Err(e) if e.kind() == ErrorKind::Numeric => {
                log::warn!("grid point {h:?} failed: {e}");
                Ok(f64::INFINITY)
            }
            Err(e) => Err(e),
        }
    }

    fn fit_eval(
        &self,
        h: &HyperParams,
        train_s: &Split,
        val: &Split,
        test: &Split,
        seed: u64,
    ) -> Result<(FoldEval, Option<(TrainedModel, History)>)> {
        let tc = TrainConfig { seed, ..self.train.clone() };
        let (model, hist) = train(&self.base.with_hyper(h), train_s, val, &tc)?;
        let mut ev = evaluate_test(&model, test, &tc)?;
        ev.best_epoch = hist.best + 1;
        Ok((ev, Some((model, hist))))
    }
}

/// Wraps a fitter so inner-fold scores survive interruption: each score is
/// appended to a JSON Lines file keyed by grid point, seed and fold ids, and
/// reloaded on the next run.
pub struct CachedFitter<'a> {
    inner: &'a dyn Fitter,
    path: Option<PathBuf>,
    cache: Mutex<HashMap<String, f64>>,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    /// `None` encodes an infinite score.
    score: Option<f64>,
}

impl<'a> CachedFitter<'a> {
    pub fn new(inner: &'a dyn Fitter, path: Option<PathBuf>) -> Result<Self> {
        let mut cache = HashMap::new();
        if let Some(p) = path.as_deref().filter(|p| p.exists()) {
            let s = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            // a torn final line from an interrupted write is ignored
            for line in s.lines().filter_map(|l| serde_json::from_str::<CacheLine>(l).ok()) {
                cache.insert(line.key, line.score.unwrap_or(f64::INFINITY));
            }
            if !s.is_empty() && !s.ends_with('\n') {
                let mut f = OpenOptions::new().append(true).open(p).map_err(|e| Error::io(p, e))?;
                writeln!(f).map_err(|e| Error::io(p, e))?;
            }
        }
        Ok(Self { inner, path, cache: Mutex::new(cache) })
    }

    pub fn len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(h: &HyperParams, train: &Split, val: &Split, seed: u64) -> String {
        let mut d = Sha256::new();
        d.update(serde_json::to_string(h).expect("grid point serializes"));
        d.update(seed.to_le_bytes());
        for id in train.ids().into_iter().chain(["|"]).chain(val.ids()) {
            d.update(id.as_bytes());
            d.update([0]);
        }
        hex::encode(d.finalize())
    }
}

impl Fitter for CachedFitter<'_> {
    fn score(&self, h: &HyperParams, train: &Split, val: &Split, seed: u64) -> Result<f64> {
        let key = Self::key(h, train, val, seed);
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = self.inner.score(h, train, val, seed)?;
        let mut cache = self.cache.lock().expect("cache lock");
        if let Some(p) = &self.path {
            let line = serde_json::to_string(&CacheLine { key: key.clone(), score: v.is_finite().then_some(v) })?;
            let mut f = OpenOptions::new().create(true).append(true).open(p).map_err(|e| Error::io(p, e))?;
            writeln!(f, "{line}").map_err(|e| Error::io(p, e))?;
        }
        cache.insert(key, v);
        Ok(v)
    }

    fn fit_eval(
        &self,
        h: &HyperParams,
        train: &Split,
        val: &Split,
        test: &Split,
        seed: u64,
    ) -> Result<(FoldEval, Option<(TrainedModel, History)>)> {
        self.inner.fit_eval(h, train, val, test, seed)
    }
}

/// Predictive loss at α = 0 and ranking metrics at α = 1 on a test split.
pub fn evaluate_test(model: &TrainedModel, test: &Split, tc: &TrainConfig) -> Result<FoldEval> {
    if test.is_empty() {
        return Err(Error::Input("empty test split".into()));
    }
    let cfg = &model.config;
    let prep = Prepared::new(test, &model.standardizer);
    let idx: Vec<usize> = (0..test.len()).collect();
    let batch = prep.batch(cfg, &idx, true, model.meal_zero())?;
    let tape = Tape::new();
    let y = rollout(cfg, &model.params, &tape, &batch, false, None)?.value();
    let b = batch.n_episodes();
    let mut se = 0.0;
    for r in 0..b {
        for (k, v) in y.row_slice(r).iter().enumerate() {
            se += (v - batch.targets.get(r, k)).powi(2);
        }
    }
    let pred_loss = se / (b * cfg.horizon) as f64;
    let rmse = pred_loss.sqrt() * model.standardizer.std[0];
    let (mut ce, mut wrong) = (0.0, 0usize);
    for s in &batch.sets {
        let scores =
            s.rows.iter().map(|&r| crate::losses::score(y.row_slice(r), tc.score)).collect::<Result<Vec<_>>>()?;
        ce += causal_loss_from_scores(&scores, tc.phi, s.label)?;
        if classify(&scores) != s.label {
            wrong += 1;
        }
    }
    let n = batch.sets.len();
    let (causal_loss, class_error) =
        if n == 0 { (None, None) } else { (Some(ce / n as f64), Some(wrong as f64 / n as f64)) };
    Ok(FoldEval { pred_loss, rmse, causal_loss, class_error, best_epoch: 0 })
}

/// Contiguous folds of sizes differing by at most one; the first
/// `n mod k` folds get the extra element.
fn chunks(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let (q, r) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = q + usize::from(i < r);
            let out = start..start + len;
            start += len;
            out
        })
        .collect()
}

/// Index sets `(outer_train, test)` for every `(repeat, fold)`, in the
/// permuted order used by the driver.
pub fn outer_folds(n: usize, cv: &CvConfig) -> Vec<Vec<(Vec<usize>, Vec<usize>)>> {
    let mut rng = SeededRng::new(cv.seed);
    (0..cv.repeats)
        .map(|_| {
            let perm = rng.permutation(n);
            chunks(n, cv.outer)
                .into_iter()
                .map(|f| {
                    let test = perm[f.clone()].to_vec();
                    let train = perm[..f.start].iter().chain(&perm[f.end..]).copied().collect();
                    (train, test)
                })
                .collect()
        })
        .collect()
}

/// Scores every grid point as the sum of its best validation losses over
/// `folds`; returns the index of the lowest score (first on ties) and all
/// scores.
pub fn grid_search(
    grid: &[HyperParams],
    folds: &[(Split, Split)],
    fitter: &dyn Fitter,
    seed: u64,
) -> Result<(usize, Vec<f64>)> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|l| (0..folds.len()).map(move |j| (l, j))).collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(l, j)| fitter.score(&grid[l], &folds[j].0, &folds[j].1, seed))
        .collect::<Result<Vec<_>>>()?;
    let totals: Vec<f64> =
        (0..grid.len()).map(|l| scores[l * folds.len()..(l + 1) * folds.len()].iter().sum()).collect();
    Ok((argmin_first(&totals), totals))
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] || (v[best].is_nan() && !x.is_nan()) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub repeat: usize,
    pub fold: usize,
    pub seed: u64,
    pub lambda: HyperParams,
    pub lambda_scores: Vec<f64>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    #[serde(flatten)]
    pub eval: FoldEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub cv: CvConfig,
    pub grid: Vec<HyperParams>,
    pub folds: Vec<FoldRecord>,
    /// Test predictive losses, one per outer evaluation.
    pub e_pred: Vec<f64>,
    /// Test causal losses, one per outer evaluation with intervention sets.
    pub e_causal: Vec<f64>,
    pub aggregates: Aggregates,
}

impl RunReport {
    pub fn class_errors(&self) -> Vec<f64> {
        self.folds.iter().filter_map(|f| f.eval.class_error).collect()
    }

    pub fn rmses(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.eval.rmse).collect()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("repeat,fold,n,m,d,a,pred_loss,rmse,causal_loss,class_error,best_epoch\n");
        for f in &self.folds {
            let l = &f.lambda;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                f.repeat,
                f.fold,
                l.n,
                l.m,
                l.d,
                l.a,
                f.eval.pred_loss,
                f.eval.rmse,
                opt(f.eval.causal_loss),
                opt(f.eval.class_error),
                f.eval.best_epoch
            ));
        }
        s
    }
}

/// Fold artifacts kept for the run directory, keyed like the report rows.
pub type Artifacts = Vec<Option<(TrainedModel, History)>>;

pub fn nested_cv(
    data: &Split,
    grid: &[HyperParams],
    cv: &CvConfig,
    base: &HybridConfig,
    tc: &TrainConfig,
) -> Result<(RunReport, Artifacts)> {
    nested_cv_with(data, grid, cv, &HybridFitter { base: base.clone(), train: tc.clone() })
}

struct OuterJob {
    r: usize,
    i: usize,
    seed: u64,
    test: Split,
    inner: Vec<(Split, Split)>,
}

/// Repeated nested cross-validation: inner folds `1..M-1` score the grid,
/// the `M`-th inner split fits the winner, and the outer test fold is
/// evaluated. Jobs run in parallel; results are assembled in loop order.
pub fn nested_cv_with(
    data: &Split,
    grid: &[HyperParams],
    cv: &CvConfig,
    fitter: &dyn Fitter,
) -> Result<(RunReport, Artifacts)> {
    cv.validate()?;
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    if data.len() < cv.outer * cv.inner {
        return Err(Error::Input(format!(
            "{} episodes cannot fill {} outer x {} inner folds",
            data.len(),
            cv.outer,
            cv.inner
        )));
    }
    let mut jobs = Vec::new();
    for (r0, rep) in outer_folds(data.len(), cv).into_iter().enumerate() {
        for (i0, (tout_idx, test_idx)) in rep.into_iter().enumerate() {
            let mut tout = data.subset(&tout_idx);
            if cv.corruption > 0.0 {
                let cc = CorruptionConfig { rate: cv.corruption, seed: cv.seed ^ ((r0 as u64) << 32 | i0 as u64) };
                let sets: Vec<_> = tout.sets.iter().flatten().cloned().collect();
                let mut corrupted = corrupt_sets(&sets, &cc).into_iter();
                for s in tout.sets.iter_mut().flatten() {
                    *s = corrupted.next().expect("same length");
                }
            }
            let inner = chunks(tout.len(), cv.inner)
                .into_iter()
                .map(|f| {
                    let tr: Vec<usize> = (0..f.start).chain(f.end..tout.len()).collect();
                    let va: Vec<usize> = f.collect();
                    (tout.subset(&tr), tout.subset(&va))
                })
                .collect();
            jobs.push(OuterJob {
                r: r0 + 1,
                i: i0 + 1,
                seed: cv.repeat_seed(r0 + 1),
                test: data.subset(&test_idx),
                inner,
            });
        }
    }
    let results: Vec<(FoldRecord, Option<(TrainedModel, History)>)> = jobs
        .par_iter()
        .map(|job| {
            let m = cv.inner;
            let (best, scores) = grid_search(grid, &job.inner[..m - 1], fitter, job.seed)?;
            let (tr, va) = &job.inner[m - 1];
            let (eval, art) = fitter.fit_eval(&grid[best], tr, va, &job.test, job.seed)?;
            log::info!("repeat {} fold {}: lambda {:?}, rmse {:.4}", job.r, job.i, grid[best], eval.rmse);
            Ok((
                FoldRecord {
                    repeat: job.r,
                    fold: job.i,
                    seed: job.seed,
                    lambda: grid[best],
                    lambda_scores: scores,
                    n_train: tr.len(),
                    n_val: va.len(),
                    n_test: job.test.len(),
                    eval,
                },
                art,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (folds, arts): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let e_pred: Vec<f64> = folds.iter().map(|f| f.eval.pred_loss).collect();
    let e_causal: Vec<f64> = folds.iter().filter_map(|f| f.eval.causal_loss).collect();
    let rmse: Vec<f64> = folds.iter().map(|f| f.eval.rmse).collect();
    let ce: Vec<f64> = folds.iter().filter_map(|f| f.eval.class_error).collect();
    let aggregates = Aggregates::from_lists(&rmse, &ce)?;
    Ok((RunReport { cv: cv.clone(), grid: grid.to_vec(), folds, e_pred, e_causal, aggregates }, arts))
}

fn write(path: &Path, s: &str) -> Result<()> {
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Writes `config.json`, `report.json`, `report.csv` and per-fold model and
/// history files under `dir`.
pub fn write_run_dir(dir: &Path, config: &serde_json::Value, report: &RunReport, arts: &Artifacts) -> Result<()> {
    let folds = dir.join("folds");
    std::fs::create_dir_all(&folds).map_err(|e| Error::io(&folds, e))?;
    write(&dir.join("config.json"), &serde_json::to_string_pretty(config)?)?;
    write(&dir.join("report.json"), &serde_json::to_string_pretty(report)?)?;
    write(&dir.join("report.csv"), &report.to_csv())?;
    for (f, art) in report.folds.iter().zip(arts) {
        let Some((model, hist)) = art else { continue };
        let d = folds.join(format!("{}_{}", f.repeat, f.fold));
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        model.save(&d.join("model.json"))?;
        write(&d.join("history.csv"), &hist.to_csv())?;
    }
    Ok(())
}
