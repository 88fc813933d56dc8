use serde::{Deserialize, Serialize};

use super::Split;
use crate::autodiff::{AdamState, ParamVector, Tape};
use crate::data::{Episode, InterventionSet, Standardizer};
use crate::error::{Error, Result};
use crate::losses::{check_alpha, ScoreFn};
use crate::model::{objective, Batch, HybridConfig, TrainedModel, Variant};
use crate::rng::SeededRng;

/// Consecutive epochs with a divergent batch before the step size is halved.
const HALVE_AFTER: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub alpha: f64,
    pub phi: f64,
    #[serde(default)]
    pub score: ScoreFn,
    pub seed: u64,
    /// Minibatch size; full batch when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Second-phase epochs for the LPSC closure.
    #[serde(default = "default_closure_epochs")]
    pub closure_epochs: usize,
}

fn default_closure_epochs() -> usize {
    50
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            epochs: 100,
            alpha: 0.0,
            phi: 1.0,
            score: ScoreFn::Mean,
            seed: 2024,
            batch_size: None,
            closure_epochs: 50,
        }
    }
}

impl TrainConfig {
    /// Step sizes and budgets per variant for glucose-style data.
    pub fn glucose(variant: Variant) -> Self {
        let lr = if variant == Variant::Mechanistic { 1e-1 } else { 2e-3 };
        Self { lr, ..Self::default() }
    }

    /// Synthetic preset: 50 epochs in minibatches of 32.
    pub fn synthetic(variant: Variant) -> Self {
        let lr = match variant {
            Variant::Mechanistic => 5e-1,
            Variant::Lp | Variant::Lpsc => 1e-2,
            _ => 2e-3,
        };
        Self { lr, epochs: 50, batch_size: Some(32), ..Self::default() }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.phi)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_predictive: f64,
    pub val_causal: Option<f64>,
    pub divergent_batches: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the returned snapshot.
    pub best: usize,
    /// Batches on which the causal term was evaluated.
    pub causal_evals: usize,
}

impl History {
    pub fn best_val(&self) -> f64 {
        self.epochs.get(self.best).map_or(f64::INFINITY, |e| e.val_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,phase,lr,train_loss,val_loss,val_predictive,val_causal,divergent_batches\n");
        for e in &self.epochs {
            let c = e.val_causal.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e.epoch, e.phase, e.lr, e.train_loss, e.val_loss, e.val_predictive, c, e.divergent_batches
            ));
        }
        s
    }
}

/// A split standardized with the training statistics.
pub(crate) struct Prepared {
    pub episodes: Vec<Episode>,
    pub sets: Vec<Option<InterventionSet>>,
}

impl Prepared {
    pub(crate) fn new(split: &Split, st: &Standardizer) -> Self {
        Self {
            episodes: split.episodes.iter().map(|e| st.apply(e)).collect(),
            sets: split.sets.iter().map(|s| s.as_ref().map(|s| st.apply_set(s))).collect(),
        }
    }

    pub(crate) fn batch(&self, cfg: &HybridConfig, idx: &[usize], variants: bool, meal_zero: f64) -> Result<Batch> {
        let eps: Vec<&Episode> = idx.iter().map(|&i| &self.episodes[i]).collect();
        let sets: Vec<Option<&InterventionSet>> = idx.iter().map(|&i| self.sets[i].as_ref()).collect();
        Batch::new(cfg, &eps, &sets, variants, meal_zero)
    }
}

/// Validation objective in evaluation mode; divergence scores as infinity.
pub(crate) fn evaluate(
    cfg: &HybridConfig,
    params: &ParamVector,
    batch: &Batch,
    tc: &TrainConfig,
    alpha: f64,
) -> Result<(f64, f64, Option<f64>)> {
    let tape = Tape::new();
    match objective(cfg, params, &tape, batch, alpha, tc.phi, tc.score, false, None) {
        Ok(o) => Ok((o.total.item(), o.predictive, o.causal)),
        Err(Error::Divergence { .. }) => Ok((f64::INFINITY, f64::INFINITY, None)),
        Err(e) => Err(e),
    }
}

struct Loop<'a> {
    cfg: &'a HybridConfig,
    tc: &'a TrainConfig,
    train: &'a Prepared,
    val: &'a Batch,
    meal_zero: f64,
    rng: SeededRng,
}

impl Loop<'_> {
    /// Runs `epochs` epochs updating only the indices not in `frozen`.
    /// Appends to `hist` and returns the best snapshot seen in this call.
    fn run(
        &mut self,
        params: &mut ParamVector,
        epochs: usize,
        frozen: &[usize],
        phase: usize,
        hist: &mut History,
    ) -> Result<(f64, ParamVector)> {
        let n = self.train.episodes.len();
        let bs = self.tc.batch_size.unwrap_or(n).min(n);
        let use_sets = self.tc.alpha > 0.0;
        let mut adam = AdamState::new(params.len(), self.tc.lr);
        let mut best = (f64::INFINITY, params.clone());
        let mut bad_epochs = 0;
        for _ in 0..epochs {
            let order = if bs < n { self.rng.permutation(n) } else { (0..n).collect() };
            let mut total = 0.0;
            let mut good = 0;
            let mut divergent = 0;
            for chunk in order.chunks(bs) {
                let batch = self.train.batch(self.cfg, chunk, use_sets, self.meal_zero)?;
                let tape = Tape::new();
                let obj = match objective(
                    self.cfg,
                    params,
                    &tape,
                    &batch,
                    self.tc.alpha,
                    self.tc.phi,
                    self.tc.score,
                    true,
                    Some(&mut self.rng),
                ) {
                    Ok(o) => o,
                    Err(Error::Divergence { step }) => {
                        log::debug!("batch diverged at step {step}; skipped");
                        divergent += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                if obj.causal.is_some() {
                    hist.causal_evals += 1;
                }
                let mut g = tape.gradient(&obj.total, params.len())?;
                if !obj.total.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    divergent += 1;
                    continue;
                }
                for &i in frozen {
                    g[i] = 0.0;
                }
                adam.step(params.values_mut(), &g)?;
                total += obj.total.item();
                good += 1;
            }
            if good == 0 {
                return Err(Error::Training(format!(
                    "every batch diverged in epoch {} (lr {})",
                    hist.epochs.len() + 1,
                    adam.lr
                )));
            }
            let (val_loss, val_pred, val_causal) = evaluate(self.cfg, params, self.val, self.tc, self.tc.alpha)?;
            hist.epochs.push(EpochRecord {
                epoch: hist.epochs.len() + 1,
                phase,
                lr: adam.lr,
                train_loss: total / good as f64,
                val_loss,
                val_predictive: val_pred,
                val_causal,
                divergent_batches: divergent,
            });
            if val_loss < best.0 {
                best = (val_loss, params.clone());
            }
            bad_epochs = if divergent > 0 { bad_epochs + 1 } else { 0 };
            if bad_epochs >= HALVE_AFTER {
                adam.lr *= 0.5;
                bad_epochs = 0;
                log::info!("halving learning rate to {} after repeated divergence", adam.lr);
            }
        }
        Ok(best)
    }
}

fn best_index(hist: &History, from: usize) -> usize {
    let mut b = from;
    for (i, e) in hist.epochs.iter().enumerate().skip(from) {
        if e.val_loss < hist.epochs[b].val_loss {
            b = i;
        }
    }
    b
}

/// Fits a model on `train`, selecting the epoch with the lowest validation
/// hybrid loss. LPSC models go through [`train_lpsc`].
pub fn train(cfg: &HybridConfig, train: &Split, val: &Split, tc: &TrainConfig) -> Result<(TrainedModel, History)> {
    if cfg.variant == Variant::Lpsc {
        return train_lpsc(cfg, train, val, tc);
    }
    tc.validate()?;
    cfg.check_cap()?;
    let (st, tr, va) = prepare(train, val)?;
    let mut params = cfg.init_params(&mut SeededRng::derived(tc.seed, &[0]))?;
    let meal_zero = st.x(cfg.mech_inputs[0], 0.0);
    let val_batch = va.batch(cfg, &(0..va.episodes.len()).collect::<Vec<_>>(), tc.alpha > 0.0, meal_zero)?;
    let mut lp = Loop { cfg, tc, train: &tr, val: &val_batch, meal_zero, rng: SeededRng::derived(tc.seed, &[1]) };
    let mut hist = History::default();
    let (_, best) = lp.run(&mut params, tc.epochs, &[], 1, &mut hist)?;
    hist.best = best_index(&hist, 0);
    Ok((TrainedModel::new(cfg.clone(), best, st)?, hist))
}

fn prepare(train: &Split, val: &Split) -> Result<(Standardizer, Prepared, Prepared)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Input("training and validation splits must be non-empty".into()));
    }
    let st = Standardizer::fit(&train.episodes)?;
    let tr = Prepared::new(train, &st);
    let va = Prepared::new(val, &st);
    Ok((st, tr, va))
}

/// Two-phase LPSC fit: the latent-parameter model with the closure gated
/// off, then the closure alone on top of the frozen phase-one snapshot.
pub fn train_lpsc(cfg: &HybridConfig, train: &Split, val: &Split, tc: &TrainConfig) -> Result<(TrainedModel, History)> {
    if cfg.variant != Variant::Lpsc {
        return Err(Error::Config(format!("two-phase training needs an LPSC config, got {}", cfg.variant.name())));
    }
    tc.validate()?;
    cfg.check_cap()?;
    let (st, tr, va) = prepare(train, val)?;
    let meal_zero = st.x(cfg.mech_inputs[0], 0.0);
    let mut p1 = cfg.clone();
    p1.closure_w = 0.0;
    let mut params = p1.init_params(&mut SeededRng::derived(tc.seed, &[0]))?;
    let closure = params.indices_with_prefix("nn.closure");
    let val1 = va.batch(&p1, &(0..va.episodes.len()).collect::<Vec<_>>(), tc.alpha > 0.0, meal_zero)?;
    let mut hist = History::default();
    let mut rng = SeededRng::derived(tc.seed, &[1]);
    let (best1_loss, best1) = {
        let mut lp = Loop { cfg: &p1, tc, train: &tr, val: &val1, meal_zero, rng: rng.clone() };
        let r = lp.run(&mut params, tc.epochs, &closure, 1, &mut hist)?;
        rng = lp.rng;
        r
    };
    let phase1_best = best_index(&hist, 0);

    let mut p2 = cfg.clone();
    p2.closure_w = 1.0;
    let mut is_closure = vec![false; best1.len()];
    for &i in &closure {
        is_closure[i] = true;
    }
    let frozen: Vec<usize> = (0..best1.len()).filter(|&i| !is_closure[i]).collect();
    let mut params = best1.clone();
    let mut best = (best1_loss, best1, p1);
    if tc.closure_epochs > 0 {
        let mut lp = Loop { cfg: &p2, tc, train: &tr, val: &val1, meal_zero, rng };
        let start = hist.epochs.len();
        let (loss2, snap2) = lp.run(&mut params, tc.closure_epochs, &frozen, 2, &mut hist)?;
        if loss2 < best.0 {
            best = (loss2, snap2, p2);
            hist.best = best_index(&hist, start);
        } else {
            hist.best = phase1_best;
        }
    } else {
        hist.best = phase1_best;
    }
    Ok((TrainedModel::new(best.2, best.1, st)?, hist))
}
