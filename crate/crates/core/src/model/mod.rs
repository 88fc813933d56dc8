//! The hybrid model family: mechanistic, latent-parameter (LP), LP with
//! state closure (LPSC), masked neural ODE (MNODE), blackbox neural ODE
//! (BNODE) and an LSTM sequence-to-sequence baseline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamVector, Tape, Tensor, Var};
use crate::data::{Episode, InterventionSet, Standardizer};
use crate::error::{Error, Result};
use crate::losses::{causal_loss_var, predictive_loss_var, ScoreFn};
use crate::rng::SeededRng;

mod config;
mod forward;

pub use config::{HybridConfig, HyperParams, InitMode, MlpTemplate, Variant, PARAM_CAP};
use forward::{encode, field_step, integrate, Leaves};
pub use forward::{rollout, Batch, SetRows};

/// Output of one field evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldValue {
    pub ds: Vec<f64>,
    pub z_next: Vec<f64>,
    pub beta: Vec<f64>,
}

fn row(tape: &Tape, v: &[f64]) -> Var {
    tape.constant(Tensor::row(v.to_vec()))
}

fn data(v: &Var) -> Vec<f64> {
    v.value().into_data()
}

/// Evaluates the vector field at one point. `d` is the meal size for the
/// glucose simulators.
pub fn hybrid_field(
    cfg: &HybridConfig,
    params: &ParamVector,
    s: &[f64],
    z: &[f64],
    x: &[f64],
    d: f64,
) -> Result<FieldValue> {
    cfg.validate()?;
    if s.len() != cfg.n_states() || x.len() != cfg.n_inputs() {
        return Err(Error::Shape(format!(
            "field expects {} states and {} inputs, got {} and {}",
            cfg.n_states(),
            cfg.n_inputs(),
            s.len(),
            x.len()
        )));
    }
    let want_z = if cfg.variant.uses_latent() { cfg.latent_dim } else { 0 };
    if z.len() != want_z {
        return Err(Error::Shape(format!("latent has {} entries, expected {want_z}", z.len())));
    }
    let tape = Tape::new();
    let lv = Leaves::record(cfg, params, &tape)?;
    let sv: Vec<Var> = s.iter().map(|v| tape.scalar(*v)).collect();
    let zv = (want_z > 0).then(|| row(&tape, z));
    let meal = tape.scalar(d);
    let (ds, zn, beta) = field_step(cfg, &lv, &sv, zv.as_ref(), &row(&tape, x), Some(&meal), false, None)?;
    Ok(FieldValue {
        ds: ds.iter().map(Var::item).collect(),
        z_next: zn.as_ref().map(data).unwrap_or_default(),
        beta: beta.as_ref().map(data).unwrap_or_default(),
    })
}

/// State derivative of an MNODE at one point.
pub fn masked_nn_field(cfg: &HybridConfig, params: &ParamVector, s: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if cfg.variant != Variant::Mnode {
        return Err(Error::Contract(format!("masked field needs an MNODE config, got {}", cfg.variant.name())));
    }
    Ok(hybrid_field(cfg, params, s, &[], x, 0.0)?.ds)
}

/// `z_next = z A + x_sub B` in row-vector convention.
pub fn latent_step(params: &ParamVector, z: &[f64], x_sub: &[f64]) -> Result<Vec<f64>> {
    let d = z.len();
    let a = params.slice("latent.A")?;
    let b = params.slice("latent.B")?;
    if a.len() != d * d || b.len() != x_sub.len() * d {
        return Err(Error::Shape(format!(
            "latent step with {d} latents and {} inputs does not fit A ({}) and B ({})",
            x_sub.len(),
            a.len(),
            b.len()
        )));
    }
    Ok((0..d)
        .map(|j| {
            let za: f64 = (0..d).map(|i| z[i] * a[i * d + j]).sum();
            let xb: f64 = (0..x_sub.len()).map(|k| x_sub[k] * b[k * d + j]).sum();
            za + xb
        })
        .collect())
}

fn single_batch(cfg: &HybridConfig, e: &Episode, meal_zero: f64) -> Result<Batch> {
    Batch::new(cfg, &[e], &[None], false, meal_zero)
}

/// Initial state and latent for one standardized episode.
pub fn encode_initial(
    cfg: &HybridConfig,
    params: &ParamVector,
    context: &[Vec<f64>],
    y0: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    if cfg.variant == Variant::Lstm {
        return Err(Error::Contract("the LSTM baseline has no ODE state".into()));
    }
    let e = Episode {
        id: String::new(),
        dt_minutes: 1.0,
        context: context.to_vec(),
        y0,
        future_x: vec![vec![0.0; cfg.n_inputs()]; cfg.horizon],
        targets: vec![0.0; cfg.horizon],
    };
    let tape = Tape::new();
    let (s, z) = encode(cfg, params, &tape, &single_batch(cfg, &e, 0.0)?, false, None)?;
    Ok((s.iter().map(Var::item).collect(), z.as_ref().map(data).unwrap_or_default()))
}

/// Forward-Euler rollout from an explicit initial condition. `meal` gives
/// the meal size per step for the glucose simulators.
pub fn euler_rollout(
    cfg: &HybridConfig,
    params: &ParamVector,
    s0: &[f64],
    z0: &[f64],
    future_x: &[Vec<f64>],
    meal: Option<&[f64]>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if s0.len() != cfg.n_states() {
        return Err(Error::Shape(format!("s0 has {} entries, expected {}", s0.len(), cfg.n_states())));
    }
    let tape = Tape::new();
    let lv = Leaves::record(cfg, params, &tape)?;
    let s: Vec<Var> = s0.iter().map(|v| tape.scalar(*v)).collect();
    let z = cfg.variant.uses_latent().then(|| row(&tape, z0));
    let x: Vec<Tensor> = future_x.iter().map(|r| Tensor::row(r.clone())).collect();
    let meal: Option<Vec<Tensor>> = meal.map(|m| m.iter().map(|v| Tensor::scalar(*v)).collect());
    Ok(data(&integrate(cfg, &lv, &tape, s, z, &x, meal.as_deref(), false, None)?))
}

/// Loss pieces of one batch, with the differentiable total.
pub struct Objective {
    pub total: Var,
    pub predictive: f64,
    pub causal: Option<f64>,
}

/// `(1 - α)·MSE + α·CE` over a batch. The causal term is evaluated only
/// when `α > 0` and the batch carries variant rows.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    cfg: &HybridConfig,
    params: &ParamVector,
    tape: &Tape,
    batch: &Batch,
    alpha: f64,
    phi: f64,
    score: ScoreFn,
    training: bool,
    rng: Option<&mut SeededRng>,
) -> Result<Objective> {
    let y = rollout(cfg, params, tape, batch, training, rng)?;
    let b = batch.n_episodes();
    let fact: Vec<usize> = (0..b).collect();
    let pred = predictive_loss_var(&y.gather_rows(&fact), &tape.constant(batch.targets.clone()));
    let predictive = pred.item();
    if alpha == 0.0 || batch.sets.is_empty() {
        return Ok(Objective { total: pred.scale(1.0 - alpha), predictive, causal: None });
    }
    let scores = score.apply_var(&y);
    // group sets by K so each block is rectangular
    let mut ks: Vec<usize> = batch.sets.iter().map(|s| s.rows.len()).collect();
    ks.sort_unstable();
    ks.dedup();
    let n_sets = batch.sets.len() as f64;
    let mut ce: Option<Var> = None;
    for k in ks {
        let group: Vec<&SetRows> = batch.sets.iter().filter(|s| s.rows.len() == k).collect();
        let block = Var::concat_cols(
            &(0..k)
                .map(|i| scores.gather_rows(&group.iter().map(|s| s.rows[i]).collect::<Vec<_>>()))
                .collect::<Vec<_>>(),
        );
        let labels: Vec<usize> = group.iter().map(|s| s.label).collect();
        let part = causal_loss_var(&block, &labels, phi).scale(group.len() as f64 / n_sets);
        ce = Some(match ce {
            Some(c) => c + part,
            None => part,
        });
    }
    let ce = ce.expect("at least one set");
    let causal = ce.item();
    Ok(Objective { total: pred.scale(1.0 - alpha) + ce.scale(alpha), predictive, causal: Some(causal) })
}

/// A fitted model with the statistics of the data it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub variant: Variant,
    pub config: HybridConfig,
    pub params: ParamVector,
    pub standardizer: Standardizer,
}

impl TrainedModel {
    pub fn new(config: HybridConfig, params: ParamVector, standardizer: Standardizer) -> Result<Self> {
        let m = Self { variant: config.variant, config, params, standardizer };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant != self.config.variant {
            return Err(Error::Schema("variant tag does not match config".into()));
        }
        self.params.validate()?;
        let layout = self.config.layout()?;
        let want: Vec<_> = layout.segments().collect();
        let got: Vec<_> = self.params.segments().collect();
        if want != got {
            return Err(Error::Schema("parameter segments do not match the config".into()));
        }
        if self.standardizer.mean.len() != self.config.n_inputs() + 1 {
            return Err(Error::Schema("standardizer width does not match the inputs".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Standardized value of zero carbohydrate for the meal tracker.
    pub fn meal_zero(&self) -> f64 {
        self.standardizer.x(self.config.mech_inputs[0], 0.0)
    }

    /// Predicted observations for an episode in original units.
    pub fn predict(&self, episode: &Episode) -> Result<Vec<f64>> {
        Ok(self.counterfactual_rows(episode, None)?.swap_remove(0))
    }

    /// One trajectory per variant of `set`, in original units, all from the
    /// same context encoding.
    pub fn counterfactual(&self, episode: &Episode, set: &InterventionSet) -> Result<Vec<Vec<f64>>> {
        let mut rows = self.counterfactual_rows(episode, Some(set))?;
        rows.remove(0);
        Ok(rows)
    }

    fn counterfactual_rows(&self, episode: &Episode, set: Option<&InterventionSet>) -> Result<Vec<Vec<f64>>> {
        let e = self.standardizer.apply(episode);
        let s = set.map(|s| self.standardizer.apply_set(s));
        let batch = Batch::new(&self.config, &[&e], &[s.as_ref()], true, self.meal_zero())?;
        let tape = Tape::new();
        let y = rollout(&self.config, &self.params, &tape, &batch, false, None)?.value();
        Ok((0..y.rows()).map(|r| y.row_slice(r).iter().map(|v| self.standardizer.y_inv(*v)).collect()).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub fn predict(model: &TrainedModel, episode: &Episode) -> Result<Vec<f64>> {
    model.predict(episode)
}

pub fn counterfactual_simulate(
    model: &TrainedModel,
    episode: &Episode,
    set: &InterventionSet,
) -> Result<Vec<Vec<f64>>> {
    model.counterfactual(episode, set)
}

#[cfg(test)]
mod tests;
