//! Batched rollout on the tape.
//!
//! A batch holds `b` episodes and `R >= b` rollout rows: the factual future
//! of every episode followed by the counterfactual variants of those with an
//! intervention set. The context is encoded once per episode and the initial
//! state gathered onto the rows.

use super::config::{HybridConfig, InitMode, Variant};
use crate::autodiff::{LstmSpec, MlpSpec, ParamVector, Tape, Tensor, Var};
use crate::data::{Episode, InterventionSet};
use crate::error::{Error, Result};
use crate::mech::MealTracker;
use crate::rng::SeededRng;

/// An intervention set's rows inside a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SetRows {
    pub episode: usize,
    pub rows: Vec<usize>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// Context steps, each `b × (1 + n_x)`.
    pub ctx: Vec<Tensor>,
    pub y0: Vec<f64>,
    /// Source episode of each rollout row.
    pub rows: Vec<usize>,
    /// Future inputs per step, each `R × n_x`.
    pub x: Vec<Tensor>,
    /// Meal size per step, each `R × 1`, for models that track meals.
    pub meal: Option<Vec<Tensor>>,
    /// `b × q`.
    pub targets: Tensor,
    pub sets: Vec<SetRows>,
}

impl Batch {
    /// Builds a batch from standardized episodes. With `variants` false the
    /// intervention sets are ignored and only factual rows are rolled out.
    /// `meal_zero` is the standardized value of zero carbohydrate.
    pub fn new(
        cfg: &HybridConfig,
        episodes: &[&Episode],
        sets: &[Option<&InterventionSet>],
        variants: bool,
        meal_zero: f64,
    ) -> Result<Self> {
        let b = episodes.len();
        if b == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        let q = cfg.horizon;
        let nx = cfg.n_inputs();
        let t_ctx = episodes[0].context.len();
        for e in episodes {
            if e.horizon() != q || e.n_inputs() != nx {
                return Err(Error::Shape(format!(
                    "episode {} has horizon {} and {} inputs, model expects {q} and {nx}",
                    e.id,
                    e.horizon(),
                    e.n_inputs()
                )));
            }
            if e.context.len() != t_ctx {
                return Err(Error::Shape(format!("episode {} context length differs within batch", e.id)));
            }
        }
        let ctx = (0..t_ctx)
            .map(|t| Tensor::from_rows(&episodes.iter().map(|e| e.context[t].clone()).collect::<Vec<_>>()))
            .collect();
        let mut rows: Vec<usize> = (0..b).collect();
        let mut futures: Vec<&Vec<Vec<f64>>> = episodes.iter().map(|e| &e.future_x).collect();
        let mut set_rows = Vec::new();
        if variants {
            for (i, s) in sets.iter().enumerate() {
                let Some(s) = s else { continue };
                s.validate(q, nx)?;
                let start = rows.len();
                for v in &s.variants {
                    rows.push(i);
                    futures.push(v);
                }
                set_rows.push(SetRows { episode: i, rows: (start..rows.len()).collect(), label: s.true_label });
            }
        }
        let x: Vec<Tensor> =
            (0..q).map(|k| Tensor::from_rows(&futures.iter().map(|f| f[k].clone()).collect::<Vec<_>>())).collect();
        let meal = match cfg.mech {
            Some(m) if m.uses_meal() && cfg.variant.uses_mech() => {
                let col = cfg.mech_inputs[0];
                let mut out = vec![Tensor::zeros(rows.len(), 1); q];
                for (r, f) in futures.iter().enumerate() {
                    let mut tr = MealTracker::new(meal_zero);
                    for k in 0..q {
                        out[k].set(r, 0, tr.update(f[k][col], cfg.dt));
                    }
                }
                Some(out)
            }
            _ => None,
        };
        let targets = Tensor::from_rows(&episodes.iter().map(|e| e.targets.clone()).collect::<Vec<_>>());
        Ok(Self { ctx, y0: episodes.iter().map(|e| e.y0).collect(), rows, x, meal, targets, sets: set_rows })
    }

    pub fn n_episodes(&self) -> usize {
        self.y0.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Weight leaves recorded once per forward pass.
pub(crate) struct Leaves {
    beta: Option<Var>,
    f3: Option<(MlpSpec, Vec<(Var, Var)>)>,
    masked: Vec<(MlpSpec, Vec<(Var, Var)>)>,
    joint: Option<(MlpSpec, Vec<(Var, Var)>)>,
    a: Option<Var>,
    b: Option<Var>,
}

impl Leaves {
    pub(crate) fn record(cfg: &HybridConfig, p: &ParamVector, tape: &Tape) -> Result<Self> {
        let mlp = |spec: MlpSpec, prefix: &str| -> Result<(MlpSpec, Vec<(Var, Var)>)> {
            Ok((spec, spec.leaves(p, prefix, tape)?))
        };
        let mut lv = Leaves { beta: None, f3: None, masked: vec![], joint: None, a: None, b: None };
        if let (true, Some(m)) = (cfg.variant.uses_mech(), cfg.mech) {
            lv.beta = Some(p.leaf(tape, "mech.beta", 1, m.n_params())?);
        }
        match cfg.variant {
            Variant::Lp | Variant::Lpsc => {
                lv.f3 = Some(mlp(cfg.f3_spec(), "nn.f3")?);
                if cfg.variant == Variant::Lpsc {
                    for i in 0..cfg.n_states() {
                        lv.masked.push(mlp(cfg.closure_spec(i), &format!("nn.closure.s{i}"))?);
                    }
                }
                let d = cfg.latent_dim;
                lv.a = Some(p.leaf(tape, "latent.A", d, d)?);
                if !cfg.latent_inputs.is_empty() {
                    lv.b = Some(p.leaf(tape, "latent.B", cfg.latent_inputs.len(), d)?);
                }
            }
            Variant::Mnode => {
                for i in 0..cfg.n_states() {
                    lv.masked.push(mlp(cfg.masked_spec(i), &format!("nn.f1.s{i}"))?);
                }
            }
            Variant::Bnode => lv.joint = Some(mlp(cfg.joint_spec(), "nn.f1.joint")?),
            Variant::Mechanistic => {}
            Variant::Lstm => return Err(Error::Contract("the LSTM baseline has no vector field".into())),
        }
        Ok(lv)
    }
}

fn cols_of(x: &Var, idx: &[usize]) -> Vec<Var> {
    idx.iter().map(|&k| x.col(k)).collect()
}

/// Masked MLP bank: state `i` sees only its parents.
fn masked_field(
    cfg: &HybridConfig,
    bank: &[(MlpSpec, Vec<(Var, Var)>)],
    s: &[Var],
    x: &Var,
    training: bool,
    mut rng: Option<&mut SeededRng>,
) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(bank.len());
    for (i, (spec, w)) in bank.iter().enumerate() {
        let (ps, px) = cfg.parents(i);
        let mut parts: Vec<Var> = ps.iter().map(|&j| s[j].clone()).collect();
        parts.extend(cols_of(x, &px));
        let inp = Var::concat_cols(&parts);
        out.push(spec.forward_with(w, &inp, training, rng.as_deref_mut())?);
    }
    Ok(out)
}

/// One evaluation of the hybrid vector field. `s` holds `R × 1` state
/// columns, `z` the `R × d` latent, `x` the `R × n_x` inputs. Returns the
/// state derivative, the next latent and the effective mechanistic
/// parameters.
pub(crate) fn field_step(
    cfg: &HybridConfig,
    lv: &Leaves,
    s: &[Var],
    z: Option<&Var>,
    x: &Var,
    meal: Option<&Var>,
    training: bool,
    mut rng: Option<&mut SeededRng>,
) -> Result<(Vec<Var>, Option<Var>, Option<Var>)> {
    if s.len() != cfg.n_states() || x.cols() != cfg.n_inputs() {
        return Err(Error::Shape(format!(
            "field expects {} states and {} inputs, got {} and {}",
            cfg.n_states(),
            cfg.n_inputs(),
            s.len(),
            x.cols()
        )));
    }
    let mut beta_t = None;
    let ds = match cfg.variant {
        Variant::Mechanistic | Variant::Lp | Variant::Lpsc => {
            let mech = cfg.mech.expect("validated");
            let mut beta = lv.beta.clone().expect("recorded");
            if let (Some((spec, w)), Some(z)) = (&lv.f3, z) {
                beta = beta + spec.forward_with(w, z, training, rng.as_deref_mut())?;
            }
            let xin = cols_of(x, &cfg.mech_inputs);
            let d = match meal {
                Some(d) => d.clone(),
                None => x.constant_like(0.0),
            };
            let mut ds = mech.field(s, &xin, &d, &beta.columns())?;
            if cfg.variant == Variant::Lpsc && cfg.closure_w != 0.0 {
                let corr = masked_field(cfg, &lv.masked, s, x, training, rng.as_deref_mut())?;
                ds = ds.iter().zip(corr).map(|(a, c)| a + &c.scale(cfg.closure_w)).collect();
            }
            beta_t = Some(beta);
            ds
        }
        Variant::Mnode => masked_field(cfg, &lv.masked, s, x, training, rng.as_deref_mut())?,
        Variant::Bnode => {
            let (spec, w) = lv.joint.as_ref().expect("recorded");
            let mut parts = s.to_vec();
            parts.push(x.clone());
            spec.forward_with(w, &Var::concat_cols(&parts), training, rng)?.columns()
        }
        Variant::Lstm => return Err(Error::Contract("the LSTM baseline has no vector field".into())),
    };
    let z_next = match (z, &lv.a) {
        (Some(z), Some(a)) => {
            let mut zn = z.matmul(a);
            if let Some(b) = &lv.b {
                zn = zn + Var::concat_cols(&cols_of(x, &cfg.latent_inputs)).matmul(b);
            }
            Some(zn)
        }
        _ => None,
    };
    Ok((ds, z_next, beta_t))
}

/// Initial state columns and latent for the `b` episodes of a batch.
pub(crate) fn encode(
    cfg: &HybridConfig,
    p: &ParamVector,
    tape: &Tape,
    batch: &Batch,
    training: bool,
    mut rng: Option<&mut SeededRng>,
) -> Result<(Vec<Var>, Option<Var>)> {
    let y0 = tape.constant(Tensor::column(batch.y0.clone()));
    let enc = if cfg.uses_encoder() {
        let seq: Vec<Var> = batch.ctx.iter().map(|t| tape.constant(t.clone())).collect();
        Some(cfg.encoder_spec().forward(p, "encoder.lstm", &seq, None, 0.0, training, rng.as_deref_mut())?)
    } else {
        None
    };
    let out = cfg.output_state;
    match (cfg.variant, cfg.init) {
        (Variant::Lp | Variant::Lpsc, mode) => {
            let enc = enc.expect("latent variants encode");
            let z0 = enc.top_c().clone();
            let s0 = match mode {
                InitMode::Direct => vec![y0],
                InitMode::Encoded => {
                    let rest = cfg.mlp1_spec().forward(p, "encoder.mlp1", enc.top_h(), training, rng)?;
                    let mut s: Vec<Var> = rest.columns();
                    s.insert(out, y0);
                    s
                }
            };
            Ok((s0, Some(z0)))
        }
        (_, InitMode::Direct) => Ok((vec![y0], None)),
        (_, InitMode::Encoded) => {
            let enc = enc.expect("encoded");
            let mut s = enc.top_h().columns();
            s[out] = y0;
            Ok((s, None))
        }
    }
}

/// Forward-Euler integration of `q` steps from given initial columns,
/// returning the `R × q` output block.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate(
    cfg: &HybridConfig,
    lv: &Leaves,
    tape: &Tape,
    mut s: Vec<Var>,
    mut z: Option<Var>,
    x: &[Tensor],
    meal: Option<&[Tensor]>,
    training: bool,
    mut rng: Option<&mut SeededRng>,
) -> Result<Var> {
    let mut outs = Vec::with_capacity(x.len());
    for (k, xk) in x.iter().enumerate() {
        let xv = tape.constant(xk.clone());
        let d = meal.map(|m| tape.constant(m[k].clone()));
        let (ds, zn, _) = field_step(cfg, lv, &s, z.as_ref(), &xv, d.as_ref(), training, rng.as_deref_mut())?;
        s = s.iter().zip(&ds).map(|(si, di)| si + &di.scale(cfg.dt)).collect();
        z = zn;
        if !s.iter().all(Var::is_finite) || !z.as_ref().is_none_or(Var::is_finite) {
            return Err(Error::Divergence { step: k + 1 });
        }
        outs.push(s[cfg.output_state].clone());
    }
    Ok(Var::concat_cols(&outs))
}

/// Predicted `R × q` block for every rollout row of a batch.
pub fn rollout(
    cfg: &HybridConfig,
    p: &ParamVector,
    tape: &Tape,
    batch: &Batch,
    training: bool,
    mut rng: Option<&mut SeededRng>,
) -> Result<Var> {
    if cfg.variant == Variant::Lstm {
        return lstm_rollout(cfg, p, tape, batch, training, rng);
    }
    let (s0, z0) = encode(cfg, p, tape, batch, training, rng.as_deref_mut())?;
    let s0: Vec<Var> = s0.iter().map(|c| c.gather_rows(&batch.rows)).collect();
    let z0 = z0.map(|z| z.gather_rows(&batch.rows));
    let lv = Leaves::record(cfg, p, tape)?;
    integrate(cfg, &lv, tape, s0, z0, &batch.x, batch.meal.as_deref(), training, rng)
}

fn lstm_rollout(
    cfg: &HybridConfig,
    p: &ParamVector,
    tape: &Tape,
    batch: &Batch,
    training: bool,
    mut rng: Option<&mut SeededRng>,
) -> Result<Var> {
    let a = cfg.mlp.dropout;
    let seq: Vec<Var> = batch.ctx.iter().map(|t| tape.constant(t.clone())).collect();
    let enc = cfg.encoder_spec().forward(p, "encoder.lstm", &seq, None, a, training, rng.as_deref_mut())?;
    let h: Vec<Var> = enc.h.iter().map(|v| v.gather_rows(&batch.rows)).collect();
    let c: Vec<Var> = enc.c.iter().map(|v| v.gather_rows(&batch.rows)).collect();
    let xs: Vec<Var> = batch.x.iter().map(|t| tape.constant(t.clone())).collect();
    let dec = LstmSpec::new(cfg.encoder_layers, cfg.n_inputs(), cfg.latent_dim);
    let out = dec.forward(p, "nn.decoder", &xs, Some((&h, &c)), a, training, rng)?;
    let head = MlpSpec::linear(cfg.latent_dim, 1);
    let w = head.leaves(p, "nn.head", tape)?;
    let ys = out.outputs.iter().map(|o| head.forward_with(&w, o, false, None)).collect::<Result<Vec<_>>>()?;
    let y = Var::concat_cols(&ys);
    if !y.is_finite() {
        return Err(Error::Divergence { step: cfg.horizon });
    }
    Ok(y)
}
