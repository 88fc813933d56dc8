use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    collapse_scc, find_sccs, merge_candidates, merge_paths, shorten_candidates, shorten_path, DiGraph, ReductionStep,
};
use crate::error::{Error, Result};
use crate::harness::{train, Split, TrainConfig};
use crate::model::{HybridConfig, InitMode};

/// Scores a candidate graph; lower is better.
pub trait Evaluator: Sync {
    fn evaluate(&self, g: &DiGraph) -> Result<f64>;
}

/// An evaluator backed by a closure, for fixtures and tests.
pub struct ScriptedEvaluator<F>(pub F);

impl<F: Fn(&DiGraph) -> Result<f64> + Sync> Evaluator for ScriptedEvaluator<F> {
    fn evaluate(&self, g: &DiGraph) -> Result<f64> {
        (self.0)(g)
    }
}

/// Memoizes successful evaluations by canonical graph hash.
pub struct CachedEvaluator<E> {
    inner: E,
    cache: Mutex<HashMap<String, f64>>,
}

impl<E: Evaluator> CachedEvaluator<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<E: Evaluator> Evaluator for CachedEvaluator<E> {
    fn evaluate(&self, g: &DiGraph) -> Result<f64> {
        let key = g.canonical_hash();
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = self.inner.evaluate(g)?;
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }
}

/// Trains an MNODE masked by the candidate graph and returns its best
/// validation hybrid loss.
pub struct MnodeEvaluator {
    pub base: HybridConfig,
    pub train: TrainConfig,
    pub train_split: Split,
    pub val_split: Split,
}

impl MnodeEvaluator {
    /// Short, fixed-seed training at α = 0.6.
    pub fn new(base: HybridConfig, train_split: Split, val_split: Split, epochs: usize, seed: u64) -> Self {
        let train = TrainConfig { epochs, seed, alpha: 0.6, ..TrainConfig::default() };
        Self { base, train, train_split, val_split }
    }

    pub fn config_for(&self, g: &DiGraph) -> Result<HybridConfig> {
        let causal = g.to_causal(&self.base.input_names)?;
        let mut cfg = self.base.clone();
        cfg.output_state = causal.output_state;
        cfg.init = if causal.n_states() > 1 { InitMode::Encoded } else { InitMode::Direct };
        cfg.graph = Some(causal);
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Evaluator for MnodeEvaluator {
    fn evaluate(&self, g: &DiGraph) -> Result<f64> {
        let cfg = self.config_for(g)?;
        let (_, hist) = train(&cfg, &self.train_split, &self.val_split, &self.train)?;
        Ok(hist.best_val())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Collapse,
    Merge,
    Shorten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceConfig {
    /// Relative increase over the best loss so far that is still accepted.
    pub tolerance: f64,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self { tolerance: 0.10 }
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub phase: Phase,
    pub round: usize,
    pub candidate: ReductionStep,
    pub loss: Option<f64>,
    /// Best loss before this round.
    pub best: f64,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Reduction {
    pub graph: DiGraph,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub steps: Vec<ReductionStep>,
    pub audit: Vec<AuditEntry>,
}

impl Reduction {
    pub fn audit_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for e in &self.audit {
            s.push_str(&serde_json::to_string(e)?);
            s.push('\n');
        }
        Ok(s)
    }
}

fn candidates(phase: Phase, g: &DiGraph) -> Result<Vec<(ReductionStep, DiGraph)>> {
    let mut out = Vec::new();
    match phase {
        Phase::Collapse => {
            for scc in find_sccs(g).into_iter().filter(|c| c.len() > 1) {
                let next = collapse_scc(g, &scc)?;
                out.push((ReductionStep::CollapseScc { nodes: scc }, next));
            }
        }
        Phase::Merge => {
            for paths in merge_candidates(g) {
                if let Some(next) = merge_paths(g, &paths) {
                    out.push((ReductionStep::MergePaths { paths }, next));
                }
            }
        }
        Phase::Shorten => {
            for (path, node) in shorten_candidates(g) {
                if let Some(next) = shorten_path(g, &path, &node) {
                    out.push((ReductionStep::ShortenPath { path, node }, next));
                }
            }
        }
    }
    Ok(out)
}

/// Runs the collapse, merge and shorten phases in order. In each round all
/// candidates are evaluated and the lowest-loss one is adopted if its loss
/// is within `tolerance` of the best loss so far; a phase ends at the first
/// round with no such candidate.
pub fn reduce(g: &DiGraph, eval: &dyn Evaluator, cfg: &ReduceConfig) -> Result<Reduction> {
    if !(cfg.tolerance >= 0.0 && cfg.tolerance.is_finite()) {
        return Err(Error::Config(format!("tolerance must be non-negative, got {}", cfg.tolerance)));
    }
    let initial_loss = eval.evaluate(g)?;
    if !initial_loss.is_finite() {
        return Err(Error::Numeric(format!("starting graph scored {initial_loss}")));
    }
    let connected = g.connected_inputs();
    let mut cur = g.clone();
    let mut best = initial_loss;
    let mut steps = Vec::new();
    let mut audit = Vec::new();
    for phase in [Phase::Collapse, Phase::Merge, Phase::Shorten] {
        for round in 1.. {
            let cands = candidates(phase, &cur)?;
            if cands.is_empty() {
                break;
            }
            let losses: Vec<Result<f64>> = cands.par_iter().map(|(_, g)| eval.evaluate(g)).collect();
            let mut pick: Option<(usize, f64)> = None;
            for (i, l) in losses.iter().enumerate() {
                if let Ok(v) = l {
                    if v.is_finite() && pick.is_none_or(|(_, b)| *v < b) {
                        pick = Some((i, *v));
                    }
                }
            }
            let accepted = pick.filter(|&(_, v)| v <= (1.0 + cfg.tolerance) * best);
            for (i, ((step, _), l)) in cands.iter().zip(&losses).enumerate() {
                let (loss, error) = match l {
                    Ok(v) if v.is_finite() => (Some(*v), None),
                    Ok(v) => (None, Some(format!("non-finite loss {v}"))),
                    Err(e) => (None, Some(e.to_string())),
                };
                if let Some(e) = &error {
                    log::warn!("{phase:?} candidate {step} skipped: {e}");
                }
                audit.push(AuditEntry {
                    phase,
                    round,
                    candidate: step.clone(),
                    loss,
                    best,
                    accepted: accepted.is_some_and(|(a, _)| a == i),
                    error,
                });
            }
            let Some((i, v)) = accepted else { break };
            let (step, next) = cands.into_iter().nth(i).expect("index in range");
            if next.connected_inputs() != connected {
                return Err(Error::Internal(format!("step {step} disconnected an input from the output")));
            }
            log::info!("{phase:?} round {round}: adopted {step} (loss {v:.6}, best {best:.6})");
            best = best.min(v);
            cur = next;
            steps.push(step);
        }
    }
    Ok(Reduction { graph: cur, initial_loss, best_loss: best, steps, audit })
}
